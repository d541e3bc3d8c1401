#include <algorithm>
#include <set>

#include "support.hpp"

using namespace datacube;
using dctest::kFixtureCsv;

TEST(ParseCsv, FixtureHasOneIndividualTwoRows) {
  const Dataset ds = parse_csv(kFixtureCsv);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.individuals().size(), 1u);
  ASSERT_EQ(ds.numeric_columns().size(), 1u);
  EXPECT_EQ(ds.numeric_columns()[0], "glucose");
  EXPECT_TRUE(ds.has_region());
  EXPECT_EQ(ds.columns()[2].kind, ColumnKind::Region);
  EXPECT_EQ(ds.row(0).values[0], 98.5);
  EXPECT_EQ(ds.row(1).year, 2021);
  EXPECT_EQ(ds.individuals().at("p1"), (std::vector<std::size_t>{0, 1}));
}

TEST(ParseCsv, HeaderOnlyIsValidAndEmpty) {
  const Dataset ds = parse_csv("id,year,glucose\n");
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_TRUE(ds.individuals().empty());
}

TEST(ParseCsv, NonNumericValueNamesRowAndColumn) {
  const auto rep = validate_csv("id,year,zipcode,glucose\np1,2020,92093,abc\n");
  ASSERT_EQ(rep.issues.size(), 1u);
  EXPECT_FALSE(rep.dataset);
  EXPECT_EQ(rep.issues[0].code, ErrorCode::NonNumericValue);
  EXPECT_EQ(rep.issues[0].row, 1u);
  EXPECT_EQ(rep.issues[0].line, 2u);
  EXPECT_EQ(rep.issues[0].column, "glucose");
  EXPECT_DC_ERROR(parse_csv("id,year,zipcode,glucose\np1,2020,92093,abc\n"), ErrorCode::NonNumericValue);
}

TEST(ParseCsv, DefinedErrorClasses) {
  EXPECT_DC_ERROR(parse_csv(""), ErrorCode::MissingHeader);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose,glucose\n"), ErrorCode::DuplicateColumn);
  EXPECT_DC_ERROR(parse_csv("id,glucose\np1,1\n"), ErrorCode::MissingIdOrYearColumn);
  EXPECT_DC_ERROR(parse_csv("year,glucose\n2020,1\n"), ErrorCode::MissingIdOrYearColumn);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose\np1,2020,1\np1,2020,2\n"), ErrorCode::DuplicateIdYearPair);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose\n\"p1\",2020,1\n"), ErrorCode::QuotedValueUnsupported);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose\np1,2020\n"), ErrorCode::ColumnCountMismatch);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose\np1,1800,1\n"), ErrorCode::InvalidField);
  EXPECT_DC_ERROR(parse_csv("id,year,glucose\np1,2020,inf\n"), ErrorCode::NonNumericValue);
}

TEST(ParseCsv, MissingYearCitesHeaderLine) {
  const auto rep = validate_csv("id,glucose\np1,3\n");
  ASSERT_FALSE(rep.issues.empty());
  EXPECT_EQ(rep.issues[0].code, ErrorCode::MissingIdOrYearColumn);
  EXPECT_EQ(rep.issues[0].line, 1u);
  EXPECT_EQ(rep.issues[0].column, "year");
}

TEST(ParseCsv, ValidateCollectsEveryIssue) {
  const auto rep = validate_csv("id,year,g\np1,2020,x\np2,20x0,1\np3,2020,1,2\np4,2020,4\n");
  ASSERT_EQ(rep.issues.size(), 3u);
  EXPECT_EQ(rep.issues[0].line, 2u);
  EXPECT_EQ(rep.issues[1].line, 3u);
  EXPECT_EQ(rep.issues[2].code, ErrorCode::ColumnCountMismatch);
  EXPECT_EQ(rep.issues[2].line, 4u);
}

TEST(ParseCsv, CrlfAndTrailingNewlineAccepted) {
  const Dataset a = parse_csv("id,year,g\r\np1,2020,1\r\n");
  const Dataset b = parse_csv("id,year,g\np1,2020,1");
  EXPECT_EQ(a, b);
}

TEST(ExportCsv, FullRoundTrip) {
  const Dataset ds = parse_csv(kFixtureCsv);
  EXPECT_EQ(parse_csv(export_csv(ds)), ds);
}

TEST(ExportCsv, EmptySubsetIsHeaderOnly) {
  const Dataset ds = parse_csv(kFixtureCsv);
  EXPECT_EQ(export_csv(ds, std::vector<std::size_t>{}), "id,year,zipcode,glucose\n");
}

TEST(ExportCsv, SingleRowSubset) {
  const Dataset ds = parse_csv("id,year,g\na,2020,1\nb,2020,2.25\nc,2020,3\n");
  EXPECT_EQ(export_csv(ds, std::vector<std::size_t>{1}), "id,year,g\nb,2020,2.25\n");
}

TEST(ExportCsv, OutOfRangeIndex) {
  const Dataset ds = parse_csv(kFixtureCsv);
  EXPECT_DC_ERROR(export_csv(ds, std::vector<std::size_t>{2}), ErrorCode::IndexOutOfRange);
}

TEST(ExportCsv, FixpointOnGeneratedFiles) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.missing_year_probability = 0.2;
    spec.with_region = seed % 2 == 0;
    const Dataset ds = generate_dataset(spec);
    const std::string once = export_csv(ds);
    const Dataset again = parse_csv(once);
    EXPECT_EQ(again, ds);
    EXPECT_EQ(export_csv(again), once);
  }
}

TEST(ApplyFilters, UnconstrainedKeepsAll) {
  const Dataset ds = generate_dataset({});
  EXPECT_EQ(apply_filters(ds, FilterState{}), all_rows(ds));
}

TEST(ApplyFilters, DisjointYearRangeIsEmpty) {
  const Dataset ds = parse_csv("id,year,g\na,2020,1\nb,2020,2\n");
  FilterState f;
  f.year_range = {2030, 2031};
  EXPECT_TRUE(apply_filters(ds, f).empty());
}

TEST(ApplyFilters, InclusiveBounds) {
  const Dataset ds = parse_csv("id,year,glucose\na,2020,98.5\nb,2020,101.0\nc,2020,120.0\n");
  FilterState f;
  f.numeric_ranges["glucose"] = {100, 120};
  EXPECT_EQ(apply_filters(ds, f), (RowSet{1, 2}));
}

TEST(ApplyFilters, UnknownColumnAndInvalidRange) {
  const Dataset ds = parse_csv(kFixtureCsv);
  FilterState f;
  f.numeric_ranges["nope"] = {0, 1};
  EXPECT_DC_ERROR(apply_filters(ds, f), ErrorCode::UnknownColumn);
  FilterState g;
  g.numeric_ranges["glucose"] = {2, 1};
  EXPECT_DC_ERROR(validate_filter(ds, g), ErrorCode::InvalidRange);
}

TEST(ApplyFilters, RegionsRequireRegionColumn) {
  const Dataset ds = parse_csv("id,year,g\na,2020,1\n");
  FilterState f;
  f.regions = std::set<std::string>{"x"};
  EXPECT_DC_ERROR(validate_filter(ds, f), ErrorCode::NoRegionColumn);
}

TEST(ApplyFilters, MatchesBruteForceAndIsMonotone) {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const Dataset ds = generate_dataset(spec);
    FilterState f;
    const std::string col = ds.numeric_columns()[seed % ds.numeric_columns().size()];
    const std::size_t ci = ds.require_numeric(col);
    double lo = dctest::uniform(rng, 0, 150), hi = lo + dctest::uniform(rng, 0, 100);
    f.numeric_ranges[col] = {lo, hi};
    f.year_range = {2011, 2013};
    f.regions = std::set<std::string>{ds.row(0).region.value()};
    RowSet expect;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Record& r = ds.row(i);
      if (r.year >= 2011 && r.year <= 2013 && r.region == ds.row(0).region && r.values[ci] >= lo &&
          r.values[ci] <= hi) {
        expect.push_back(i);
      }
    }
    const RowSet got = apply_filters(ds, f);
    EXPECT_EQ(got, expect);
    FilterState tighter = f;
    tighter.numeric_ranges[col] = {lo + (hi - lo) / 4, hi - (hi - lo) / 4};
    const RowSet sub = apply_filters(ds, tighter);
    EXPECT_TRUE(std::includes(got.begin(), got.end(), sub.begin(), sub.end()));
  }
}

TEST(NormalizeChannel, AffineAndDegenerate) {
  EXPECT_EQ(normalize_channel(parse_csv("id,year,v\na,2020,10\nb,2020,20\nc,2020,30\n"), "v"),
            (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(normalize_channel(parse_csv("id,year,v\na,2020,7\nb,2020,7\n"), "v"), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(normalize_channel(parse_csv("id,year,v\na,2020,-1\nb,2020,0\nc,2020,3\n"), "v"),
            (std::vector<double>{0, 0.25, 1}));
  EXPECT_DC_ERROR(normalize_channel(parse_csv(kFixtureCsv), "zipcode"), ErrorCode::UnknownColumn);
}

TEST(NormalizeChannel, BoundedAndOrderPreserving) {
  const Dataset ds = generate_dataset({});
  for (const auto& col : ds.numeric_columns()) {
    const auto t = normalize_channel(ds, col);
    const std::size_t ci = ds.require_numeric(col);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      EXPECT_GE(t[i], 0.0);
      EXPECT_LE(t[i], 1.0);
      for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.row(i).values[ci] <= ds.row(j).values[ci]) EXPECT_LE(t[i], t[j]);
      }
    }
  }
}

TEST(ProjectPoints, SharedChannel) {
  const Dataset ds = parse_csv("id,year,v\na,2020,0\nb,2020,10\n");
  const DimensionMapping m{"v", "v", "v", "v", "v", false};
  const auto pts = project_points(ds, m, all_rows(ds));
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (NormalizedPoint{0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(pts[1], (NormalizedPoint{1, 1, 1, 1, 1, 1}));
  EXPECT_TRUE(project_points(ds, m, RowSet{}).empty());
}

TEST(ProjectPoints, ComposesNormalizeChannel) {
  const Dataset ds = parse_csv("id,year,a,b,c\np,2020,1,5,9\nq,2020,2,3,7\nr,2020,4,4,8\n");
  const DimensionMapping m{"a", "b", "c", "b", "a", false};
  const auto na = normalize_channel(ds, "a"), nb = normalize_channel(ds, "b"), nc = normalize_channel(ds, "c");
  const auto pts = project_points(ds, m, RowSet{0, 2});
  ASSERT_EQ(pts.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t i = pts[k].row_index;
    EXPECT_EQ(pts[k].x, na[i]);
    EXPECT_EQ(pts[k].y, nb[i]);
    EXPECT_EQ(pts[k].z, nc[i]);
    EXPECT_EQ(pts[k].color, nb[i]);
    EXPECT_EQ(pts[k].size, na[i]);
  }
  EXPECT_DC_ERROR(validate_mapping(ds, DimensionMapping{"a", "b", "zz", "a", "a", false}), ErrorCode::UnknownColumn);
}

TEST(BuildTraces, OrderingAndFilterGaps) {
  const Dataset ds = parse_csv("id,year,v\np,2023,4\np,2020,1\np,2022,3\np,2021,2\nq,2020,5\n");
  DimensionMapping m{"v", "v", "v", "v", "v", true};
  auto traces = build_traces(ds, m, all_rows(ds));
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_EQ(traces[0].individual_id, "p");
  ASSERT_EQ(traces[0].vertices.size(), 4u);
  for (std::size_t k = 1; k < 4; ++k) {
    EXPECT_LT(ds.row(traces[0].vertices[k - 1].row_index).year, ds.row(traces[0].vertices[k].row_index).year);
  }
  FilterState f;
  f.year_range = {2020, 2022};
  RowSet visible;
  for (auto i : apply_filters(ds, f)) {
    if (ds.row(i).year != 2021) visible.push_back(i);
  }
  traces = build_traces(ds, m, visible);
  ASSERT_EQ(traces.size(), 1u);
  ASSERT_EQ(traces[0].vertices.size(), 2u);
  EXPECT_EQ(ds.row(traces[0].vertices[0].row_index).year, 2020);
  EXPECT_EQ(ds.row(traces[0].vertices[1].row_index).year, 2022);
  m.traces_enabled = false;
  EXPECT_TRUE(build_traces(ds, m, all_rows(ds)).empty());
}

TEST(BuildTraces, SingleRowIndividualsYieldNothing) {
  const Dataset ds = parse_csv("id,year,v\na,2020,1\nb,2020,2\n");
  EXPECT_TRUE(build_traces(ds, DimensionMapping{"v", "v", "v", "v", "v", true}, all_rows(ds)).empty());
}

TEST(Colormap, ControlPoints) {
  EXPECT_EQ(colormap(0.0), (Rgb{0, 0, 255}));
  EXPECT_EQ(colormap(1.0), (Rgb{255, 0, 0}));
  EXPECT_EQ(colormap(0.5), (Rgb{128, 255, 0}));
  EXPECT_EQ(colormap(1.0 / 3.0), (Rgb{0, 255, 0}));
  EXPECT_EQ(colormap(2.0 / 3.0), (Rgb{255, 255, 0}));
  EXPECT_EQ(colormap(-3.0), colormap(0.0));
  EXPECT_EQ(colormap(7.0), colormap(1.0));
}

TEST(Colormap, ContinuousAtJoints) {
  for (double joint : {1.0 / 3.0, 2.0 / 3.0}) {
    const auto below = colormap_exact(std::nextafter(joint, 0.0));
    const auto above = colormap_exact(std::nextafter(joint, 1.0));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(below[c], above[c], 1e-9);
  }
}

TEST(RecordDetail, EchoAndFormatting) {
  const Dataset ds = parse_csv(kFixtureCsv);
  const auto d = record_detail(ds, 0);
  const std::vector<std::pair<std::string, std::string>> expect{
      {"id", "p1"}, {"year", "2020"}, {"zipcode", "92093"}, {"glucose", "98.5"}};
  EXPECT_EQ(d, expect);
  EXPECT_DC_ERROR(record_detail(ds, 99), ErrorCode::IndexOutOfRange);
  const Dataset long_value = parse_csv("id,year,g\np,2020,98.4999999\n");
  EXPECT_EQ(record_detail(long_value, 0)[2].second, "98.5000");
}

TEST(Watchlist, AddIsIdempotentAndExportMatches) {
  const Dataset ds = parse_csv("id,year,g\np1,2020,1\np2,2020,2\np1,2021,3\n");
  Watchlist w;
  w = watchlist_add(w, ds, "p1", 5);
  w = watchlist_add(w, ds, "p1", 6);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w.entries()[0].created_at_ms, 5);
  EXPECT_DC_ERROR(watchlist_add(w, ds, "zz", 0), ErrorCode::UnknownIndividual);
  const std::string text = watchlist_export(w, ds);
  EXPECT_EQ(text, export_csv(ds, std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(watchlist_export(Watchlist{}, ds), "id,year,g\n");
  EXPECT_TRUE(w.erase("p1"));
  EXPECT_FALSE(w.erase("p1"));
}

TEST(ContentHash, StableAndSensitive) {
  const Dataset a = parse_csv(kFixtureCsv);
  const Dataset b = parse_csv("id,year,zipcode,glucose\np1,2020,92093,98.5\np1,2021,92093,101.5\n");
  EXPECT_EQ(content_hash(a), content_hash(parse_csv(export_csv(a))));
  EXPECT_NE(content_hash(a), content_hash(b));
}

TEST(Synthetic, DeterministicAndShaped) {
  SyntheticSpec spec;
  spec.individuals = 50;
  spec.years = 3;
  EXPECT_EQ(generate_dataset(spec), generate_dataset(spec));
  const Dataset ds = generate_dataset(spec);
  EXPECT_EQ(ds.size(), 150u);
  EXPECT_EQ(ds.individuals().size(), 50u);
  spec.missing_year_probability = 0.5;
  const Dataset sparse = generate_dataset(spec);
  EXPECT_EQ(sparse.individuals().size(), 50u);
  EXPECT_LT(sparse.size(), 150u);
}
