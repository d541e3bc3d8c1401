#include <fstream>
#include <sstream>

#include <boost/asio.hpp>

#include "cli.hpp"
#include "support.hpp"

using namespace datacube;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "datacube");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path write(const std::filesystem::path& p, std::string_view text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"fly"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"simulate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"serve", "--port", "banana"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(ErrorCode::PortInUse), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::BadConfig), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::NonNumericValue), 1);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::DivergenceDetected), 1);
}

TEST(Cli, ValidateGoodFile) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "ok.csv", dctest::kFixtureCsv);
  const auto r = run_cli({"validate", f.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("columns 4\n"), std::string::npos);
  EXPECT_NE(r.out.find("  glucose Numeric\n"), std::string::npos);
  EXPECT_NE(r.out.find("rows 2\n"), std::string::npos);
  EXPECT_NE(r.out.find("individuals 1\n"), std::string::npos);
  EXPECT_NE(r.out.find("content_hash " + content_hash(parse_csv(dctest::kFixtureCsv))), std::string::npos);
  EXPECT_TRUE(r.out.ends_with("valid\n"));
}

TEST(Cli, ValidateBadFile) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "bad.csv", "id,year,glucose\np1,2020,abc\np2,2020,1\np2,2020,2\n");
  const auto r = run_cli({"validate", f.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 2: NonNumericValue [glucose]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("line 4: DuplicateIdYearPair"), std::string::npos) << r.out;
  EXPECT_TRUE(r.out.ends_with("invalid\n"));
  EXPECT_EQ(run_cli({"validate", (dir.path() / "none.csv").string()}).code, 1);
}

TEST(Cli, ExportSubset) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "in.csv",
                       "id,year,glucose\np1,2020,1\np1,2021,2\np2,2020,3\np3,2021,4\n");
  auto r = run_cli({"export", f.string(), "--individuals", "p1,p3", "--year-from", "2021"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "id,year,glucose\np1,2021,2\np3,2021,4\n");
  const auto out = dir.path() / "out.csv";
  r = run_cli({"export", f.string(), "-o", out.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(slurp(out), slurp(f));
  EXPECT_EQ(run_cli({"export", f.string(), "--individuals", "p9"}).code, 1);
  EXPECT_EQ(run_cli({"export", f.string(), "--year-from", "2022", "--year-to", "2020"}).code, 1);
}

TEST(Cli, SimulateReportsAndSeedOverride) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "s.scn", "participants 2\nrandom_ops 40\nsettle_ms 1000\nseed 1\n");
  const auto a = run_cli({"simulate", "--scenario", f.string(), "--seed", "77"});
  EXPECT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("seed 77\n"), std::string::npos);
  EXPECT_NE(a.out.find("result PASS"), std::string::npos);
  EXPECT_NE(a.err.find("wall_clock"), std::string::npos);
  EXPECT_EQ(run_cli({"simulate", "--scenario", f.string(), "--seed", "77"}).out, a.out);
}

TEST(Cli, SimulateDivergenceExitsOne) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "s.scn",
                       "participants 2\nrandom_ops 0\nsettle_ms 500\nop 2000 0 viz bar\ncorrupt 1 2\n");
  const auto r = run_cli({"simulate", "--scenario", f.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("DivergenceDetected"), std::string::npos);
  EXPECT_NE(r.out.find("divergence bot1 first_seq 2"), std::string::npos);
}

TEST(Cli, SimulateParseErrorExitsOne) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "s.scn", "participants two\n");
  const auto r = run_cli({"simulate", "--scenario", f.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ScenarioParseError"), std::string::npos);
}

TEST(Cli, SimulateOverRealSockets) {
  dctest::TempDir dir;
  const auto f = write(dir.path() / "s.scn", "participants 2\nobservers 1\nrandom_ops 60\nsettle_ms 3000\n");
  const auto r = run_cli({"simulate", "--scenario", f.string(), "--real-sockets"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("ops/s wall"), std::string::npos);
  const auto g = write(dir.path() / "t.scn", "participants 2\nleave 1 100\n");
  EXPECT_EQ(run_cli({"simulate", "--scenario", g.string(), "--real-sockets"}).code, 1);
}

TEST(Cli, LangTableIsChecked) {
  dctest::TempDir dir;
  const auto scn = write(dir.path() / "s.scn", "participants 2\nlanguages en ja\nrandom_ops 10\nsettle_ms 500\n");
  const auto table = write(dir.path() / "t.tsv", "menu.snapshot\ten\tSnap\nmenu.snapshot\tja\tスナップ\n");
  EXPECT_EQ(run_cli({"simulate", "--scenario", scn.string(), "--lang-table", table.string()}).code, 0);
  const auto broken = write(dir.path() / "b.tsv", "menu.snapshot\n");
  EXPECT_EQ(run_cli({"simulate", "--scenario", scn.string(), "--lang-table", broken.string()}).code, 2);
}

TEST(Cli, ServeWritesArtifacts) {
  dctest::TempDir dir;
  const auto csv = write(dir.path() / "d.csv", dctest::kFixtureCsv);
  const auto data = dir.path() / "data";
  const auto r = run_cli({"serve", "--port", "0", "--ws-port", "0", "--discovery-port", "0", "--bind", "127.0.0.1",
                          "--session", "s1", "--dataset", csv.string(), "--data-dir", data.string(), "--run-for-ms",
                          "200"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("session s1 tcp "), std::string::npos);
  EXPECT_EQ(slurp(data / "s1" / "watchlist.csv"), "id,year,zipcode,glucose\n");
  EXPECT_NE(r.out.find("stopped at seq 1"), std::string::npos);
}

TEST(Cli, ServePortInUseExitsTwo) {
  boost::asio::io_context io;
  boost::asio::ip::tcp::acceptor busy(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  const auto port = std::to_string(busy.local_endpoint().port());
  const auto r = run_cli({"serve", "--port", port, "--ws-port", "0", "--discovery-port", "0", "--bind", "127.0.0.1",
                          "--run-for-ms", "100"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("PortInUse"), std::string::npos);
}
