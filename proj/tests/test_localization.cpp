#include <atomic>
#include <fstream>
#include <thread>

#include "datacube/localization.hpp"
#include "support.hpp"

using namespace datacube;

TEST(Localizer, BundledLookups) {
  const Localizer loc;
  EXPECT_EQ(loc.translate("menu.export", "en"), "Export");
  EXPECT_EQ(loc.translate("menu.export", "ja"), "エクスポート");
  EXPECT_TRUE(loc.diagnostics().empty());
}

TEST(Localizer, UnknownKeyEchoesAndRecords) {
  const Localizer loc;
  EXPECT_EQ(loc.translate("menu.teleport", "ja"), "menu.teleport");
  EXPECT_EQ(loc.diagnostics(), (std::vector<MissingTranslation>{{"menu.teleport", "ja"}}));
}

TEST(Localizer, MissingLanguageFallsBackToReference) {
  TranslationTable t;
  t.set("menu.close", "en", "Close");
  const Localizer loc(t);
  EXPECT_EQ(loc.translate("menu.close", "ja"), "Close");
  EXPECT_EQ(loc.translate("menu.close", "de"), "Close");
  EXPECT_TRUE(loc.diagnostics().empty());
}

TEST(Localizer, ProviderResultIsCached) {
  TranslationTable t;
  t.set("menu.close", "en", "Close");
  Localizer loc(t);
  std::atomic<int> calls{0};
  loc.register_provider([&](std::string_view key, std::string_view lang) -> std::optional<std::string> {
    ++calls;
    if (lang == "fr") return "Fermer";
    (void)key;
    return std::nullopt;
  });
  EXPECT_EQ(loc.translate("menu.close", "fr"), "Fermer");
  EXPECT_EQ(loc.translate("menu.close", "fr"), "Fermer");
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(loc.translate("menu.close", "ko"), "Close");
}

TEST(Localizer, ThrowingProviderFallsThrough) {
  TranslationTable t;
  t.set("menu.close", "en", "Close");
  Localizer loc(t);
  loc.register_provider([](std::string_view, std::string_view) -> std::optional<std::string> {
    throw std::runtime_error("offline");
  });
  EXPECT_EQ(loc.translate("menu.close", "fr"), "Close");
}

TEST(Localizer, ConcurrentReaders) {
  Localizer loc;
  std::atomic<int> calls{0};
  loc.register_provider([&](std::string_view, std::string_view) -> std::optional<std::string> {
    ++calls;
    return "x";
  });
  std::vector<std::thread> threads;
  std::atomic<int> wrong{0};
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&] {
      for (int k = 0; k < 500; ++k) {
        if (loc.translate("menu.export", "ja") != "エクスポート") ++wrong;
        if (loc.translate("menu.export", "fr") != "x") ++wrong;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(wrong.load(), 0);
  EXPECT_EQ(calls.load(), 1);
}

TEST(TranslationTable, BundledIsComplete) {
  const auto table = TranslationTable::bundled();
  EXPECT_EQ(table.languages(), (std::set<std::string>{"en", "ja"}));
  EXPECT_GT(table.entry_count(), 0u);
  EXPECT_TRUE(completeness_check(table).empty());
}

TEST(TranslationTable, CompletenessReportsGaps) {
  auto table = TranslationTable::bundled();
  ASSERT_TRUE(table.erase("menu.export", "ja"));
  EXPECT_EQ(completeness_check(table), (std::vector<MissingTranslation>{{"menu.export", "ja"}}));

  auto with_de = TranslationTable::bundled();
  with_de.add_language("de");
  const auto missing = completeness_check(with_de);
  EXPECT_EQ(missing.size(), with_de.keys().size());
  for (const auto& m : missing) EXPECT_EQ(m.language, "de");
}

TEST(TranslationTable, Parse) {
  const auto t = TranslationTable::parse("# comment\n\nmenu.close\tja\t閉じる\nmenu.close\ten\tClose\n");
  EXPECT_EQ(t.find("menu.close", "ja"), "閉じる");
  EXPECT_EQ(t.entry_count(), 2u);
  EXPECT_DC_ERROR(TranslationTable::parse("menu.close\tja\n"), ErrorCode::BadConfig);
  EXPECT_DC_ERROR(TranslationTable::parse("menu close\tja\tx\n"), ErrorCode::BadConfig);
  EXPECT_DC_ERROR(TranslationTable::parse("menu.close\tjapanese\tx\n"), ErrorCode::BadConfig);
}

TEST(TranslationTable, LoadMatchesBundledSource) {
  dctest::TempDir dir;
  const auto p = dir.path() / "t.tsv";
  std::ofstream(p) << bundled_translation_source();
  const auto loaded = TranslationTable::load(p);
  EXPECT_EQ(completeness_check(loaded), completeness_check(TranslationTable::bundled()));
  EXPECT_EQ(loaded.keys(), TranslationTable::bundled().keys());
  EXPECT_DC_ERROR(TranslationTable::load(dir.path() / "missing.tsv"), ErrorCode::IoError);
}

TEST(LanguageCodes, Shape) {
  EXPECT_TRUE(is_language_code("en"));
  EXPECT_FALSE(is_language_code("EN"));
  EXPECT_FALSE(is_language_code("eng"));
  EXPECT_TRUE(is_text_key("menu.export"));
  EXPECT_FALSE(is_text_key("menu..export"));
  EXPECT_FALSE(is_text_key(""));
}
