#pragma once

// Per-client text lookup. Language choice is a local preference and never
// enters shared session state.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace datacube {

using LanguageCode = std::string;

inline constexpr std::string_view kReferenceLanguage = "en";

// Two lowercase ASCII letters.
bool is_language_code(std::string_view code) noexcept;
// Dot-separated ASCII identifiers, e.g. "menu.export".
bool is_text_key(std::string_view key) noexcept;

class TranslationTable {
 public:
  // Supported set starts as {en, ja}.
  TranslationTable();

  // `key<TAB>lang<TAB>text` per line; blank lines and lines starting with '#'
  // are skipped. Throws BadConfig naming the offending line.
  static TranslationTable parse(std::string_view text);
  // Throws IoError or BadConfig.
  static TranslationTable load(const std::filesystem::path& path);
  // The table compiled into the library.
  static TranslationTable bundled();

  std::optional<std::string> find(std::string_view key, std::string_view lang) const;
  void set(std::string key, std::string lang, std::string text);
  bool erase(std::string_view key, std::string_view lang);

  void add_language(std::string lang);
  const std::set<std::string>& languages() const noexcept { return languages_; }
  // Every key with an entry in any language, sorted.
  std::vector<std::string> keys() const;
  std::size_t entry_count() const noexcept;

 private:
  // key -> language -> text
  std::map<std::string, std::map<std::string, std::string, std::less<>>, std::less<>> entries_;
  std::set<std::string> languages_;
};

struct MissingTranslation {
  std::string key;
  std::string language;

  bool operator==(const MissingTranslation&) const = default;
};

// Every (key, language) pair absent for a supported language, ordered by
// key then language.
std::vector<MissingTranslation> completeness_check(const TranslationTable& table);

// Consulted on a table miss; returning nothing (or throwing) falls through
// to the reference language.
using TranslationProvider =
    std::function<std::optional<std::string>(std::string_view key, std::string_view lang)>;

// Thread-safe front end: concurrent reads, provider results cached under an
// exclusive lock.
class Localizer {
 public:
  Localizer();
  explicit Localizer(TranslationTable table);

  // Table entry, then provider, then the reference language, then the key
  // itself (recording a MissingTranslation diagnostic). Never throws.
  std::string translate(std::string_view key, std::string_view lang) const;

  void register_provider(TranslationProvider provider);

  std::vector<MissingTranslation> diagnostics() const;
  TranslationTable table() const;

 private:
  mutable std::shared_mutex mutex_;
  mutable TranslationTable table_;
  TranslationProvider provider_;
  mutable std::vector<MissingTranslation> diagnostics_;
};

std::string_view bundled_translation_source() noexcept;

}  // namespace datacube
