#include "datacube/localization.hpp"

#include <fstream>
#include <sstream>

#include "datacube/error.hpp"

namespace datacube {

bool is_language_code(std::string_view code) noexcept {
  return code.size() == 2 && code[0] >= 'a' && code[0] <= 'z' && code[1] >= 'a' && code[1] <= 'z';
}

bool is_text_key(std::string_view key) noexcept {
  if (key.empty()) return false;
  bool segment_start = true;
  for (char c : key) {
    if (c == '.') {
      if (segment_start) return false;
      segment_start = true;
      continue;
    }
    const bool alpha = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    const bool digit = c >= '0' && c <= '9';
    if (!(alpha || digit || c == '_')) return false;
    if (segment_start && digit) return false;
    segment_start = false;
  }
  return !segment_start;
}

TranslationTable::TranslationTable() : languages_{"en", "ja"} {}

TranslationTable TranslationTable::parse(std::string_view text) {
  TranslationTable table;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    if (line.empty() || line.front() == '#') continue;

    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw Error(ErrorCode::BadConfig,
                  "translation line " + std::to_string(line_no) + ": expected key<TAB>lang<TAB>text");
    }
    const std::string_view key = line.substr(0, t1);
    const std::string_view lang = line.substr(t1 + 1, t2 - t1 - 1);
    if (!is_text_key(key)) {
      throw Error(ErrorCode::BadConfig,
                  "translation line " + std::to_string(line_no) + ": bad key `" + std::string(key) + "`");
    }
    if (!is_language_code(lang)) {
      throw Error(ErrorCode::BadConfig, "translation line " + std::to_string(line_no) +
                                            ": bad language `" + std::string(lang) + "`");
    }
    table.add_language(std::string(lang));
    table.set(std::string(key), std::string(lang), std::string(line.substr(t2 + 1)));
  }
  return table;
}

TranslationTable TranslationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

TranslationTable TranslationTable::bundled() { return parse(bundled_translation_source()); }

std::optional<std::string> TranslationTable::find(std::string_view key, std::string_view lang) const {
  auto k = entries_.find(key);
  if (k == entries_.end()) return std::nullopt;
  auto l = k->second.find(lang);
  if (l == k->second.end()) return std::nullopt;
  return l->second;
}

void TranslationTable::set(std::string key, std::string lang, std::string text) {
  entries_[std::move(key)].insert_or_assign(std::move(lang), std::move(text));
}

bool TranslationTable::erase(std::string_view key, std::string_view lang) {
  auto k = entries_.find(key);
  if (k == entries_.end()) return false;
  auto l = k->second.find(lang);
  if (l == k->second.end()) return false;
  k->second.erase(l);
  if (k->second.empty()) entries_.erase(k);
  return true;
}

std::size_t TranslationTable::entry_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [key, langs] : entries_) n += langs.size();
  return n;
}

void TranslationTable::add_language(std::string lang) { languages_.insert(std::move(lang)); }

std::vector<std::string> TranslationTable::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [key, langs] : entries_) out.push_back(key);
  return out;
}

std::vector<MissingTranslation> completeness_check(const TranslationTable& table) {
  std::vector<MissingTranslation> missing;
  for (const auto& key : table.keys()) {
    for (const auto& lang : table.languages()) {
      if (!table.find(key, lang)) missing.push_back({key, lang});
    }
  }
  return missing;
}

Localizer::Localizer() : Localizer(TranslationTable::bundled()) {}

Localizer::Localizer(TranslationTable table) : table_(std::move(table)) {}

std::string Localizer::translate(std::string_view key, std::string_view lang) const {
  {
    std::shared_lock lock(mutex_);
    if (auto hit = table_.find(key, lang)) return *std::move(hit);
    if (!provider_) {
      if (auto en = table_.find(key, kReferenceLanguage)) return *std::move(en);
    }
  }
  std::unique_lock lock(mutex_);
  if (auto hit = table_.find(key, lang)) return *std::move(hit);
  if (provider_) {
    std::optional<std::string> provided;
    try {
      provided = provider_(key, lang);
    } catch (...) {
      provided.reset();
    }
    if (provided) {
      table_.set(std::string(key), std::string(lang), *provided);
      return *std::move(provided);
    }
  }
  if (auto en = table_.find(key, kReferenceLanguage)) return *std::move(en);
  diagnostics_.push_back({std::string(key), std::string(lang)});
  return std::string(key);
}

void Localizer::register_provider(TranslationProvider provider) {
  std::unique_lock lock(mutex_);
  provider_ = std::move(provider);
}

std::vector<MissingTranslation> Localizer::diagnostics() const {
  std::shared_lock lock(mutex_);
  return diagnostics_;
}

TranslationTable Localizer::table() const {
  std::shared_lock lock(mutex_);
  return table_;
}

}  // namespace datacube
