#include "bugprio/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bugprio/error.hpp"

namespace bugprio {
namespace {

#include "stopwords_data.inc"

// Decodes one UTF-8 sequence at s[i]. Returns the code point and its byte
// length, or length 1 with code point 0xFFFD for malformed input.
std::pair<char32_t, std::size_t> decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (i + len > s.size()) return {0xFFFD, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
  if (cp == 0xFFFD) return false;
  if (cp < 0xC0) return false;  // Latin-1 controls, punctuation, symbols
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x2190 && cp <= 0x2BFF) return false;  // arrows, math, box drawing
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp == 0xFEFF) return false;
  return true;
}

// ASCII and Latin-1 uppercase letters only.
std::string lowercase(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto b = static_cast<unsigned char>(out[i]);
    if (b < 0x80) {
      out[i] = static_cast<char>(std::tolower(b));
    } else if (b == 0xC3 && i + 1 < out.size()) {
      auto n = static_cast<unsigned char>(out[i + 1]);
      if (n >= 0x80 && n <= 0x9E && n != 0x97) out[i + 1] = static_cast<char>(n + 0x20);
      ++i;
    }
  }
  return out;
}

std::size_t codepoint_count(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const std::string& field_text(const BugReport& r, TextField f) {
  switch (f) {
    case TextField::Summary: return r.summary;
    case TextField::Description: return r.description;
    case TextField::Product: return r.product;
    case TextField::Component: return r.component;
  }
  return r.summary;
}

}  // namespace

std::string_view to_string(TextField f) {
  switch (f) {
    case TextField::Summary: return "summary";
    case TextField::Description: return "description";
    case TextField::Product: return "product";
    case TextField::Component: return "component";
  }
  return "summary";
}

std::optional<TextField> parse_text_field(std::string_view text) {
  for (auto f : {TextField::Summary, TextField::Description, TextField::Product, TextField::Component}) {
    if (to_string(f) == text) return f;
  }
  if (text == "title") return TextField::Summary;
  return std::nullopt;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = [] {
    std::istringstream in{std::string(kDefaultStopwords)};
    return load_stopwords(in);
  }();
  return words;
}

std::unordered_set<std::string> load_stopwords(std::istream& in) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim(line);
    if (w.empty() || w.front() == '#') continue;
    words.insert(lowercase(w));
  }
  return words;
}

TokenizerConfig TokenizerConfig::defaults() {
  TokenizerConfig c;
  c.stopwords = default_stopwords();
  return c;
}

TokenizerConfig TokenizerConfig::raw() {
  TokenizerConfig c;
  c.lowercase = false;
  c.remove_stopwords = false;
  return c;
}

void TokenizerConfig::validate() const {
  if (fields_used.empty()) throw Error(ErrorKind::kConfig, "tokenizer fields_used is empty");
  if (min_token_length < 1) throw Error(ErrorKind::kConfig, "min_token_length must be >= 1");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (std::size_t i = 0; i < text.size();) {
    auto [cp, len] = decode_utf8(text, i);
    if (is_word_char(cp)) {
      current.append(text.substr(i, len));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
    i += len;
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::string> tokenize(const BugReport& report, const TokenizerConfig& config) {
  std::vector<std::string> tokens;
  for (TextField f : config.fields_used) {
    const std::string& text = field_text(report, f);
    if (f == TextField::Product || f == TextField::Component) {
      auto value = trim(text);
      if (value.empty()) continue;
      std::string token = std::string(to_string(f)) + ":" +
                          (config.lowercase ? lowercase(value) : std::string(value));
      std::replace_if(token.begin(), token.end(),
                      [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }, '_');
      tokens.push_back(std::move(token));
      continue;
    }
    for (auto& word : split_words(text)) {
      if (config.lowercase) word = lowercase(word);
      if (codepoint_count(word) < config.min_token_length) continue;
      if (config.remove_stopwords) {
        const bool stop = config.lowercase ? config.stopwords.count(word) > 0
                                           : config.stopwords.count(lowercase(word)) > 0;
        if (stop) continue;
      }
      tokens.push_back(std::move(word));
    }
  }
  return tokens;
}

std::string raw_classification_text(const BugReport& report) {
  return report.summary + "\n" + report.description + "\n" + report.component;
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> docs, std::size_t min_count) {
  std::unordered_map<std::string, std::uint64_t> df;
  std::unordered_set<std::string_view> seen;
  for (const auto& doc : docs) {
    seen.clear();
    for (const auto& tok : doc) {
      if (seen.insert(tok).second) ++df[tok];
    }
  }
  Vocabulary v;
  v.min_count_ = std::max<std::size_t>(min_count, 1);
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, n] : df) {
    if (n >= v.min_count_) kept.emplace_back(tok, n);
  }
  if (kept.empty()) throw Error(ErrorKind::kInvalidArgument, "empty vocabulary");
  std::sort(kept.begin(), kept.end());
  v.tokens_.reserve(kept.size());
  v.doc_freq_.reserve(kept.size());
  for (auto& [tok, n] : kept) {
    v.tokens_.push_back(tok);
    v.doc_freq_.push_back(n);
  }
  v.rebuild_index();
  return v;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<std::uint32_t>(i));
  }
}

std::int64_t Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

void Vocabulary::save(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["format"] = "bugprio-vocabulary";
  header["version"] = 1;
  header["min_count"] = min_count_;
  header["size"] = tokens_.size();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    nlohmann::ordered_json row;
    row["token"] = tokens_[i];
    row["index"] = i;
    row["doc_freq"] = doc_freq_[i];
    out << row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kInput, "vocabulary: missing header");
  Vocabulary v;
  std::size_t expected = 0;
  try {
    auto header = nlohmann::json::parse(line);
    if (header.at("format") != "bugprio-vocabulary" || header.at("version") != 1) {
      throw Error(ErrorKind::kInput, "vocabulary: unsupported format");
    }
    v.min_count_ = header.at("min_count").get<std::size_t>();
    expected = header.at("size").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto row = nlohmann::json::parse(line);
      if (row.at("index").get<std::size_t>() != v.tokens_.size()) {
        throw Error(ErrorKind::kInput, "vocabulary: indices are not contiguous");
      }
      v.tokens_.push_back(row.at("token").get<std::string>());
      v.doc_freq_.push_back(row.at("doc_freq").get<std::uint64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("vocabulary: ") + e.what());
  }
  if (v.tokens_.size() != expected) throw Error(ErrorKind::kInput, "vocabulary: size mismatch");
  v.rebuild_index();
  if (v.index_.size() != v.tokens_.size()) throw Error(ErrorKind::kInput, "vocabulary: duplicate token");
  return v;
}

CountVector vectorize(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto id = vocab.index_of(t);
    if (id >= 0) ids.push_back(static_cast<std::uint32_t>(id));
  }
  std::sort(ids.begin(), ids.end());
  CountVector v;
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    v.terms.push_back({ids[i], static_cast<std::uint32_t>(j - i)});
    i = j;
  }
  v.total = ids.size();
  return v;
}

}  // namespace bugprio
