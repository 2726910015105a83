#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bugprio/corpus.hpp"

namespace bugprio {

enum class TextField { Summary, Description, Product, Component };

std::string_view to_string(TextField f);
std::optional<TextField> parse_text_field(std::string_view text);

struct TokenizerConfig {
  bool lowercase = true;
  bool remove_stopwords = true;
  std::unordered_set<std::string> stopwords;
  std::size_t min_token_length = 2;
  /// Summary and description are split into words; product and component
  /// contribute one prefixed token each (e.g. "component:ui").
  std::vector<TextField> fields_used = {TextField::Summary, TextField::Description,
                                        TextField::Component};

  /// Lowercasing and stop-word removal on, bundled English list loaded.
  static TokenizerConfig defaults();
  /// No lowercasing, no stop-word removal.
  static TokenizerConfig raw();

  void validate() const;
};

/// Bundled English stop-word list.
const std::unordered_set<std::string>& default_stopwords();
/// One word per line; blank lines and lines starting with '#' ignored.
std::unordered_set<std::string> load_stopwords(std::istream& in);

/// Splits on anything that is not a letter or digit. Non-ASCII code points
/// count as word characters except for the common Unicode punctuation and
/// space blocks.
std::vector<std::string> split_words(std::string_view text);

std::vector<std::string> tokenize(const BugReport& report, const TokenizerConfig& config);

/// Text handed to external classifiers: raw summary, description and
/// component, newline separated, summary first.
std::string raw_classification_text(const BugReport& report);

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Tokens with document frequency >= min_count, indexed in lexicographic
  /// order. Throws Error(kInvalidArgument) when nothing survives.
  static Vocabulary build(std::span<const std::vector<std::string>> docs, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  std::size_t min_count() const { return min_count_; }

  /// -1 when out of vocabulary.
  std::int64_t index_of(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::uint64_t doc_freq(std::size_t index) const { return doc_freq_.at(index); }

  /// JSONL rows {token, index, doc_freq}; the first line is a header object
  /// carrying min_count.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.doc_freq_ == b.doc_freq_ && a.min_count_ == b.min_count_;
  }

 private:
  void rebuild_index();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> doc_freq_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t min_count_ = 1;
};

struct TermCount {
  std::uint32_t index = 0;
  std::uint32_t count = 0;

  friend bool operator==(const TermCount&, const TermCount&) = default;
};

/// Sparse bag of words: indices strictly increasing, counts >= 1.
struct CountVector {
  std::vector<TermCount> terms;
  std::uint64_t total = 0;

  bool empty() const { return terms.empty(); }

  friend bool operator==(const CountVector&, const CountVector&) = default;
};

/// Out-of-vocabulary tokens are dropped.
CountVector vectorize(std::span<const std::string> tokens, const Vocabulary& vocab);

}  // namespace bugprio
