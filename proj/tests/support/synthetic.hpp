#pragma once

// Deterministic corpus generators with known ground truth.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bugprio/classify.hpp"
#include "bugprio/corpus.hpp"
#include "bugprio/textprep.hpp"

namespace bugprio::fixtures {

struct PlantedCorpus {
  std::vector<CountVector> docs;
  std::vector<std::size_t> topics;               // planted topic per document
  std::vector<std::vector<double>> planted_phi;  // num_topics x vocab_size
  std::size_t vocab_size = 0;
};

/// Each document draws all of its tokens uniformly from one topic's private
/// lexicon. Topic t owns word ids [t * lexicon, (t + 1) * lexicon).
PlantedCorpus planted_corpus(std::size_t num_topics, std::size_t lexicon, std::size_t num_docs,
                             std::size_t doc_length, std::uint64_t seed);

struct ReportSpec {
  std::size_t count = 500;
  std::uint64_t seed = 1;
  std::size_t topics = 3;
  std::size_t topic_words = 12;
  std::size_t tokens = 30;
  /// Label weights per topic; the last row is reused for extra topics.
  std::vector<std::array<double, kNumPriorities>> label_weights{{0.05, 0.1, 0.7, 0.1, 0.05}};
  /// Probability that a token is a cue word of the report's own label.
  double label_signal = 0.0;
  /// Share of reports that are RESOLVED_FIXED; the rest are OPEN-ish.
  double fixed_share = 1.0;
};

/// Reports numbered 1..count with increasing order keys.
std::vector<BugReport> synthetic_reports(const ReportSpec& spec);

/// Topic t's vocabulary word i.
std::string topic_word(std::size_t t, std::size_t i);
/// Cue word i of a priority level.
std::string label_word(Priority p, std::size_t i);

void write_csv(const std::filesystem::path& path, const std::vector<BugReport>& reports);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);

}  // namespace bugprio::fixtures
