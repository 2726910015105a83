#pragma once

// End-to-end orchestration: ingest -> split -> topics -> classifiers ->
// evaluation. Every command reads a PipelineConfig and works inside its
// output directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bugprio/bridge.hpp"
#include "bugprio/classify.hpp"
#include "bugprio/corpus.hpp"
#include "bugprio/evaluate.hpp"
#include "bugprio/textprep.hpp"
#include "bugprio/topics.hpp"

namespace bugprio {

struct DatasetConfig {
  std::filesystem::path path;
  DatasetFormat format = DatasetFormat::Csv;
  ColumnMap columns;
  /// Inclusive order-key window applied at ingest; off by default.
  std::optional<std::pair<std::int64_t, std::int64_t>> order_key_range;
};

struct ExternalWorkerConfig {
  std::vector<std::string> command;
  bridge::WorkerOptions options;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  TokenizerConfig tokenizer = TokenizerConfig::defaults();
  std::size_t vocab_min_count = 2;
  LdaConfig lda;
  RouterOptions classifier;
  std::optional<ExternalWorkerConfig> external;
  SplitSpec split;
  ZeroDivisionPolicy zero_division = ZeroDivisionPolicy::kZero;
  std::filesystem::path output_dir = "run";

  /// Relative paths resolve against `base_dir`. The seed is mandatory and is
  /// copied into the LDA config. Throws Error(kConfig) on schema violations.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
};

/// Reads a JSON config file and applies "dotted.key=value" overrides. Values
/// that parse as JSON are taken as such, anything else as a string.
PipelineConfig load_config(const std::filesystem::path& path,
                           std::span<const std::string> overrides = {});

/// Applies a single override to a raw config document.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Standard locations inside a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus" / "reports.jsonl"; }
  std::filesystem::path rejects() const { return root / "corpus" / "rejects.jsonl"; }
  std::filesystem::path distribution() const { return root / "corpus" / "distribution.json"; }
  std::filesystem::path train_split() const { return root / "split" / "train.jsonl"; }
  std::filesystem::path test_split() const { return root / "split" / "test.jsonl"; }
  std::filesystem::path bundle() const { return root / "bundle"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
};

/// Everything needed to predict: tokenizer, vocabulary, topic model and the
/// routed classifier bank, tied together by content hashes.
struct ModelBundle {
  TokenizerConfig tokenizer;
  Vocabulary vocabulary;
  LdaModel lda;
  TopicRoutedClassifier router;

  void save(const std::filesystem::path& dir) const;
  /// Opens files read-only and verifies every hash. Throws Error(kIntegrity)
  /// when the vocabulary, topic model and classifiers do not belong together.
  static ModelBundle load(const std::filesystem::path& dir);
};

/// Tokenize, vectorize, infer the topic mixture, route and classify.
Prediction predict_routed(const TopicRoutedClassifier& router, const LdaModel& lda,
                          const Vocabulary& vocab, const BugReport& report,
                          const TokenizerConfig& tokenizer, RemoteClassifier* remote = nullptr);

std::vector<Prediction> predict_reports(const ModelBundle& bundle,
                                        std::span<const BugReport> reports,
                                        RemoteClassifier* remote = nullptr);

nlohmann::json to_json(const Prediction& p);

std::vector<BugReport> read_canonical_jsonl(const std::filesystem::path& path);

/// Rewrites manifest.json with the path, size and SHA-256 of every file in
/// the run directory.
void write_manifest(const std::filesystem::path& run_dir);

void cmd_ingest(const PipelineConfig& config, std::ostream& log);

/// With the external kind and no `remote`, a worker is spawned from the
/// config; a missing worker command is an Error(kConfig). On failure nothing
/// from this command is left behind.
void cmd_train(const PipelineConfig& config, std::ostream& log, RemoteClassifier* remote = nullptr);

MetricsReport cmd_evaluate(const PipelineConfig& config, std::ostream& log,
                           RemoteClassifier* remote = nullptr);

struct PredictStats {
  std::size_t predicted = 0;
  std::size_t errors = 0;
};

/// Streams JSONL reports to JSONL predictions, one line in, one line out.
/// Malformed lines produce {"line", "error"} objects.
PredictStats cmd_predict(const ModelBundle& bundle, std::istream& in, std::ostream& out,
                         RemoteClassifier* remote = nullptr);

/// Prints the distribution, topic histogram, timing and metrics tables that
/// exist in the run directory.
void cmd_report(const std::filesystem::path& run_dir, std::ostream& out);

}  // namespace bugprio
