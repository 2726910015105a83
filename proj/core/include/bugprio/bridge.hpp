#pragma once

// Driver side of the external-classifier protocol (v1): newline-delimited
// JSON over a worker's stdin/stdout. See docs/protocol.md for the wire format.

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bugprio/classify.hpp"

namespace bugprio::bridge {

inline constexpr std::string_view kProtocolVersion = "1";
inline constexpr int kWireVersion = 1;

enum class Op { Train, Predict, Shutdown };
enum class ResponseStatus { Ok, Error };

std::string_view to_string(Op op);
std::optional<Op> parse_op(std::string_view text);

struct WorkerRequest {
  std::int64_t id = 0;
  Op op = Op::Predict;
  int topic_id = 0;
  std::optional<int> epochs;  // TRAIN only
  std::vector<RemoteRecord> records;

  /// TRAIN records carry labels and epochs >= 1; PREDICT records carry none.
  void validate() const;
  nlohmann::json to_json() const;
  static WorkerRequest from_json(const nlohmann::json& j);
};

struct WirePrediction {
  std::int64_t bug_id = 0;
  Priority priority = Priority::Unknown;
  ClassScores scores{};
};

struct WorkerResponse {
  std::int64_t id = 0;
  Op op = Op::Predict;
  int topic_id = 0;
  ResponseStatus status = ResponseStatus::Ok;
  std::vector<WirePrediction> predictions;
  std::string error;

  nlohmann::json to_json() const;
  /// Throws Error(kProtocol) on anything that is not a v1 response.
  static WorkerResponse from_json(const nlohmann::json& j);
};

/// Epochs per topic: a default plus per-topic overrides. The dominant topic
/// is typically overridden to a single epoch.
struct EpochPolicy {
  int default_epochs = 15;
  std::map<int, int> overrides;

  int epochs_for(int topic_id) const;
  void validate() const;
};

/// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(std::string_view line) = 0;
  /// nullopt on end of stream. Throws Error(kProtocol) on timeout.
  virtual std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout) = 0;
};

/// Child process speaking over its standard streams. The destructor closes
/// the child's stdin, waits briefly and then kills it.
class ProcessChannel final : public LineChannel {
 public:
  /// argv[0] is resolved through PATH. Throws Error(kConfig) when the
  /// command cannot be started.
  explicit ProcessChannel(const std::vector<std::string>& argv);
  ~ProcessChannel() override;

  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout) override;

  void terminate();
  int pid() const { return pid_; }

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  bool eof_ = false;
};

/// Server half of an in-process worker.
class LineHandler {
 public:
  virtual ~LineHandler() = default;
  virtual std::string greeting() = 0;
  /// Response line for one request line; nullopt closes the stream.
  virtual std::optional<std::string> handle(std::string_view request_line) = 0;
};

/// Feeds requests straight into a LineHandler on the calling thread.
class InProcessChannel final : public LineChannel {
 public:
  explicit InProcessChannel(LineHandler& handler);

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout) override;

 private:
  LineHandler& handler_;
  std::deque<std::string> pending_;
  bool closed_ = false;
};

struct WorkerOptions {
  std::chrono::milliseconds handshake_timeout{10000};
  /// No limit when unset; fine-tuning can take hours.
  std::optional<std::chrono::milliseconds> request_timeout;
  EpochPolicy epochs;
};

/// Driver handle. Requests are strictly FIFO; confine to one thread.
class WorkerClient final : public RemoteClassifier {
 public:
  /// Reads and validates the handshake. On failure the channel is dropped
  /// (terminating a child process) and Error(kProtocol) is thrown.
  WorkerClient(std::unique_ptr<LineChannel> channel, WorkerOptions options);
  ~WorkerClient() override;

  WorkerClient(WorkerClient&&) noexcept = default;
  WorkerClient& operator=(WorkerClient&&) noexcept = default;

  const std::string& protocol_version() const { return version_; }
  const WorkerOptions& options() const { return options_; }

  /// Sends TRAIN with the policy's epochs for this topic and blocks for OK.
  /// Empty records -> Error(kInvalidArgument) without sending anything.
  void train(int topic_id, std::span<const RemoteRecord> records) override;

  /// Predictions aligned with `records`.
  std::vector<Prediction> predict(int topic_id, std::span<const RemoteRecord> records) override;

  void shutdown();

 private:
  WorkerResponse round_trip(const WorkerRequest& request);

  std::unique_ptr<LineChannel> channel_;
  WorkerOptions options_;
  std::string version_;
  std::int64_t next_id_ = 1;
  bool shut_down_ = false;
};

/// Starts `argv` as a child process and performs the handshake.
WorkerClient spawn_worker(const std::vector<std::string>& argv, WorkerOptions options);

}  // namespace bugprio::bridge
