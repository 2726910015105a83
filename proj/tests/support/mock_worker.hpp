#pragma once

// Protocol v1 worker used to test the driver. It runs either in process
// (through bridge::InProcessChannel) or as the mock_worker executable.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bugprio/bridge.hpp"

namespace bugprio::fixtures {

enum class MockMode {
  kMajority,  // predict the topic's most frequent training label
  kFixed,     // always predict `fixed`
  kMemorize,  // exact text seen in training -> its label, else majority
};

struct MockWorkerOptions {
  MockMode mode = MockMode::kMajority;
  Priority fixed = Priority::P3;
  std::string version = std::string(bridge::kProtocolVersion);
  std::set<int> fail_train_topics;
  bool drop_last_prediction = false;
  bool duplicate_prediction = false;
  bool wrong_response_id = false;
  /// Trained topics are reloaded from and saved to this file.
  std::optional<std::filesystem::path> state_file;
};

struct MockEvent {
  bridge::Op op;
  int topic_id;
  std::optional<int> epochs;
  std::size_t records;
};

class MockWorker final : public bridge::LineHandler {
 public:
  explicit MockWorker(MockWorkerOptions options = {});

  std::string greeting() override;
  std::optional<std::string> handle(std::string_view request_line) override;

  const std::vector<MockEvent>& events() const { return events_; }
  /// Epochs of the last TRAIN per topic.
  std::map<int, int> epochs_by_topic() const;
  bool is_trained(int topic_id) const { return slots_.count(topic_id) > 0; }

 private:
  struct Slot {
    std::array<std::size_t, kNumPriorities> label_counts{};
    std::map<std::string, Priority> memory;
    Priority majority() const;
  };

  void load_state();
  void save_state() const;

  MockWorkerOptions options_;
  std::map<int, Slot> slots_;
  std::vector<MockEvent> events_;
};

}  // namespace bugprio::fixtures
