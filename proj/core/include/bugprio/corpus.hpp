#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bugprio/priority.hpp"

namespace bugprio {

enum class Status { Unconfirmed, New, Assigned, Resolved, Verified, Reopen, Closed };
enum class Resolution { Fixed, Other, None };

/// Lifecycle state plus resolution qualifier. FIXED is only legal on
/// RESOLVED, VERIFIED and CLOSED.
class BugStatus {
 public:
  BugStatus() = default;
  BugStatus(Status status, Resolution resolution);

  Status status() const { return status_; }
  Resolution resolution() const { return resolution_; }

  bool is_resolved_fixed() const {
    return status_ == Status::Resolved && resolution_ == Resolution::Fixed;
  }

  friend bool operator==(const BugStatus&, const BugStatus&) = default;

 private:
  Status status_ = Status::New;
  Resolution resolution_ = Resolution::None;
};

std::string_view to_string(Status s);
std::string_view to_string(Resolution r);
std::optional<Status> parse_status(std::string_view text);
std::optional<Resolution> parse_resolution(std::string_view text);

/// Parses either a status alone ("RESOLVED") or a combined
/// "RESOLVED_FIXED" / "RESOLVED FIXED" form. A separate resolution column,
/// when present, takes precedence over the combined suffix.
std::optional<BugStatus> parse_bug_status(std::string_view status_text,
                                          std::optional<std::string_view> resolution_text);

struct BugReport {
  std::int64_t bug_id = 0;
  std::string summary;
  std::string description;
  std::string product;
  std::string component;
  BugStatus status;
  Priority priority = Priority::Unknown;
  std::int64_t order_key = 0;

  friend bool operator==(const BugReport&, const BugReport&) = default;
};

enum class DatasetFormat { Csv, Jsonl };

std::optional<DatasetFormat> parse_dataset_format(std::string_view text);

/// Maps BugReport fields onto source column (CSV header) or key (JSONL) names.
/// Optional columns that are absent in a row read as empty text.
struct ColumnMap {
  std::string bug_id = "bug_id";
  std::string summary = "summary";
  std::string description = "description";
  std::string product = "product";
  std::string component = "component";
  std::string status = "status";
  std::optional<std::string> resolution = std::string("resolution");
  std::string priority = "priority";
  /// Overrides the default order key (bug_id). Integer or ISO-8601 date/time.
  std::optional<std::string> order_key;

  static ColumnMap canonical();
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<BugReport> reports;
  std::vector<RejectedRow> rejects;
};

/// Reads a whole dataset. Malformed rows land in `rejects` and parsing goes
/// on; an unreadable stream or a CSV without a header throws Error(kInput).
ParseResult parse_dataset(std::istream& in, DatasetFormat format, const ColumnMap& columns);

/// Canonical JSONL: one object per report with every BugReport field.
nlohmann::json to_json(const BugReport& report);
void write_canonical_jsonl(std::ostream& out, std::span<const BugReport> reports);
void write_rejects_jsonl(std::ostream& out, std::span<const RejectedRow> rejects);

/// Parses one canonical JSONL object. Throws Error(kInput) when malformed.
BugReport report_from_json(const nlohmann::json& j);

/// RESOLVED+FIXED reports with a known priority, in input order.
std::vector<BugReport> filter_training_eligible(std::span<const BugReport> reports);

/// Integer, or "YYYY-MM-DD[(T| )HH:MM[:SS]]" read as UTC epoch seconds.
std::optional<std::int64_t> parse_order_key(std::string_view text);

/// Keeps reports whose order key lies in [first, last]. Meant for corpora
/// whose order key comes from a date column.
std::vector<BugReport> filter_order_key_range(std::span<const BugReport> reports,
                                              std::int64_t first, std::int64_t last);

enum class SplitOrdering { ByOrderKey, AsGiven };
enum class SplitRounding { Floor, Ceil };

struct SplitSpec {
  double train_fraction = 0.8;
  SplitOrdering ordering = SplitOrdering::ByOrderKey;
  /// Floor reproduces the 68,124 / 17,032 partition of an 85,156 corpus.
  SplitRounding rounding = SplitRounding::Floor;
};

struct Split {
  std::vector<BugReport> train;
  std::vector<BugReport> test;
};

/// Size of the training partition for `n` records. Always in [1, n-1].
std::size_t train_partition_size(std::size_t n, const SplitSpec& spec);

/// Stable chronological split. Throws Error(kInvalidArgument) when fewer than
/// two reports are given or the fraction lies outside (0,1).
Split chronological_split(std::span<const BugReport> reports, const SplitSpec& spec);

}  // namespace bugprio
