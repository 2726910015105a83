#include "bugprio/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <variant>

#include <nlohmann/json.hpp>

#include "bugprio/csv.hpp"
#include "bugprio/error.hpp"

namespace bugprio {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}


using FieldGetter = std::function<std::optional<std::string>(const std::string& column)>;

// Builds one report from named fields. Returns an error message on failure.
// `strict` demands a status column; lenient mode defaults it to NEW.
std::variant<BugReport, std::string> build_report(const FieldGetter& get, const ColumnMap& cols,
                                                  bool strict) {
  BugReport r;
  auto id_text = get(cols.bug_id);
  if (!id_text) return std::string("missing bug_id");
  auto id = parse_int(*id_text);
  if (!id) return "invalid bug_id '" + *id_text + "'";
  r.bug_id = *id;

  r.summary = get(cols.summary).value_or("");
  r.description = get(cols.description).value_or("");
  r.product = get(cols.product).value_or("");
  r.component = get(cols.component).value_or("");

  auto status_text = get(cols.status);
  std::optional<std::string> resolution_text;
  if (cols.resolution) resolution_text = get(*cols.resolution);
  if (!status_text || trim(*status_text).empty()) {
    if (strict) return std::string("missing status");
    r.status = BugStatus{};
  } else {
    std::optional<std::string_view> res_view;
    if (resolution_text) res_view = *resolution_text;
    auto st = parse_bug_status(*status_text, res_view);
    if (!st) {
      return "invalid status '" + *status_text + "'" +
             (resolution_text ? " / resolution '" + *resolution_text + "'" : std::string());
    }
    r.status = *st;
  }

  auto prio_text = get(cols.priority);
  r.priority = prio_text ? parse_priority(*prio_text) : Priority::Unknown;

  if (cols.order_key) {
    auto key_text = get(*cols.order_key);
    if (!key_text || trim(*key_text).empty()) {
      if (strict) return "missing order key column '" + *cols.order_key + "'";
      r.order_key = r.bug_id;
    } else {
      auto key = parse_order_key(*key_text);
      if (!key) return "invalid order key '" + *key_text + "'";
      r.order_key = *key;
    }
  } else {
    r.order_key = r.bug_id;
  }
  return r;
}

std::optional<std::string> json_field_text(const nlohmann::json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  if (it->is_number() || it->is_boolean()) return it->dump();
  throw Error(ErrorKind::kInput, "field '" + key + "' is not a scalar");
}

void add_report(ParseResult& result, std::unordered_set<std::int64_t>& seen,
                std::variant<BugReport, std::string> built, std::size_t line) {
  if (auto* msg = std::get_if<std::string>(&built)) {
    result.rejects.push_back({line, std::move(*msg)});
    return;
  }
  auto& report = std::get<BugReport>(built);
  if (!seen.insert(report.bug_id).second) {
    result.rejects.push_back({line, "duplicate bug_id " + std::to_string(report.bug_id)});
    return;
  }
  result.reports.push_back(std::move(report));
}

ParseResult parse_csv(std::istream& in, const ColumnMap& cols) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) {
    if (in.bad()) throw Error(ErrorKind::kInput, "unreadable dataset stream");
    throw Error(ErrorKind::kInput, "CSV input has no header row");
  }
  if (header->error) throw Error(ErrorKind::kInput, "malformed CSV header: " + *header->error);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header->fields.size(); ++i) {
    index.emplace(std::string(trim(header->fields[i])), i);
  }
  for (const auto* required : {&cols.bug_id, &cols.status, &cols.priority}) {
    if (!index.count(*required)) {
      throw Error(ErrorKind::kInput, "CSV header lacks required column '" + *required + "'");
    }
  }
  if (cols.order_key && !index.count(*cols.order_key)) {
    throw Error(ErrorKind::kInput, "CSV header lacks order key column '" + *cols.order_key + "'");
  }

  ParseResult result;
  std::unordered_set<std::int64_t> seen;
  const std::size_t width = header->fields.size();
  while (auto rec = reader.next()) {
    if (rec->error) {
      result.rejects.push_back({rec->line, *rec->error});
      continue;
    }
    if (rec->fields.size() != width) {
      result.rejects.push_back({rec->line, "expected " + std::to_string(width) + " fields, got " +
                                               std::to_string(rec->fields.size())});
      continue;
    }
    FieldGetter get = [&](const std::string& column) -> std::optional<std::string> {
      auto it = index.find(column);
      if (it == index.end()) return std::nullopt;
      return rec->fields[it->second];
    };
    add_report(result, seen, build_report(get, cols, true), rec->line);
  }
  if (in.bad()) throw Error(ErrorKind::kInput, "read error in dataset stream");
  return result;
}

ParseResult parse_jsonl(std::istream& in, const ColumnMap& cols) {
  ParseResult result;
  std::unordered_set<std::int64_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      result.rejects.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!obj.is_object()) {
      result.rejects.push_back({line_no, "record is not a JSON object"});
      continue;
    }
    try {
      FieldGetter get = [&](const std::string& column) { return json_field_text(obj, column); };
      add_report(result, seen, build_report(get, cols, true), line_no);
    } catch (const Error& e) {
      result.rejects.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw Error(ErrorKind::kInput, "read error in dataset stream");
  return result;
}

}  // namespace

std::optional<std::int64_t> parse_order_key(std::string_view s) {
  if (auto v = parse_int(s)) return v;
  s = trim(s);
  std::string text(s);
  std::tm tm{};
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &sec);
  if (n < 3 || mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
  if (n > 3 && sep != 'T' && sep != ' ') return std::nullopt;
  if (n > 3 && n < 6) return std::nullopt;
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = n >= 6 ? h : 0;
  tm.tm_min = n >= 6 ? mi : 0;
  tm.tm_sec = n >= 7 ? sec : 0;
  return static_cast<std::int64_t>(timegm(&tm));
}

std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::P1: return "P1";
    case Priority::P2: return "P2";
    case Priority::P3: return "P3";
    case Priority::P4: return "P4";
    case Priority::P5: return "P5";
    case Priority::Unknown: break;
  }
  return "Unknown";
}

Priority parse_priority(std::string_view text) {
  auto t = upper(trim(text));
  if (t.size() == 2 && t[0] == 'P') t.erase(0, 1);
  if (t.size() == 1 && t[0] >= '1' && t[0] <= '5') return priority_from_index(t[0] - '1');
  return Priority::Unknown;
}

BugStatus::BugStatus(Status status, Resolution resolution) : status_(status), resolution_(resolution) {
  if (resolution == Resolution::Fixed && status != Status::Resolved &&
      status != Status::Verified && status != Status::Closed) {
    throw Error(ErrorKind::kInvalidArgument,
                "resolution FIXED requires RESOLVED, VERIFIED or CLOSED status");
  }
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Unconfirmed: return "UNCONFIRMED";
    case Status::New: return "NEW";
    case Status::Assigned: return "ASSIGNED";
    case Status::Resolved: return "RESOLVED";
    case Status::Verified: return "VERIFIED";
    case Status::Reopen: return "REOPEN";
    case Status::Closed: return "CLOSED";
  }
  return "NEW";
}

std::string_view to_string(Resolution r) {
  switch (r) {
    case Resolution::Fixed: return "FIXED";
    case Resolution::Other: return "OTHER";
    case Resolution::None: return "NONE";
  }
  return "NONE";
}

std::optional<Status> parse_status(std::string_view text) {
  static const std::unordered_map<std::string, Status> kNames = {
      {"UNCONFIRMED", Status::Unconfirmed}, {"NEW", Status::New},
      {"ASSIGNED", Status::Assigned},       {"RESOLVED", Status::Resolved},
      {"VERIFIED", Status::Verified},       {"REOPEN", Status::Reopen},
      {"REOPENED", Status::Reopen},         {"CLOSED", Status::Closed},
  };
  auto it = kNames.find(upper(trim(text)));
  if (it == kNames.end()) return std::nullopt;
  return it->second;
}

std::optional<Resolution> parse_resolution(std::string_view text) {
  auto t = upper(trim(text));
  if (t.empty() || t == "---" || t == "NONE") return Resolution::None;
  if (t == "FIXED") return Resolution::Fixed;
  for (char c : t) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != ' ') {
      return std::nullopt;
    }
  }
  return Resolution::Other;
}

std::optional<BugStatus> parse_bug_status(std::string_view status_text,
                                          std::optional<std::string_view> resolution_text) {
  std::string s = upper(trim(status_text));
  std::optional<Resolution> resolution;
  auto sep = s.find_first_of("_ ");
  if (sep != std::string::npos) {
    resolution = parse_resolution(std::string_view(s).substr(sep + 1));
    s.resize(sep);
  }
  if (resolution_text && !trim(*resolution_text).empty()) {
    resolution = parse_resolution(*resolution_text);
  }
  auto status = parse_status(s);
  if (!status) return std::nullopt;
  if (!resolution) {
    if (sep != std::string::npos) return std::nullopt;
    resolution = Resolution::None;
  }
  try {
    return BugStatus(*status, *resolution);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<DatasetFormat> parse_dataset_format(std::string_view text) {
  auto t = upper(trim(text));
  if (t == "CSV") return DatasetFormat::Csv;
  if (t == "JSONL" || t == "NDJSON") return DatasetFormat::Jsonl;
  return std::nullopt;
}

ColumnMap ColumnMap::canonical() {
  ColumnMap m;
  m.order_key = "order_key";
  return m;
}

ParseResult parse_dataset(std::istream& in, DatasetFormat format, const ColumnMap& columns) {
  if (!in.good()) throw Error(ErrorKind::kInput, "unreadable dataset stream");
  return format == DatasetFormat::Csv ? parse_csv(in, columns) : parse_jsonl(in, columns);
}

namespace {

// Field order is fixed so reruns are byte-identical.
template <typename Json>
Json canonical_object(const BugReport& r) {
  Json j;
  j["bug_id"] = r.bug_id;
  j["summary"] = r.summary;
  j["description"] = r.description;
  j["product"] = r.product;
  j["component"] = r.component;
  j["status"] = to_string(r.status.status());
  j["resolution"] = to_string(r.status.resolution());
  j["priority"] = to_string(r.priority);
  j["order_key"] = r.order_key;
  return j;
}

}  // namespace

nlohmann::json to_json(const BugReport& r) { return canonical_object<nlohmann::json>(r); }

void write_canonical_jsonl(std::ostream& out, std::span<const BugReport> reports) {
  for (const auto& r : reports) {
    out << canonical_object<nlohmann::ordered_json>(r).dump(
               -1, ' ', false, nlohmann::json::error_handler_t::replace)
        << '\n';
  }
}

void write_rejects_jsonl(std::ostream& out, std::span<const RejectedRow> rejects) {
  for (const auto& r : rejects) {
    nlohmann::ordered_json j;
    j["line"] = r.line;
    j["reason"] = r.reason;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
}

BugReport report_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kInput, "report is not a JSON object");
  FieldGetter get = [&](const std::string& column) { return json_field_text(j, column); };
  auto cols = ColumnMap::canonical();
  auto built = build_report(get, cols, false);
  if (auto* msg = std::get_if<std::string>(&built)) throw Error(ErrorKind::kInput, *msg);
  return std::get<BugReport>(std::move(built));
}

std::vector<BugReport> filter_training_eligible(std::span<const BugReport> reports) {
  std::vector<BugReport> out;
  for (const auto& r : reports) {
    if (r.status.is_resolved_fixed() && is_known(r.priority)) out.push_back(r);
  }
  return out;
}

std::vector<BugReport> filter_order_key_range(std::span<const BugReport> reports,
                                              std::int64_t first, std::int64_t last) {
  std::vector<BugReport> out;
  for (const auto& r : reports) {
    if (r.order_key >= first && r.order_key <= last) out.push_back(r);
  }
  return out;
}

std::size_t train_partition_size(std::size_t n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "train_fraction must lie in (0, 1)");
  }
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "cannot split fewer than 2 reports");
  const double exact = spec.train_fraction * static_cast<double>(n);
  // The slack absorbs representation error, e.g. 0.8 * 10 -> 8.000000000000002.
  constexpr double kSlack = 1e-9;
  double rounded = spec.rounding == SplitRounding::Floor ? std::floor(exact + kSlack)
                                                         : std::ceil(exact - kSlack);
  auto size = static_cast<std::size_t>(rounded);
  return std::clamp<std::size_t>(size, 1, n - 1);
}

Split chronological_split(std::span<const BugReport> reports, const SplitSpec& spec) {
  const std::size_t n_train = train_partition_size(reports.size(), spec);
  std::vector<BugReport> ordered(reports.begin(), reports.end());
  if (spec.ordering == SplitOrdering::ByOrderKey) {
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const BugReport& a, const BugReport& b) { return a.order_key < b.order_key; });
  }
  Split split;
  split.train.assign(std::make_move_iterator(ordered.begin()),
                     std::make_move_iterator(ordered.begin() + static_cast<std::ptrdiff_t>(n_train)));
  split.test.assign(std::make_move_iterator(ordered.begin() + static_cast<std::ptrdiff_t>(n_train)),
                    std::make_move_iterator(ordered.end()));
  return split;
}

}  // namespace bugprio
