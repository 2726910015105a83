#include "bugprio/bridge.hpp"

#include <cerrno>
#include <cmath>
#include <limits>
#include <csignal>
#include <cstring>
#include <thread>
#include <unordered_map>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "bugprio/error.hpp"

extern char** environ;

namespace bugprio::bridge {
namespace {

using Clock = std::chrono::steady_clock;

Error protocol_error(const std::string& what) { return Error(ErrorKind::kProtocol, what); }

void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction current {};
    if (sigaction(SIGPIPE, nullptr, &current) == 0 && current.sa_handler == SIG_DFL) {
      std::signal(SIGPIPE, SIG_IGN);
    }
    return true;
  }();
  (void)done;
}

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

ClassScores wire_scores(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kNumPriorities) throw protocol_error("scores must hold five numbers");
  ClassScores s{};
  for (std::size_t i = 0; i < kNumPriorities; ++i) {
    s[i] = j[i].is_null() ? -std::numeric_limits<double>::infinity() : j[i].get<double>();
  }
  return s;
}

}  // namespace

std::string_view to_string(Op op) {
  switch (op) {
    case Op::Train: return "TRAIN";
    case Op::Predict: return "PREDICT";
    case Op::Shutdown: return "SHUTDOWN";
  }
  return "PREDICT";
}

std::optional<Op> parse_op(std::string_view text) {
  for (auto op : {Op::Train, Op::Predict, Op::Shutdown}) {
    if (to_string(op) == text) return op;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Messages

void WorkerRequest::validate() const {
  if (op == Op::Train) {
    if (!epochs || *epochs < 1) throw Error(ErrorKind::kInvalidArgument, "TRAIN needs epochs >= 1");
    for (const auto& r : records) {
      if (!r.label || !is_known(*r.label)) {
        throw Error(ErrorKind::kInvalidArgument, "TRAIN record " + std::to_string(r.bug_id) + " has no label");
      }
    }
  } else if (op == Op::Predict) {
    for (const auto& r : records) {
      if (r.label) throw Error(ErrorKind::kInvalidArgument, "PREDICT records must not carry labels");
    }
  }
}

nlohmann::json WorkerRequest::to_json() const {
  nlohmann::json j;
  j["v"] = kWireVersion;
  j["id"] = id;
  j["op"] = to_string(op);
  j["topic_id"] = topic_id;
  if (epochs) j["epochs"] = *epochs;
  auto recs = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json rec;
    rec["bug_id"] = r.bug_id;
    rec["text"] = r.text;
    if (r.label) rec["label"] = bugprio::to_string(*r.label);
    recs.push_back(std::move(rec));
  }
  j["records"] = std::move(recs);
  return j;
}

WorkerRequest WorkerRequest::from_json(const nlohmann::json& j) {
  WorkerRequest r;
  try {
    if (j.at("v").get<int>() != kWireVersion) throw protocol_error("unsupported wire version");
    r.id = j.at("id").get<std::int64_t>();
    auto op = parse_op(j.at("op").get<std::string>());
    if (!op) throw protocol_error("unknown op");
    r.op = *op;
    r.topic_id = j.value("topic_id", 0);
    if (j.contains("epochs")) r.epochs = j.at("epochs").get<int>();
    for (const auto& rec : j.value("records", nlohmann::json::array())) {
      RemoteRecord rr;
      rr.bug_id = rec.at("bug_id").get<std::int64_t>();
      rr.text = rec.at("text").get<std::string>();
      if (rec.contains("label")) rr.label = parse_priority(rec.at("label").get<std::string>());
      r.records.push_back(std::move(rr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw protocol_error(std::string("malformed request: ") + e.what());
  }
  return r;
}

nlohmann::json WorkerResponse::to_json() const {
  nlohmann::json j;
  j["v"] = kWireVersion;
  j["id"] = id;
  j["op"] = to_string(op);
  j["topic_id"] = topic_id;
  j["status"] = status == ResponseStatus::Ok ? "OK" : "ERROR";
  if (status == ResponseStatus::Error) j["error"] = error;
  if (op == Op::Predict && status == ResponseStatus::Ok) {
    auto preds = nlohmann::json::array();
    for (const auto& p : predictions) {
      auto scores = nlohmann::json::array();
      for (double s : p.scores) scores.push_back(std::isfinite(s) ? nlohmann::json(s) : nlohmann::json(nullptr));
      preds.push_back({{"bug_id", p.bug_id}, {"priority", bugprio::to_string(p.priority)}, {"scores", scores}});
    }
    j["predictions"] = std::move(preds);
  }
  return j;
}

WorkerResponse WorkerResponse::from_json(const nlohmann::json& j) {
  WorkerResponse r;
  try {
    if (!j.is_object()) throw protocol_error("response is not a JSON object");
    if (j.at("v").get<int>() != kWireVersion) throw protocol_error("unsupported wire version");
    r.id = j.at("id").get<std::int64_t>();
    if (j.contains("op")) {
      auto op = parse_op(j.at("op").get<std::string>());
      if (!op) throw protocol_error("unknown op in response");
      r.op = *op;
    }
    r.topic_id = j.value("topic_id", 0);
    const auto status = j.at("status").get<std::string>();
    if (status == "OK") {
      r.status = ResponseStatus::Ok;
    } else if (status == "ERROR") {
      r.status = ResponseStatus::Error;
      r.error = j.value("error", std::string("unspecified worker error"));
    } else {
      throw protocol_error("unknown response status '" + status + "'");
    }
    for (const auto& p : j.value("predictions", nlohmann::json::array())) {
      WirePrediction wp;
      wp.bug_id = p.at("bug_id").get<std::int64_t>();
      wp.priority = parse_priority(p.at("priority").get<std::string>());
      if (!is_known(wp.priority)) throw protocol_error("prediction with unknown priority");
      wp.scores = wire_scores(p.at("scores"));
      r.predictions.push_back(wp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw protocol_error(std::string("malformed response: ") + e.what());
  }
  return r;
}

int EpochPolicy::epochs_for(int topic_id) const {
  auto it = overrides.find(topic_id);
  return it == overrides.end() ? default_epochs : it->second;
}

void EpochPolicy::validate() const {
  if (default_epochs < 1) throw Error(ErrorKind::kConfig, "default epochs must be >= 1");
  for (const auto& [topic, e] : overrides) {
    if (e < 1) throw Error(ErrorKind::kConfig, "epochs for topic " + std::to_string(topic) + " must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Channels

ProcessChannel::ProcessChannel(const std::vector<std::string>& argv) {
  if (argv.empty() || argv.front().empty()) throw Error(ErrorKind::kConfig, "empty worker command");
  ignore_sigpipe_once();

  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorKind::kConfig, "pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorKind::kConfig, "pipe failed");
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const int rc = posix_spawnp(&pid_, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    pid_ = -1;
    throw Error(ErrorKind::kConfig, "cannot start worker '" + argv.front() + "': " + std::strerror(rc));
  }
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

ProcessChannel::~ProcessChannel() {
  close_fd(to_child_);
  if (pid_ > 0) {
    // Give the worker a moment to exit on EOF before killing it.
    const auto deadline = Clock::now() + std::chrono::seconds(2);
    int status = 0;
    while (::waitpid(pid_, &status, WNOHANG) == 0) {
      if (Clock::now() > deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    pid_ = -1;
  }
  close_fd(from_child_);
}

void ProcessChannel::terminate() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void ProcessChannel::write_line(std::string_view line) {
  if (to_child_ < 0) throw protocol_error("worker input is closed");
  std::string data(line);
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw protocol_error(std::string("writing to worker failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> ProcessChannel::read_line(std::optional<std::chrono::milliseconds> timeout) {
  const auto deadline = timeout ? std::optional(Clock::now() + *timeout) : std::nullopt;
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (eof_ || from_child_ < 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string rest;
      rest.swap(buffer_);
      return rest;
    }
    int wait_ms = -1;
    if (deadline) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now());
      if (left.count() <= 0) throw protocol_error("timed out waiting for the worker");
      wait_ms = static_cast<int>(left.count());
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw protocol_error(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) throw protocol_error("timed out waiting for the worker");
    char buf[65536];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw protocol_error(std::string("reading from worker failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      eof_ = true;
    } else {
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }
}

InProcessChannel::InProcessChannel(LineHandler& handler) : handler_(handler) {
  pending_.push_back(handler_.greeting());
}

void InProcessChannel::write_line(std::string_view line) {
  if (closed_) throw protocol_error("worker input is closed");
  if (auto resp = handler_.handle(line)) {
    pending_.push_back(std::move(*resp));
  } else {
    closed_ = true;
  }
}

std::optional<std::string> InProcessChannel::read_line(std::optional<std::chrono::milliseconds>) {
  if (pending_.empty()) return std::nullopt;
  std::string line = std::move(pending_.front());
  pending_.pop_front();
  return line;
}

// ---------------------------------------------------------------------------
// Driver

WorkerClient::WorkerClient(std::unique_ptr<LineChannel> channel, WorkerOptions options)
    : channel_(std::move(channel)), options_(std::move(options)) {
  options_.epochs.validate();
  try {
    auto line = channel_->read_line(options_.handshake_timeout);
    if (!line) throw protocol_error("worker exited before the handshake");
    nlohmann::json hello;
    try {
      hello = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::parse_error&) {
      throw protocol_error("handshake is not JSON: " + line->substr(0, 200));
    }
    if (!hello.is_object() || !hello.contains("protocol_version") || !hello["protocol_version"].is_string()) {
      throw protocol_error("handshake lacks protocol_version");
    }
    version_ = hello["protocol_version"].get<std::string>();
    if (version_ != kProtocolVersion) {
      throw protocol_error("worker speaks protocol " + version_ + ", expected " +
                           std::string(kProtocolVersion));
    }
  } catch (...) {
    channel_.reset();
    throw;
  }
}

WorkerClient::~WorkerClient() {
  if (channel_ && !shut_down_) {
    try {
      shutdown();
    } catch (...) {
    }
  }
}

WorkerResponse WorkerClient::round_trip(const WorkerRequest& request) {
  if (!channel_ || shut_down_) throw protocol_error("worker connection is closed");
  request.validate();
  channel_->write_line(request.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
  auto line = channel_->read_line(options_.request_timeout);
  if (!line) throw protocol_error("worker closed its output stream");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*line);
  } catch (const nlohmann::json::parse_error&) {
    throw protocol_error("worker response is not JSON: " + line->substr(0, 200));
  }
  auto resp = WorkerResponse::from_json(j);
  if (resp.id != request.id) {
    throw protocol_error("response id " + std::to_string(resp.id) + " does not answer request " +
                         std::to_string(request.id));
  }
  return resp;
}

void WorkerClient::train(int topic_id, std::span<const RemoteRecord> records) {
  if (records.empty()) throw Error(ErrorKind::kInvalidArgument, "TRAIN needs at least one record");
  WorkerRequest req;
  req.id = next_id_++;
  req.op = Op::Train;
  req.topic_id = topic_id;
  req.epochs = options_.epochs.epochs_for(topic_id);
  req.records.assign(records.begin(), records.end());
  auto resp = round_trip(req);
  if (resp.status != ResponseStatus::Ok) {
    throw protocol_error("worker failed to train topic " + std::to_string(topic_id) + ": " + resp.error);
  }
}

std::vector<Prediction> WorkerClient::predict(int topic_id, std::span<const RemoteRecord> records) {
  if (records.empty()) return {};
  WorkerRequest req;
  req.id = next_id_++;
  req.op = Op::Predict;
  req.topic_id = topic_id;
  req.records.reserve(records.size());
  for (const auto& r : records) req.records.push_back({r.bug_id, r.text, std::nullopt});
  auto resp = round_trip(req);
  if (resp.status != ResponseStatus::Ok) {
    throw protocol_error("worker failed to predict topic " + std::to_string(topic_id) + ": " + resp.error);
  }

  std::unordered_map<std::int64_t, const WirePrediction*> by_id;
  for (const auto& p : resp.predictions) {
    if (!by_id.emplace(p.bug_id, &p).second) {
      throw protocol_error("duplicate prediction for bug " + std::to_string(p.bug_id));
    }
  }
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = by_id.find(r.bug_id);
    if (it == by_id.end()) throw protocol_error("missing prediction for bug " + std::to_string(r.bug_id));
    Prediction p;
    p.bug_id = r.bug_id;
    p.priority = it->second->priority;
    p.scores = it->second->scores;
    out.push_back(p);
  }
  if (by_id.size() != records.size()) throw protocol_error("worker returned predictions for unrequested bugs");
  return out;
}

void WorkerClient::shutdown() {
  if (!channel_ || shut_down_) return;
  WorkerRequest req;
  req.id = next_id_++;
  req.op = Op::Shutdown;
  shut_down_ = true;
  channel_->write_line(req.to_json().dump());
  // The acknowledgement is optional; a worker may simply exit.
  try {
    channel_->read_line(options_.handshake_timeout);
  } catch (const Error&) {
  }
}

WorkerClient spawn_worker(const std::vector<std::string>& argv, WorkerOptions options) {
  return WorkerClient(std::make_unique<ProcessChannel>(argv), std::move(options));
}

}  // namespace bugprio::bridge
