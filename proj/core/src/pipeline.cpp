#include "bugprio/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "bugprio/error.hpp"
#include "bugprio/hash.hpp"

namespace bugprio {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTokenizerFile = "tokenizer.json";
constexpr const char* kVocabularyFile = "vocabulary.jsonl";
constexpr const char* kTopicModelFile = "lda.model";
constexpr const char* kClassifierFile = "classifiers.json";
constexpr const char* kBundleFile = "bundle.json";

Error config_error(const std::string& what) { return Error(ErrorKind::kConfig, what); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInput, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kInput, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::kInput, "write failed for " + path.string());
}

std::string pretty(const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n"; }

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view section) {
  if (!obj.is_object()) throw config_error(std::string(section) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw config_error("unknown key '" + key + "' in " + std::string(section));
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw config_error(std::string("config key '") + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

json tokenizer_to_json(const TokenizerConfig& t) {
  json j;
  j["lowercase"] = t.lowercase;
  j["remove_stopwords"] = t.remove_stopwords;
  j["min_token_length"] = t.min_token_length;
  auto fields = json::array();
  for (auto f : t.fields_used) fields.push_back(to_string(f));
  j["fields"] = fields;
  j["stopwords"] = std::set<std::string>(t.stopwords.begin(), t.stopwords.end());
  return j;
}

TokenizerConfig tokenizer_from_json(const json& j) {
  TokenizerConfig t = TokenizerConfig::raw();
  try {
    t.lowercase = j.at("lowercase").get<bool>();
    t.remove_stopwords = j.at("remove_stopwords").get<bool>();
    t.min_token_length = j.at("min_token_length").get<std::size_t>();
    t.fields_used.clear();
    for (const auto& f : j.at("fields")) {
      auto field = parse_text_field(f.get<std::string>());
      if (!field) throw Error(ErrorKind::kInput, "tokenizer: unknown field");
      t.fields_used.push_back(*field);
    }
    for (const auto& w : j.at("stopwords")) t.stopwords.insert(w.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("tokenizer: ") + e.what());
  }
  t.validate();
  return t;
}

void remove_quietly(const fs::path& p) {
  std::error_code ec;
  fs::remove_all(p, ec);
}

std::vector<std::string> canonical_report_lines(std::span<const BugReport> reports) {
  std::ostringstream os;
  write_canonical_jsonl(os, reports);
  return {os.str()};
}

std::string canonical_jsonl(std::span<const BugReport> reports) {
  return canonical_report_lines(reports).front();
}

std::vector<Priority> labels_of(std::span<const BugReport> reports) {
  std::vector<Priority> out;
  out.reserve(reports.size());
  for (const auto& r : reports) out.push_back(r.priority);
  return out;
}

// Owns a worker spawned from the config when the caller supplied none.
struct RemoteHandle {
  std::optional<bridge::WorkerClient> owned;
  RemoteClassifier* ptr = nullptr;
};

RemoteHandle connect_remote(const PipelineConfig& config, ClassifierKind kind, RemoteClassifier* given) {
  RemoteHandle h;
  if (kind != ClassifierKind::External) return h;
  if (given) {
    h.ptr = given;
    return h;
  }
  if (!config.external || config.external->command.empty()) {
    throw config_error("classifier kind 'external' needs external.command in the config");
  }
  h.owned.emplace(bridge::spawn_worker(config.external->command, config.external->options));
  h.ptr = &*h.owned;
  return h;
}

std::vector<RoutedQuery> build_queries(const ModelBundle& bundle, std::span<const BugReport> reports) {
  std::vector<RoutedQuery> queries(reports.size());
  const bool external = bundle.router.kind() == ClassifierKind::External;
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = reports[i];
      auto tokens = tokenize(r, bundle.tokenizer);
      auto& q = queries[i];
      q.bug_id = r.bug_id;
      q.features = vectorize(tokens, bundle.vocabulary);
      q.topic = assign_topic(infer_theta(bundle.lda, q.features));
      if (external) q.text = raw_classification_text(r);
    }
  };
  // Inference is pure per document, so chunking does not change results.
  const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
  const std::size_t chunk = (reports.size() + threads - 1) / threads;
  std::vector<std::future<void>> jobs;
  for (std::size_t begin = 0; begin < reports.size(); begin += chunk) {
    jobs.push_back(std::async(std::launch::async, work, begin, std::min(begin + chunk, reports.size())));
  }
  for (auto& j : jobs) j.get();
  return queries;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, {"seed", "dataset", "tokenizer", "lda", "classifier", "external", "split", "evaluation",
                 "output_dir"},
             "config");
  PipelineConfig c;
  if (!j.contains("seed") || !j["seed"].is_number_integer()) {
    throw config_error("config must set an integer 'seed'");
  }
  c.seed = j["seed"].get<std::uint64_t>();

  const json dataset = j.value("dataset", json::object());
  check_keys(dataset, {"path", "format", "columns", "order_key_range"}, "dataset");
  if (dataset.contains("path")) c.dataset.path = resolve(base_dir, dataset["path"].get<std::string>());
  auto format = parse_dataset_format(get_or<std::string>(dataset, "format", "csv"));
  if (!format) throw config_error("dataset.format must be csv or jsonl");
  c.dataset.format = *format;
  if (dataset.contains("columns")) {
    const json& cols = dataset["columns"];
    check_keys(cols, {"bug_id", "summary", "description", "product", "component", "status", "resolution",
                      "priority", "order_key"},
               "dataset.columns");
    auto& m = c.dataset.columns;
    m.bug_id = get_or(cols, "bug_id", m.bug_id);
    m.summary = get_or(cols, "summary", m.summary);
    m.description = get_or(cols, "description", m.description);
    m.product = get_or(cols, "product", m.product);
    m.component = get_or(cols, "component", m.component);
    m.status = get_or(cols, "status", m.status);
    m.priority = get_or(cols, "priority", m.priority);
    if (cols.contains("resolution")) {
      m.resolution = cols["resolution"].is_null() ? std::nullopt
                                                  : std::optional(cols["resolution"].get<std::string>());
    }
    if (cols.contains("order_key") && !cols["order_key"].is_null()) {
      m.order_key = cols["order_key"].get<std::string>();
    }
  }
  if (dataset.contains("order_key_range") && !dataset["order_key_range"].is_null()) {
    const auto& r = dataset["order_key_range"];
    if (!r.is_array() || r.size() != 2) throw config_error("dataset.order_key_range must be [first, last]");
    auto bound = [](const json& v) -> std::int64_t {
      if (v.is_number_integer()) return v.get<std::int64_t>();
      if (v.is_string()) {
        if (auto key = parse_order_key(v.get<std::string>())) return *key;
      }
      throw config_error("dataset.order_key_range bounds must be integers or ISO-8601 dates");
    };
    c.dataset.order_key_range = std::pair{bound(r[0]), bound(r[1])};
    if (c.dataset.order_key_range->first > c.dataset.order_key_range->second) {
      throw config_error("dataset.order_key_range is empty");
    }
  }

  const json tok = j.value("tokenizer", json::object());
  check_keys(tok, {"lowercase", "remove_stopwords", "stopwords_file", "min_token_length", "fields",
                   "vocab_min_count"},
             "tokenizer");
  c.tokenizer.lowercase = get_or(tok, "lowercase", true);
  c.tokenizer.remove_stopwords = get_or(tok, "remove_stopwords", true);
  c.tokenizer.min_token_length = get_or<std::size_t>(tok, "min_token_length", 2);
  if (tok.contains("stopwords_file")) {
    std::ifstream in(resolve(base_dir, tok["stopwords_file"].get<std::string>()));
    if (!in) throw config_error("cannot open tokenizer.stopwords_file");
    c.tokenizer.stopwords = load_stopwords(in);
  }
  if (tok.contains("fields")) {
    c.tokenizer.fields_used.clear();
    for (const auto& f : tok["fields"]) {
      auto field = parse_text_field(f.get<std::string>());
      if (!field) throw config_error("unknown tokenizer field '" + f.get<std::string>() + "'");
      c.tokenizer.fields_used.push_back(*field);
    }
  }
  c.tokenizer.validate();
  c.vocab_min_count = get_or<std::size_t>(tok, "vocab_min_count", 2);

  const json lda = j.value("lda", json::object());
  check_keys(lda, {"num_topics", "alpha", "beta", "iterations", "burn_in", "inference_iterations"}, "lda");
  c.lda = LdaConfig::with_topics(get_or<std::size_t>(lda, "num_topics", 10), c.seed);
  c.lda.alpha = get_or(lda, "alpha", c.lda.alpha);
  c.lda.beta = get_or(lda, "beta", c.lda.beta);
  c.lda.iterations = get_or(lda, "iterations", c.lda.iterations);
  c.lda.burn_in = get_or(lda, "burn_in", c.lda.burn_in);
  c.lda.inference_iterations = get_or(lda, "inference_iterations", c.lda.inference_iterations);
  try {
    c.lda.validate();
  } catch (const Error& e) {
    throw config_error(e.what());
  }

  const json cls = j.value("classifier", json::object());
  check_keys(cls, {"kind", "min_topic_size", "laplace", "var_smoothing"}, "classifier");
  auto kind = parse_classifier_kind(get_or<std::string>(cls, "kind", "multinomial_nb"));
  if (!kind) throw config_error("classifier.kind must be gaussian_nb, multinomial_nb or external");
  c.classifier.kind = *kind;
  c.classifier.min_topic_size = get_or<std::size_t>(cls, "min_topic_size", 25);
  c.classifier.laplace = get_or(cls, "laplace", 1.0);
  c.classifier.gaussian.var_smoothing = get_or(cls, "var_smoothing", 1e-9);
  c.classifier.num_topics = c.lda.num_topics;
  if (!(c.classifier.laplace > 0.0)) throw config_error("classifier.laplace must be > 0");

  if (j.contains("external") && !j["external"].is_null()) {
    const json& ext = j["external"];
    check_keys(ext, {"command", "handshake_timeout_ms", "request_timeout_ms", "epochs"}, "external");
    ExternalWorkerConfig e;
    e.command = get_or<std::vector<std::string>>(ext, "command", {});
    e.options.handshake_timeout = std::chrono::milliseconds(get_or<std::int64_t>(ext, "handshake_timeout_ms", 10000));
    if (ext.contains("request_timeout_ms") && !ext["request_timeout_ms"].is_null()) {
      e.options.request_timeout = std::chrono::milliseconds(ext["request_timeout_ms"].get<std::int64_t>());
    }
    const json epochs = ext.value("epochs", json::object());
    check_keys(epochs, {"default", "overrides"}, "external.epochs");
    e.options.epochs.default_epochs = get_or(epochs, "default", 15);
    const json overrides = epochs.value("overrides", json::object());
    if (!overrides.is_object()) throw config_error("external.epochs.overrides must be an object");
    for (const auto& [topic, n] : overrides.items()) {
      std::size_t used = 0;
      int id = -1;
      try {
        id = std::stoi(topic, &used);
      } catch (const std::exception&) {
      }
      if (used != topic.size() || id < 0) throw config_error("external.epochs.overrides keys must be topic ids");
      if (!n.is_number_integer()) throw config_error("external.epochs.overrides values must be integers");
      e.options.epochs.overrides[id] = n.get<int>();
    }
    e.options.epochs.validate();
    c.external = std::move(e);
  }

  const json split = j.value("split", json::object());
  check_keys(split, {"train_fraction", "ordering", "rounding"}, "split");
  c.split.train_fraction = get_or(split, "train_fraction", 0.8);
  if (!(c.split.train_fraction > 0.0 && c.split.train_fraction < 1.0)) {
    throw config_error("split.train_fraction must lie in (0, 1)");
  }
  const auto ordering = get_or<std::string>(split, "ordering", "by_order_key");
  if (ordering == "by_order_key") {
    c.split.ordering = SplitOrdering::ByOrderKey;
  } else if (ordering == "as_given") {
    c.split.ordering = SplitOrdering::AsGiven;
  } else {
    throw config_error("split.ordering must be by_order_key or as_given");
  }
  const auto rounding = get_or<std::string>(split, "rounding", "floor");
  if (rounding == "floor") {
    c.split.rounding = SplitRounding::Floor;
  } else if (rounding == "ceil") {
    c.split.rounding = SplitRounding::Ceil;
  } else {
    throw config_error("split.rounding must be floor or ceil");
  }

  const json eval = j.value("evaluation", json::object());
  check_keys(eval, {"zero_division"}, "evaluation");
  const auto zd = get_or<std::string>(eval, "zero_division", "zero");
  if (zd == "zero") {
    c.zero_division = ZeroDivisionPolicy::kZero;
  } else if (zd == "exclude") {
    c.zero_division = ZeroDivisionPolicy::kExclude;
  } else {
    throw config_error("evaluation.zero_division must be zero or exclude");
  }

  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "run"));
  return c;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw config_error("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw config_error("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw config_error("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

PipelineConfig load_config(const fs::path& path, std::span<const std::string> overrides) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw config_error("config " + path.string() + " is not valid JSON: " + e.what());
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return PipelineConfig::from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Bundle

void ModelBundle::save(const fs::path& dir) const {
  fs::create_directories(dir);

  std::ostringstream vocab_text;
  vocabulary.save(vocab_text);
  const std::string vocab_hash = sha256_hex(vocab_text.str());

  LdaModel bound = lda;
  bound.bind_vocabulary(vocab_hash);
  std::ostringstream lda_text;
  bound.save(lda_text);
  const std::string lda_hash = sha256_hex(lda_text.str());

  json classifiers;
  classifiers["vocabulary_sha256"] = vocab_hash;
  classifiers["topic_model_sha256"] = lda_hash;
  classifiers["router"] = router.to_json();
  const std::string classifier_text = classifiers.dump() + "\n";

  const std::string tokenizer_text = pretty(tokenizer_to_json(tokenizer));

  json bundle;
  bundle["format"] = "bugprio-bundle";
  bundle["version"] = 1;
  bundle["files"] = {
      {kTokenizerFile, sha256_hex(tokenizer_text)},
      {kVocabularyFile, vocab_hash},
      {kTopicModelFile, lda_hash},
      {kClassifierFile, sha256_hex(classifier_text)},
  };

  write_file(dir / kTokenizerFile, tokenizer_text);
  write_file(dir / kVocabularyFile, vocab_text.str());
  write_file(dir / kTopicModelFile, lda_text.str());
  write_file(dir / kClassifierFile, classifier_text);
  write_file(dir / kBundleFile, pretty(bundle));
}

ModelBundle ModelBundle::load(const fs::path& dir) {
  if (!fs::exists(dir / kBundleFile)) {
    throw Error(ErrorKind::kInput, "no model bundle at " + dir.string() + " (run train first)");
  }
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kBundleFile));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kIntegrity, std::string("bundle.json: ") + e.what());
  }
  if (manifest.value("format", "") != "bugprio-bundle" || manifest.value("version", 0) != 1) {
    throw Error(ErrorKind::kIntegrity, "unsupported bundle format");
  }

  auto verified = [&](const char* name) {
    std::string text = read_file(dir / name);
    const auto expected = manifest["files"].value(name, std::string());
    if (sha256_hex(text) != expected) {
      throw Error(ErrorKind::kIntegrity, std::string(name) + " does not match its recorded hash");
    }
    return text;
  };

  ModelBundle b;
  const std::string tokenizer_text = verified(kTokenizerFile);
  const std::string vocab_text = verified(kVocabularyFile);
  const std::string lda_text = verified(kTopicModelFile);
  const std::string classifier_text = verified(kClassifierFile);

  try {
    b.tokenizer = tokenizer_from_json(json::parse(tokenizer_text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kInput, std::string("tokenizer.json: ") + e.what());
  }
  std::istringstream vocab_in(vocab_text);
  b.vocabulary = Vocabulary::load(vocab_in);
  std::istringstream lda_in(lda_text);
  b.lda = LdaModel::load(lda_in);

  const std::string vocab_hash = sha256_hex(vocab_text);
  if (b.lda.vocabulary_hash() != vocab_hash) {
    throw Error(ErrorKind::kIntegrity, "topic model was built over a different vocabulary");
  }
  if (b.lda.vocab_size() != b.vocabulary.size()) {
    throw Error(ErrorKind::kIntegrity, "topic model and vocabulary differ in size");
  }

  json classifiers;
  try {
    classifiers = json::parse(classifier_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kInput, std::string("classifiers.json: ") + e.what());
  }
  if (classifiers.value("vocabulary_sha256", "") != vocab_hash) {
    throw Error(ErrorKind::kIntegrity, "classifiers were trained over a different vocabulary");
  }
  if (classifiers.value("topic_model_sha256", "") != sha256_hex(lda_text)) {
    throw Error(ErrorKind::kIntegrity, "classifiers were trained with a different topic model");
  }
  b.router = TopicRoutedClassifier::from_json(classifiers.at("router"));
  if (b.router.num_topics() != b.lda.num_topics()) {
    throw Error(ErrorKind::kIntegrity, "router and topic model disagree on the topic count");
  }
  return b;
}

Prediction predict_routed(const TopicRoutedClassifier& router, const LdaModel& lda, const Vocabulary& vocab,
                          const BugReport& report, const TokenizerConfig& tokenizer, RemoteClassifier* remote) {
  const auto tokens = tokenize(report, tokenizer);
  RoutedQuery q;
  q.bug_id = report.bug_id;
  q.features = vectorize(tokens, vocab);
  q.topic = assign_topic(infer_theta(lda, q.features));
  if (router.kind() != ClassifierKind::External) return router.predict(q.bug_id, q.topic, q.features);
  q.text = raw_classification_text(report);
  return router.predict_batch(std::span(&q, 1), remote).front();
}

std::vector<Prediction> predict_reports(const ModelBundle& bundle, std::span<const BugReport> reports,
                                        RemoteClassifier* remote) {
  const auto queries = build_queries(bundle, reports);
  return bundle.router.predict_batch(queries, remote);
}

json to_json(const Prediction& p) {
  json j;
  j["bug_id"] = p.bug_id;
  j["priority"] = to_string(p.priority);
  j["topic"] = p.topic;
  j["fallback"] = p.used_fallback;
  auto scores = json::array();
  for (double s : p.scores) scores.push_back(std::isfinite(s) ? json(s) : json(nullptr));
  j["scores"] = scores;
  return j;
}

std::vector<BugReport> read_canonical_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open " + path.string());
  std::vector<BugReport> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(report_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const fs::path& run_dir) {
  std::vector<std::pair<std::string, fs::path>> files;
  for (auto it = fs::recursive_directory_iterator(run_dir); it != fs::recursive_directory_iterator(); ++it) {
    const auto rel = fs::relative(it->path(), run_dir);
    if (rel.begin()->string().starts_with(".")) {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file() || rel == "manifest.json") continue;
    files.emplace_back(rel.generic_string(), it->path());
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& [rel, abs] : files) {
    list.push_back({{"path", rel}, {"bytes", fs::file_size(abs)}, {"sha256", sha256_file(abs)}});
  }
  write_file(run_dir / "manifest.json", pretty(json{{"format", "bugprio-manifest"}, {"version", 1}, {"files", list}}));
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(const PipelineConfig& config, std::ostream& log) {
  if (config.dataset.path.empty()) throw config_error("dataset.path is not set");
  std::ifstream in(config.dataset.path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInput, "cannot open dataset " + config.dataset.path.string());

  auto parsed = parse_dataset(in, config.dataset.format, config.dataset.columns);
  if (config.dataset.order_key_range) {
    const auto [first, last] = *config.dataset.order_key_range;
    parsed.reports = filter_order_key_range(parsed.reports, first, last);
  }
  if (parsed.reports.empty()) {
    throw Error(ErrorKind::kInput, "dataset " + config.dataset.path.string() + " contains no usable records");
  }

  const RunLayout run{config.output_dir};
  write_file(run.corpus(), canonical_jsonl(parsed.reports));
  std::ostringstream rejects;
  write_rejects_jsonl(rejects, parsed.rejects);
  write_file(run.rejects(), rejects.str());
  const auto dist = distribution_report(parsed.reports);
  write_file(run.distribution(), pretty(to_json(dist)));

  log << "ingested " << parsed.reports.size() << " reports, rejected " << parsed.rejects.size() << " rows\n";
  for (auto c : kAllPriorities) {
    log << "  " << to_string(c) << ": " << dist.counts[index_of(c)] << " (" << dist.shares[index_of(c)] << ")\n";
  }
  if (dist.unknown) log << "  unknown priority: " << dist.unknown << '\n';
  write_manifest(run.root);
}

void cmd_train(const PipelineConfig& config, std::ostream& log, RemoteClassifier* remote) {
  if (config.classifier.kind == ClassifierKind::External && !remote &&
      (!config.external || config.external->command.empty())) {
    throw config_error("classifier kind 'external' needs external.command in the config");
  }
  const RunLayout run{config.output_dir};
  if (!fs::exists(run.corpus())) throw Error(ErrorKind::kInput, "no canonical corpus (run ingest first)");

  const fs::path staging = run.root / ".train-staging";
  remove_quietly(staging);
  try {
    std::vector<PhaseRecord> phases;
    const auto corpus = read_canonical_jsonl(run.corpus());
    const auto eligible = filter_training_eligible(corpus);
    const auto split = chronological_split(eligible, config.split);
    log << "training-eligible reports: " << eligible.size() << " of " << corpus.size() << "; train "
        << split.train.size() << ", test " << split.test.size() << '\n';
    write_file(staging / "split" / "train.jsonl", canonical_jsonl(split.train));
    write_file(staging / "split" / "test.jsonl", canonical_jsonl(split.test));

    PhaseTimer vec_timer("vectorize");
    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(split.train.size());
    for (const auto& r : split.train) token_lists.push_back(tokenize(r, config.tokenizer));
    const auto vocab = Vocabulary::build(token_lists, config.vocab_min_count);
    std::vector<CountVector> vectors;
    vectors.reserve(token_lists.size());
    for (const auto& t : token_lists) vectors.push_back(vectorize(t, vocab));
    phases.push_back(vec_timer.stop(split.train.size()));
    log << "vocabulary: " << vocab.size() << " tokens\n";

    PhaseTimer lda_timer("lda_fit");
    LdaConfig lda_config = config.lda;
    lda_config.seed = config.seed;
    auto lda = fit_lda(vectors, vocab.size(), lda_config);
    phases.push_back(lda_timer.stop(split.train.size()));

    std::vector<std::size_t> assignments;
    assignments.reserve(vectors.size());
    for (const auto& theta : lda.train_theta()) assignments.push_back(assign_topic(theta));
    const auto hist = topic_histogram(assignments, lda.num_topics());
    log << "topic histogram:";
    for (auto n : hist) log << ' ' << n;
    log << '\n';

    std::vector<TrainingExample> examples(split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      examples[i].bug_id = split.train[i].bug_id;
      examples[i].topic = assignments[i];
      examples[i].features = std::move(vectors[i]);
      examples[i].label = split.train[i].priority;
      if (config.classifier.kind == ClassifierKind::External) {
        examples[i].text = raw_classification_text(split.train[i]);
      }
    }
    RouterOptions options = config.classifier;
    options.num_topics = lda.num_topics();
    options.vocab_size = vocab.size();

    auto handle = connect_remote(config, options.kind, remote);
    PhaseTimer cls_timer("train:" + std::string(to_string(options.kind)));
    auto router = TopicRoutedClassifier::train(examples, options, handle.ptr);
    phases.push_back(cls_timer.stop(examples.size()));
    std::size_t own = 0;
    for (std::size_t t = 0; t < router.num_topics(); ++t) own += router.uses_fallback(t) ? 0 : 1;
    log << "classifiers: " << own << " topic models + pooled fallback (" << to_string(options.kind) << ")\n";

    ModelBundle bundle{config.tokenizer, vocab, std::move(lda), std::move(router)};
    bundle.save(staging / "bundle");

    json hist_json;
    hist_json["num_topics"] = hist.size();
    hist_json["counts"] = hist;
    write_file(staging / "reports" / "topic_histogram.json", pretty(hist_json));
    write_file(staging / "reports" / "timing_train.json", pretty(to_json(timing_report(phases))));

    // Publish: replace previous outputs of this command.
    for (const auto& rel : {fs::path("split") / "train.jsonl", fs::path("split") / "test.jsonl",
                            fs::path("reports") / "topic_histogram.json", fs::path("reports") / "timing_train.json"}) {
      fs::create_directories((run.root / rel).parent_path());
      fs::rename(staging / rel, run.root / rel);
    }
    remove_quietly(run.bundle());
    fs::rename(staging / "bundle", run.bundle());
    remove_quietly(staging);
  } catch (...) {
    remove_quietly(staging);
    throw;
  }
  write_manifest(run.root);
}

MetricsReport cmd_evaluate(const PipelineConfig& config, std::ostream& log, RemoteClassifier* remote) {
  const RunLayout run{config.output_dir};
  const auto bundle = ModelBundle::load(run.bundle());
  if (!fs::exists(run.test_split())) throw Error(ErrorKind::kInput, "no test split (run train first)");
  const auto test = read_canonical_jsonl(run.test_split());
  if (test.empty()) throw Error(ErrorKind::kInput, "test split is empty");

  auto handle = connect_remote(config, bundle.router.kind(), remote);
  PhaseTimer timer("predict:" + std::string(to_string(bundle.router.kind())));
  const auto preds = predict_reports(bundle, test, handle.ptr);
  std::vector<PhaseRecord> phases{timer.stop(test.size())};

  std::vector<Priority> predicted;
  predicted.reserve(preds.size());
  std::ostringstream pred_lines;
  for (const auto& p : preds) {
    predicted.push_back(p.priority);
    pred_lines << to_json(p).dump() << '\n';
  }
  const auto report = make_metrics_report(confusion(labels_of(test), predicted), config.zero_division);

  write_file(run.reports() / "metrics.json", pretty(to_json(report)));
  std::ostringstream csv_text;
  write_metrics_csv(csv_text, report);
  write_file(run.reports() / "metrics.csv", csv_text.str());
  write_file(run.reports() / "predictions.jsonl", pred_lines.str());
  const auto timing = timing_report(phases);
  write_file(run.reports() / "timing_evaluate.json", pretty(to_json(timing)));

  print_metrics_table(log, report);
  log << '\n';
  print_timing_table(log, timing);
  write_manifest(run.root);
  return report;
}

PredictStats cmd_predict(const ModelBundle& bundle, std::istream& in, std::ostream& out, RemoteClassifier* remote) {
  PredictStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto report = report_from_json(json::parse(line));
      const auto p = predict_routed(bundle.router, bundle.lda, bundle.vocabulary, report, bundle.tokenizer, remote);
      out << to_json(p).dump() << '\n';
      ++stats.predicted;
    } catch (const std::exception& e) {
      out << json{{"line", line_no}, {"error", e.what()}}.dump(-1, ' ', false, json::error_handler_t::replace)
          << '\n';
      ++stats.errors;
    }
  }
  out.flush();
  return stats;
}

void cmd_report(const fs::path& run_dir, std::ostream& out) {
  const RunLayout run{run_dir};
  bool any = false;
  if (fs::exists(run.distribution())) {
    any = true;
    const auto d = json::parse(read_file(run.distribution()));
    out << "priority distribution\n";
    for (auto c : kAllPriorities) {
      const std::string k(to_string(c));
      out << "  " << k << "  " << d["counts"][k] << "  " << d["shares"][k] << '\n';
    }
    out << '\n';
  }
  if (fs::exists(run.reports() / "topic_histogram.json")) {
    any = true;
    const auto h = json::parse(read_file(run.reports() / "topic_histogram.json"));
    out << "topic histogram\n";
    const auto& counts = h["counts"];
    for (std::size_t t = 0; t < counts.size(); ++t) out << "  topic " << t << "  " << counts[t] << '\n';
    out << '\n';
  }
  for (const char* name : {"timing_train.json", "timing_evaluate.json"}) {
    const auto path = run.reports() / name;
    if (!fs::exists(path)) continue;
    any = true;
    const auto t = json::parse(read_file(path));
    TimingReport tr;
    for (const auto& row : t["phases"]) {
      TimingRow r{row["phase"], row["seconds"], row["items"], std::nullopt};
      if (!row["seconds_per_item"].is_null()) r.seconds_per_item = row["seconds_per_item"].get<double>();
      tr.rows.push_back(r);
    }
    if (!t["peak_memory_kb"].is_null()) tr.peak_memory_kb = t["peak_memory_kb"].get<std::uint64_t>();
    out << name << '\n';
    print_timing_table(out, tr);
    out << '\n';
  }
  if (fs::exists(run.reports() / "metrics.json")) {
    any = true;
    const auto m = json::parse(read_file(run.reports() / "metrics.json"));
    const auto cells = m["confusion"]["cells"].get<ConfusionMatrix::Cells>();
    const auto policy = m["zero_division"] == "exclude" ? ZeroDivisionPolicy::kExclude : ZeroDivisionPolicy::kZero;
    print_metrics_table(out, make_metrics_report(ConfusionMatrix(cells), policy));
  }
  if (!any) throw Error(ErrorKind::kInput, "nothing to report in " + run_dir.string());
}

}  // namespace bugprio
