#include "synthetic.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "bugprio/csv.hpp"

namespace bugprio::fixtures {

PlantedCorpus planted_corpus(std::size_t num_topics, std::size_t lexicon, std::size_t num_docs,
                             std::size_t doc_length, std::uint64_t seed) {
  PlantedCorpus c;
  c.vocab_size = num_topics * lexicon;
  c.planted_phi.assign(num_topics, std::vector<double>(c.vocab_size, 0.0));
  for (std::size_t t = 0; t < num_topics; ++t) {
    for (std::size_t i = 0; i < lexicon; ++i) c.planted_phi[t][t * lexicon + i] = 1.0 / static_cast<double>(lexicon);
  }
  std::mt19937_64 rng(seed);
  for (std::size_t d = 0; d < num_docs; ++d) {
    const std::size_t t = d % num_topics;
    std::vector<std::uint32_t> counts(c.vocab_size, 0);
    for (std::size_t n = 0; n < doc_length; ++n) ++counts[t * lexicon + rng() % lexicon];
    CountVector v;
    for (std::size_t w = 0; w < c.vocab_size; ++w) {
      if (counts[w]) v.terms.push_back({static_cast<std::uint32_t>(w), counts[w]});
    }
    v.total = doc_length;
    c.docs.push_back(std::move(v));
    c.topics.push_back(t);
  }
  return c;
}

std::string topic_word(std::size_t t, std::size_t i) {
  static const char* const kStems[] = {"editor", "debugger", "builder", "search", "compare",
                                       "team", "help", "update", "runtime", "resource"};
  return std::string(kStems[t % 10]) + std::string(1, static_cast<char>('a' + t / 10)) +
         std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i / 26);
}

std::string label_word(Priority p, std::size_t i) {
  return "cue" + std::string(1, static_cast<char>('a' + index_of(p))) + std::string(1, static_cast<char>('a' + i % 26));
}

std::vector<BugReport> synthetic_reports(const ReportSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<BugReport> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t t = rng() % spec.topics;
    const auto& weights = spec.label_weights[std::min(t, spec.label_weights.size() - 1)];
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const Priority label = priority_from_index(pick(rng));

    std::vector<std::string> words;
    for (std::size_t n = 0; n < spec.tokens; ++n) {
      if (unit(rng) < spec.label_signal) {
        words.push_back(label_word(label, rng() % 4));
      } else {
        words.push_back(topic_word(t, rng() % spec.topic_words));
      }
    }
    BugReport r;
    r.bug_id = static_cast<std::int64_t>(i + 1);
    const std::size_t cut = std::min<std::size_t>(5, words.size());
    for (std::size_t n = 0; n < words.size(); ++n) {
      std::string& field = n < cut ? r.summary : r.description;
      if (!field.empty()) field += ' ';
      field += words[n];
    }
    r.product = "Platform";
    r.component = "Comp" + std::to_string(t);
    const bool fixed = unit(rng) < spec.fixed_share;
    r.status = fixed ? BugStatus(Status::Resolved, Resolution::Fixed) : BugStatus(Status::New, Resolution::None);
    r.priority = label;
    r.order_key = static_cast<std::int64_t>(1000 + i);
    out.push_back(std::move(r));
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<BugReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"bug_id", "summary", "description", "product", "component", "status", "resolution",
                       "priority", "order_key"});
  for (const auto& r : reports) {
    csv::write_row(out, {std::to_string(r.bug_id), r.summary, r.description, r.product, r.component,
                         std::string(to_string(r.status.status())), std::string(to_string(r.status.resolution())),
                         std::string(to_string(r.priority)), std::to_string(r.order_key)});
  }
}

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "bugprio-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace bugprio::fixtures
