#include "bugprio/topics.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bugprio/error.hpp"

namespace bugprio {
namespace {

constexpr std::string_view kFormatTag = "bugprio-lda 1";

// 53 random bits mapped onto [0, 1). Independent of the standard library's
// distribution implementations, so results match across toolchains.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_index(std::mt19937_64& rng, std::span<const double> cumulative) {
  const double u = uniform01(rng) * cumulative.back();
  std::size_t k = 0;
  while (k + 1 < cumulative.size() && cumulative[k] <= u) ++k;
  return k;
}

// Token-level view of a bag-of-words corpus.
struct TokenCorpus {
  std::vector<std::uint32_t> words;
  std::vector<std::size_t> doc_begin;  // size D + 1
};

TokenCorpus expand(std::span<const CountVector> docs, std::size_t vocab_size) {
  TokenCorpus c;
  c.doc_begin.reserve(docs.size() + 1);
  c.doc_begin.push_back(0);
  for (const auto& doc : docs) {
    for (const auto& t : doc.terms) {
      if (t.index >= vocab_size) {
        throw Error(ErrorKind::kInvalidArgument, "term index " + std::to_string(t.index) +
                                                     " outside vocabulary of size " +
                                                     std::to_string(vocab_size));
      }
      c.words.insert(c.words.end(), t.count, t.index);
    }
    c.doc_begin.push_back(c.words.size());
  }
  return c;
}

double log_joint(const std::vector<std::uint32_t>& word_topic, const std::vector<std::uint64_t>& nk,
                 const std::vector<std::uint32_t>& ndk, const TokenCorpus& corpus, std::size_t K,
                 std::size_t V, double alpha, double beta) {
  double ll = 0.0;
  const double lg_beta = std::lgamma(beta);
  for (std::size_t k = 0; k < K; ++k) {
    ll += std::lgamma(V * beta) - std::lgamma(static_cast<double>(nk[k]) + V * beta);
  }
  for (std::size_t w = 0; w < V; ++w) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto n = word_topic[w * K + k];
      if (n) ll += std::lgamma(n + beta) - lg_beta;
    }
  }
  const double lg_alpha = std::lgamma(alpha);
  const std::size_t D = corpus.doc_begin.size() - 1;
  for (std::size_t d = 0; d < D; ++d) {
    const auto len = static_cast<double>(corpus.doc_begin[d + 1] - corpus.doc_begin[d]);
    ll += std::lgamma(K * alpha) - std::lgamma(len + K * alpha);
    for (std::size_t k = 0; k < K; ++k) {
      const auto n = ndk[d * K + k];
      if (n) ll += std::lgamma(n + alpha) - lg_alpha;
    }
  }
  return ll;
}

}  // namespace

LdaConfig LdaConfig::with_topics(std::size_t k, std::uint64_t seed) {
  LdaConfig c;
  c.num_topics = k;
  c.alpha = 50.0 / static_cast<double>(k);
  c.seed = seed;
  return c;
}

void LdaConfig::validate() const {
  if (num_topics < 1) throw Error(ErrorKind::kInvalidArgument, "LDA needs at least one topic");
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "LDA priors must be positive");
  }
  if (iterations <= burn_in) {
    throw Error(ErrorKind::kInvalidArgument, "LDA iterations must exceed burn_in");
  }
}

LdaModel::LdaModel(LdaConfig config, std::size_t vocab_size, std::vector<std::uint32_t> topic_word,
                   std::vector<std::uint64_t> topic_totals,
                   std::vector<std::vector<double>> train_theta)
    : config_(config),
      vocab_size_(vocab_size),
      topic_word_(std::move(topic_word)),
      topic_totals_(std::move(topic_totals)),
      train_theta_(std::move(train_theta)) {
  if (topic_word_.size() != config_.num_topics * vocab_size_ ||
      topic_totals_.size() != config_.num_topics) {
    throw Error(ErrorKind::kInvalidArgument, "LDA count matrix has the wrong shape");
  }
  compute_phi();
}

void LdaModel::compute_phi() {
  const std::size_t K = config_.num_topics;
  const std::size_t V = vocab_size_;
  phi_.resize(K * V);
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = static_cast<double>(topic_totals_[k]) + static_cast<double>(V) * config_.beta;
    for (std::size_t w = 0; w < V; ++w) {
      phi_[k * V + w] = (topic_word_[k * V + w] + config_.beta) / denom;
    }
  }
}

std::vector<double> LdaModel::phi_row(std::size_t k) const {
  return {phi_.begin() + static_cast<std::ptrdiff_t>(k * vocab_size_),
          phi_.begin() + static_cast<std::ptrdiff_t>((k + 1) * vocab_size_)};
}

bool operator==(const LdaModel& a, const LdaModel& b) {
  return a.config_ == b.config_ && a.vocab_size_ == b.vocab_size_ && a.topic_word_ == b.topic_word_ &&
         a.topic_totals_ == b.topic_totals_ && a.vocabulary_hash_ == b.vocabulary_hash_;
}

void LdaModel::save(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["num_topics"] = config_.num_topics;
  header["vocab_size"] = vocab_size_;
  header["alpha"] = config_.alpha;
  header["beta"] = config_.beta;
  header["seed"] = config_.seed;
  header["iterations"] = config_.iterations;
  header["burn_in"] = config_.burn_in;
  header["inference_iterations"] = config_.inference_iterations;
  header["vocabulary_sha256"] = vocabulary_hash_;
  out << kFormatTag << '\n' << header.dump() << '\n';
  for (std::size_t k = 0; k < config_.num_topics; ++k) {
    for (std::size_t w = 0; w < vocab_size_; ++w) {
      if (w) out << ' ';
      out << topic_word_[k * vocab_size_ + w];
    }
    out << '\n';
  }
}

LdaModel LdaModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kFormatTag) {
    throw Error(ErrorKind::kInput, "topic model: unsupported format tag");
  }
  if (!std::getline(in, line)) throw Error(ErrorKind::kInput, "topic model: missing header");
  LdaConfig cfg;
  std::size_t V = 0;
  std::string vocab_hash;
  try {
    auto h = nlohmann::json::parse(line);
    cfg.num_topics = h.at("num_topics").get<std::size_t>();
    V = h.at("vocab_size").get<std::size_t>();
    cfg.alpha = h.at("alpha").get<double>();
    cfg.beta = h.at("beta").get<double>();
    cfg.seed = h.at("seed").get<std::uint64_t>();
    cfg.iterations = h.at("iterations").get<std::size_t>();
    cfg.burn_in = h.at("burn_in").get<std::size_t>();
    cfg.inference_iterations = h.at("inference_iterations").get<std::size_t>();
    vocab_hash = h.at("vocabulary_sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("topic model header: ") + e.what());
  }
  cfg.validate();
  std::vector<std::uint32_t> counts(cfg.num_topics * V);
  std::vector<std::uint64_t> totals(cfg.num_topics, 0);
  for (std::size_t k = 0; k < cfg.num_topics; ++k) {
    if (!std::getline(in, line)) throw Error(ErrorKind::kInput, "topic model: truncated matrix");
    std::istringstream row(line);
    for (std::size_t w = 0; w < V; ++w) {
      if (!(row >> counts[k * V + w])) throw Error(ErrorKind::kInput, "topic model: short row");
      totals[k] += counts[k * V + w];
    }
  }
  LdaModel m(cfg, V, std::move(counts), std::move(totals), {});
  m.bind_vocabulary(std::move(vocab_hash));
  return m;
}

LdaModel fit_lda(std::span<const CountVector> docs, std::size_t vocab_size, const LdaConfig& config,
                 const FitOptions& options) {
  config.validate();
  if (docs.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot fit LDA on an empty corpus");
  if (vocab_size == 0) throw Error(ErrorKind::kInvalidArgument, "cannot fit LDA with V = 0");

  const std::size_t K = config.num_topics;
  const std::size_t V = vocab_size;
  const std::size_t D = docs.size();
  const double alpha = config.alpha;
  const double beta = config.beta;
  const double v_beta = static_cast<double>(V) * beta;

  const TokenCorpus corpus = expand(docs, V);
  const std::size_t N = corpus.words.size();

  std::mt19937_64 rng(config.seed);
  std::vector<std::uint32_t> z(N);
  std::vector<std::uint32_t> word_topic(V * K, 0);  // word-major while sampling
  std::vector<std::uint64_t> nk(K, 0);
  std::vector<std::uint32_t> ndk(D * K, 0);

  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = corpus.doc_begin[d]; i < corpus.doc_begin[d + 1]; ++i) {
      const auto k = static_cast<std::uint32_t>(uniform01(rng) * static_cast<double>(K));
      z[i] = k;
      ++word_topic[corpus.words[i] * K + k];
      ++nk[k];
      ++ndk[d * K + k];
    }
  }

  std::vector<double> cumulative(K);
  for (std::size_t sweep = 1; sweep <= config.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      std::uint32_t* doc_counts = &ndk[d * K];
      for (std::size_t i = corpus.doc_begin[d]; i < corpus.doc_begin[d + 1]; ++i) {
        const std::uint32_t w = corpus.words[i];
        std::uint32_t* wt = &word_topic[w * K];
        std::uint32_t k = z[i];
        --wt[k];
        --nk[k];
        --doc_counts[k];

        double acc = 0.0;
        for (std::size_t t = 0; t < K; ++t) {
          acc += (wt[t] + beta) / (static_cast<double>(nk[t]) + v_beta) * (doc_counts[t] + alpha);
          cumulative[t] = acc;
        }
        k = static_cast<std::uint32_t>(sample_index(rng, cumulative));

        z[i] = k;
        ++wt[k];
        ++nk[k];
        ++doc_counts[k];
      }
    }

    if (options.on_sweep) {
      SweepStats stats;
      stats.sweep = sweep;
      stats.corpus_tokens = N;
      stats.topic_total_sum = std::accumulate(nk.begin(), nk.end(), std::uint64_t{0});
      std::vector<std::uint64_t> row_sums(K, 0);
      for (std::size_t w = 0; w < V; ++w) {
        for (std::size_t k = 0; k < K; ++k) row_sums[k] += word_topic[w * K + k];
      }
      stats.topic_word_sum = std::accumulate(row_sums.begin(), row_sums.end(), std::uint64_t{0});
      stats.rows_consistent = row_sums == nk;
      stats.doc_topic_sum = std::accumulate(ndk.begin(), ndk.end(), std::uint64_t{0});
      if (options.track_log_likelihood) {
        stats.log_likelihood = log_joint(word_topic, nk, ndk, corpus, K, V, alpha, beta);
      }
      options.on_sweep(stats);
    }
  }

  std::vector<std::uint32_t> topic_word(K * V);
  for (std::size_t w = 0; w < V; ++w) {
    for (std::size_t k = 0; k < K; ++k) topic_word[k * V + w] = word_topic[w * K + k];
  }

  std::vector<std::vector<double>> theta(D, std::vector<double>(K));
  for (std::size_t d = 0; d < D; ++d) {
    const double len = static_cast<double>(corpus.doc_begin[d + 1] - corpus.doc_begin[d]);
    const double denom = len + static_cast<double>(K) * alpha;
    for (std::size_t k = 0; k < K; ++k) theta[d][k] = (ndk[d * K + k] + alpha) / denom;
  }

  return LdaModel(config, V, std::move(topic_word), std::move(nk), std::move(theta));
}

std::vector<double> infer_theta(const LdaModel& model, const CountVector& doc) {
  const std::size_t K = model.num_topics();
  const double alpha = model.config().alpha;
  if (doc.empty()) return std::vector<double>(K, 1.0 / static_cast<double>(K));

  std::vector<std::uint32_t> words;
  for (const auto& t : doc.terms) {
    if (t.index >= model.vocab_size()) {
      throw Error(ErrorKind::kInvalidArgument, "document term outside the model vocabulary");
    }
    words.insert(words.end(), t.count, t.index);
  }

  std::mt19937_64 rng(model.config().seed);
  std::vector<std::uint32_t> z(words.size());
  std::vector<std::uint32_t> counts(K, 0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    z[i] = static_cast<std::uint32_t>(uniform01(rng) * static_cast<double>(K));
    ++counts[z[i]];
  }

  std::vector<double> cumulative(K);
  for (std::size_t sweep = 0; sweep < model.config().inference_iterations; ++sweep) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      --counts[z[i]];
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        acc += model.phi(k, words[i]) * (counts[k] + alpha);
        cumulative[k] = acc;
      }
      z[i] = static_cast<std::uint32_t>(sample_index(rng, cumulative));
      ++counts[z[i]];
    }
  }

  std::vector<double> theta(K);
  const double denom = static_cast<double>(words.size()) + static_cast<double>(K) * alpha;
  for (std::size_t k = 0; k < K; ++k) theta[k] = (counts[k] + alpha) / denom;
  return theta;
}

std::size_t assign_topic(std::span<const double> theta) {
  if (theta.empty()) throw Error(ErrorKind::kInvalidArgument, "empty topic mixture");
  const double sum = std::accumulate(theta.begin(), theta.end(), 0.0);
  if (!(std::abs(sum - 1.0) <= 1e-6)) {
    throw Error(ErrorKind::kInvalidArgument, "topic mixture does not sum to 1");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < theta.size(); ++k) {
    if (theta[k] > theta[best]) best = k;
  }
  return best;
}

std::vector<std::uint64_t> topic_histogram(std::span<const std::size_t> assignments,
                                           std::size_t num_topics) {
  std::vector<std::uint64_t> hist(num_topics, 0);
  for (auto t : assignments) {
    if (t >= num_topics) throw Error(ErrorKind::kInvalidArgument, "topic id out of range");
    ++hist[t];
  }
  return hist;
}

}  // namespace bugprio
