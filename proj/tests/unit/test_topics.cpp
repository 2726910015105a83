#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bugprio/error.hpp"
#include "bugprio/topics.hpp"
#include "synthetic.hpp"

using namespace bugprio;

namespace {

LdaConfig quick_config(std::size_t k, std::uint64_t seed = 3) {
  auto c = LdaConfig::with_topics(k, seed);
  c.iterations = 200;
  c.burn_in = 50;
  c.inference_iterations = 50;
  return c;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

// Fitted topic -> planted topic, minimising the worst total variation.
std::vector<std::size_t> best_permutation(const LdaModel& m, const fixtures::PlantedCorpus& c) {
  std::vector<std::size_t> perm(m.num_topics());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_cost = 1e9;
  do {
    double cost = 0.0;
    for (std::size_t k = 0; k < perm.size(); ++k) cost = std::max(cost, total_variation(m.phi_row(k), c.planted_phi[perm[k]]));
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

CountVector single_word_doc(std::uint32_t w, std::uint32_t n) { return CountVector{{{w, n}}, n}; }

}  // namespace

TEST(LdaConfig, Defaults) {
  LdaConfig c;
  EXPECT_EQ(c.num_topics, 10u);
  EXPECT_DOUBLE_EQ(c.alpha, 5.0);
  EXPECT_DOUBLE_EQ(c.beta, 0.01);
  EXPECT_EQ(c.iterations, 1000u);
  EXPECT_EQ(c.burn_in, 200u);
  EXPECT_EQ(c.inference_iterations, 100u);
  EXPECT_DOUBLE_EQ(LdaConfig::with_topics(4).alpha, 12.5);
}

TEST(LdaConfig, Validation) {
  auto c = quick_config(3);
  c.alpha = 0;
  EXPECT_THROW(c.validate(), Error);
  c = quick_config(3);
  c.iterations = c.burn_in;
  EXPECT_THROW(c.validate(), Error);
  c = quick_config(3);
  c.num_topics = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Lda, PlantedTopicsRecovered) {
  auto corpus = fixtures::planted_corpus(3, 10, 300, 50, 17);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3));
  auto perm = best_permutation(model, corpus);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LT(total_variation(model.phi_row(k), corpus.planted_phi[perm[k]]), 0.1) << "topic " << k;
  }
  std::size_t hits = 0;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    if (perm[assign_topic(model.train_theta()[d])] == corpus.topics[d]) ++hits;
  }
  EXPECT_GE(hits, 285u);
}

TEST(Lda, HeldOutDocumentRoutesToPlantedTopic) {
  auto corpus = fixtures::planted_corpus(3, 10, 300, 50, 17);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3));
  auto perm = best_permutation(model, corpus);
  CountVector doc{{{20, 3}, {23, 2}, {27, 4}}, 9};  // topic 2's lexicon
  auto theta = infer_theta(model, doc);
  EXPECT_EQ(perm[assign_topic(theta)], 2u);

  CountVector doubled = doc;
  for (auto& t : doubled.terms) t.count *= 2;
  doubled.total *= 2;
  EXPECT_EQ(assign_topic(infer_theta(model, doubled)), assign_topic(theta));
}

TEST(Lda, ConservationAfterEverySweep) {
  auto corpus = fixtures::planted_corpus(4, 6, 120, 30, 2);
  std::size_t sweeps = 0;
  FitOptions opts;
  opts.on_sweep = [&](const SweepStats& s) {
    ++sweeps;
    ASSERT_EQ(s.topic_total_sum, s.corpus_tokens);
    ASSERT_EQ(s.topic_word_sum, s.corpus_tokens);
    ASSERT_EQ(s.doc_topic_sum, s.corpus_tokens);
    ASSERT_TRUE(s.rows_consistent);
  };
  auto config = quick_config(4);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, config, opts);
  EXPECT_EQ(sweeps, config.iterations);
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    std::uint64_t row = 0;
    for (std::size_t w = 0; w < corpus.vocab_size; ++w) row += model.topic_word_count(k, w);
    EXPECT_EQ(row, model.topic_total(k));
    total += row;
  }
  EXPECT_EQ(total, 120u * 30u);
}

TEST(Lda, SameSeedBitIdentical) {
  auto corpus = fixtures::planted_corpus(3, 8, 90, 25, 9);
  auto a = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3, 42));
  auto b = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3, 42));
  EXPECT_TRUE(a == b);
  std::ostringstream sa, sb;
  a.save(sa);
  b.save(sb);
  EXPECT_EQ(sa.str(), sb.str());
  auto c = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3, 43));
  std::ostringstream sc;
  c.save(sc);
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Lda, DistributionsNormalised) {
  auto corpus = fixtures::planted_corpus(3, 8, 60, 20, 4);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3));
  for (std::size_t k = 0; k < 3; ++k) {
    auto row = model.phi_row(k);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
  }
  for (const auto& theta : model.train_theta()) {
    EXPECT_NEAR(std::accumulate(theta.begin(), theta.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Lda, LogLikelihoodImproves) {
  auto corpus = fixtures::planted_corpus(3, 10, 150, 40, 8);
  std::vector<double> ll;
  FitOptions opts;
  opts.track_log_likelihood = true;
  opts.on_sweep = [&](const SweepStats& s) { ll.push_back(s.log_likelihood); };
  fit_lda(corpus.docs, corpus.vocab_size, quick_config(3), opts);
  ASSERT_GE(ll.size(), 20u);
  const double head = std::accumulate(ll.begin(), ll.begin() + 5, 0.0) / 5;
  const double tail = std::accumulate(ll.end() - 5, ll.end(), 0.0) / 5;
  EXPECT_GT(tail, head);
  EXPECT_GT(ll.back(), ll.front());
}

TEST(Lda, SingleTopicDegenerate) {
  std::vector<CountVector> docs{single_word_doc(0, 3), CountVector{{{0, 1}, {1, 4}}, 5}};
  auto config = quick_config(1);
  config.beta = 0.5;
  auto model = fit_lda(docs, 3, config);
  for (const auto& theta : model.train_theta()) EXPECT_DOUBLE_EQ(theta[0], 1.0);
  // (N_w + beta) / (N + V beta) with corpus frequencies 4, 4, 0
  EXPECT_NEAR(model.phi(0, 0), 4.5 / 9.5, 1e-12);
  EXPECT_NEAR(model.phi(0, 1), 4.5 / 9.5, 1e-12);
  EXPECT_NEAR(model.phi(0, 2), 0.5 / 9.5, 1e-12);
}

TEST(Lda, Errors) {
  EXPECT_THROW(fit_lda(std::vector<CountVector>{}, 3, quick_config(2)), Error);
  EXPECT_THROW(fit_lda(std::vector<CountVector>{single_word_doc(0, 1)}, 0, quick_config(2)), Error);
}

TEST(Inference, EmptyDocumentIsUniform) {
  auto corpus = fixtures::planted_corpus(4, 5, 40, 10, 1);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(4));
  auto theta = infer_theta(model, CountVector{});
  for (double t : theta) EXPECT_DOUBLE_EQ(t, 0.25);
}

TEST(Inference, Deterministic) {
  auto corpus = fixtures::planted_corpus(3, 6, 60, 20, 5);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3));
  EXPECT_EQ(infer_theta(model, corpus.docs[7]), infer_theta(model, corpus.docs[7]));
}

TEST(AssignTopic, ArgmaxLowestTie) {
  EXPECT_EQ(assign_topic(std::vector{0.1, 0.7, 0.2}), 1u);
  EXPECT_EQ(assign_topic(std::vector{0.5, 0.5}), 0u);
  EXPECT_THROW(assign_topic(std::vector{0.5, 0.6}), Error);
  EXPECT_THROW(assign_topic(std::vector<double>{}), Error);
}

TEST(TopicHistogram, Counts) {
  EXPECT_EQ(topic_histogram(std::vector<std::size_t>{0, 0, 1}, 2), (std::vector<std::uint64_t>{2, 1}));
  EXPECT_EQ(topic_histogram(std::vector<std::size_t>{}, 3), (std::vector<std::uint64_t>{0, 0, 0}));
}

TEST(LdaModel, SaveLoadRoundTrip) {
  auto corpus = fixtures::planted_corpus(3, 6, 60, 20, 5);
  auto model = fit_lda(corpus.docs, corpus.vocab_size, quick_config(3));
  model.bind_vocabulary("abc123");
  std::stringstream s;
  model.save(s);
  auto loaded = LdaModel::load(s);
  EXPECT_EQ(loaded.vocabulary_hash(), "abc123");
  EXPECT_EQ(loaded.config(), model.config());
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t w = 0; w < corpus.vocab_size; ++w) {
      ASSERT_EQ(loaded.topic_word_count(k, w), model.topic_word_count(k, w));
      ASSERT_DOUBLE_EQ(loaded.phi(k, w), model.phi(k, w));
    }
  }
  EXPECT_EQ(infer_theta(loaded, corpus.docs[3]), infer_theta(model, corpus.docs[3]));
}

TEST(LdaModel, LoadRejectsWrongTag) {
  std::stringstream s("not-a-model 1\n{}\n");
  EXPECT_THROW(LdaModel::load(s), Error);
}
