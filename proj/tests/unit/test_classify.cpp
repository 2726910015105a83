#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "bugprio/classify.hpp"
#include "bugprio/error.hpp"
#include "bugprio/evaluate.hpp"
#include "mock_worker.hpp"
#include "synthetic.hpp"

using namespace bugprio;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CountVector cv(std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> terms) {
  CountVector v;
  for (auto [i, c] : terms) {
    v.terms.push_back({i, c});
    v.total += c;
  }
  return v;
}

CountVector random_vector(std::mt19937_64& rng, std::size_t vocab, std::size_t max_terms) {
  std::map<std::uint32_t, std::uint32_t> counts;
  const std::size_t n = rng() % (max_terms + 1);
  for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::uint32_t>(rng() % vocab)];
  CountVector v;
  for (auto [w, c] : counts) {
    v.terms.push_back({w, c});
    v.total += c;
  }
  return v;
}

// Two words; "aa" is P1, "bb" is P2.
MultinomialNb hand_model() {
  std::vector<CountVector> docs{cv({{0, 2}}), cv({{1, 2}})};
  std::vector<Priority> labels{Priority::P1, Priority::P2};
  return MultinomialNb::train(docs, labels, 2, 1.0);
}

TrainingExample example(std::int64_t id, std::size_t topic, CountVector f, Priority label) {
  TrainingExample e;
  e.bug_id = id;
  e.topic = topic;
  e.features = std::move(f);
  e.label = label;
  e.text = "text " + std::to_string(id);
  return e;
}

}  // namespace

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax_priority({-1, -0.5, -3, -0.5, -9}), Priority::P2);
  EXPECT_EQ(argmax_priority({-kInf, -kInf, -2, -kInf, -kInf}), Priority::P3);
}

TEST(MultinomialNb, HandExampleLikelihoods) {
  auto m = hand_model();
  EXPECT_DOUBLE_EQ(std::exp(m.log_likelihood(Priority::P1, 0)), 0.75);
  EXPECT_DOUBLE_EQ(std::exp(m.log_likelihood(Priority::P1, 1)), 0.25);
  EXPECT_DOUBLE_EQ(std::exp(m.log_prior(Priority::P1)), 0.5);
  EXPECT_EQ(m.log_prior(Priority::P3), -kInf);
}

TEST(MultinomialNb, HandExamplePosterior) {
  auto m = hand_model();
  auto s = m.scores(cv({{0, 2}, {1, 1}}));
  EXPECT_DOUBLE_EQ(s[0], std::log(0.5) + 2 * std::log(0.75) + std::log(0.25));
  EXPECT_DOUBLE_EQ(s[1], std::log(0.5) + 2 * std::log(0.25) + std::log(0.75));
  EXPECT_EQ(s[2], -kInf);
  EXPECT_EQ(m.predict(cv({{0, 2}, {1, 1}})), Priority::P1);
  EXPECT_EQ(m.predict(cv({{1, 3}})), Priority::P2);
  // One of each word: symmetric, so the tie goes to P1.
  EXPECT_EQ(m.predict(cv({{0, 1}, {1, 1}})), Priority::P1);
}

TEST(MultinomialNb, EmptyVectorFollowsPrior) {
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
  const std::array<std::pair<Priority, int>, 5> plan{
      {{Priority::P1, 1}, {Priority::P2, 1}, {Priority::P3, 6}, {Priority::P4, 1}, {Priority::P5, 1}}};
  for (auto [p, n] : plan) {
    for (int i = 0; i < n; ++i) {
      docs.push_back(cv({{0, 1}}));
      labels.push_back(p);
    }
  }
  auto m = MultinomialNb::train(docs, labels, 3);
  EXPECT_EQ(m.predict(CountVector{}), Priority::P3);
}

TEST(MultinomialNb, SingleClassAlwaysPredicted) {
  std::mt19937_64 rng(1);
  std::vector<CountVector> docs;
  for (int i = 0; i < 20; ++i) docs.push_back(random_vector(rng, 30, 10));
  std::vector<Priority> labels(docs.size(), Priority::P4);
  auto m = MultinomialNb::train(docs, labels, 30);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(m.predict(random_vector(rng, 30, 10)), Priority::P4);
}

TEST(MultinomialNb, DistributionsNormalised) {
  std::mt19937_64 rng(2);
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
  for (int i = 0; i < 50; ++i) {
    docs.push_back(random_vector(rng, 40, 12));
    labels.push_back(priority_from_index(rng() % 5));
  }
  auto m = MultinomialNb::train(docs, labels, 40, 0.5);
  double prior = 0;
  for (auto c : kAllPriorities) {
    prior += std::exp(m.log_prior(c));
    if (m.log_prior(c) == -kInf) continue;
    double sum = 0;
    for (std::size_t w = 0; w < 40; ++w) sum += std::exp(m.log_likelihood(c, w));
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_NEAR(prior, 1.0, 1e-12);
}

TEST(MultinomialNb, Errors) {
  EXPECT_THROW(MultinomialNb::train(std::vector<CountVector>{}, std::vector<Priority>{}, 3), Error);
  std::vector<CountVector> one{cv({{0, 1}})};
  EXPECT_THROW(MultinomialNb::train(one, std::vector<Priority>{Priority::Unknown}, 3), Error);
  EXPECT_THROW(MultinomialNb::train(one, std::vector<Priority>{Priority::P1}, 3, 0.0), Error);
  EXPECT_THROW(MultinomialNb::train(one, std::vector<Priority>{Priority::P1, Priority::P2}, 3), Error);
}

TEST(MultinomialNb, BruteForcePosteriorAgreement) {
  std::mt19937_64 rng(3);
  const std::size_t V = 60;
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
  for (int i = 0; i < 200; ++i) {
    docs.push_back(random_vector(rng, V, 15));
    labels.push_back(priority_from_index(rng() % 4));  // P5 absent on purpose
  }
  auto m = MultinomialNb::train(docs, labels, V);
  for (int i = 0; i < 1000; ++i) {
    auto x = random_vector(rng, V, 20);
    ClassScores expected{};
    for (auto c : kAllPriorities) {
      double s = m.log_prior(c);
      for (const auto& t : x.terms) s += t.count * m.log_likelihood(c, t.index);
      expected[index_of(c)] = s;
    }
    ASSERT_EQ(m.predict(x), argmax_priority(expected));
    const auto got = m.scores(x);
    for (std::size_t c = 0; c < 4; ++c) ASSERT_NEAR(got[c], expected[c], 1e-9);
    ASSERT_EQ(got[4], -kInf);
  }
}

TEST(MultinomialNb, ScaledCountsKeepArgmaxAsSmoothingVanishes) {
  std::mt19937_64 rng(4);
  const std::size_t V = 30;
  std::vector<CountVector> docs, scaled;
  std::vector<Priority> labels;
  for (int i = 0; i < 100; ++i) {
    // Every word occurs in every class, so no likelihood is driven by the smoothing term alone.
    CountVector d;
    const auto sparse = random_vector(rng, V, 10);
    for (std::uint32_t w = 0; w < V; ++w) d.terms.push_back({w, 1});
    for (const auto& t : sparse.terms) d.terms[t.index].count += t.count;
    d.total = V + sparse.total;
    auto s = d;
    for (auto& t : s.terms) t.count *= 3;
    s.total *= 3;
    docs.push_back(d);
    scaled.push_back(s);
    labels.push_back(priority_from_index(i % 5));
  }
  auto a = MultinomialNb::train(docs, labels, V, 1e-6);
  auto b = MultinomialNb::train(scaled, labels, V, 1e-6);
  for (int i = 0; i < 200; ++i) {
    auto x = random_vector(rng, V, 8);
    const auto sa = a.scores(x), sb = b.scores(x);
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t d = 0; d < 5; ++d) {
        if (std::isfinite(sa[c] - sa[d]) && std::isfinite(sb[c] - sb[d])) {
          ASSERT_NEAR(sa[c] - sa[d], sb[c] - sb[d], 1e-4);
        }
      }
    }
    ASSERT_EQ(a.predict(x), b.predict(x));
  }
}

TEST(MultinomialNb, JsonRoundTripKeepsAbsentClasses) {
  auto m = hand_model();
  auto j = m.to_json();
  auto back = MultinomialNb::from_json(nlohmann::json::parse(j.dump()));
  auto x = cv({{0, 1}, {1, 3}});
  EXPECT_EQ(back.scores(x), m.scores(x));
  EXPECT_EQ(back.log_prior(Priority::P5), -kInf);
}

TEST(MultinomialNb, ImbalancedWeakFeaturesPredictMajority) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
  for (int i = 0; i < 2000; ++i) {
    labels.push_back(u(rng) < 0.879 ? Priority::P3 : priority_from_index(std::array{0, 1, 3, 4}[rng() % 4]));
    docs.push_back(random_vector(rng, 100, 20));
  }
  auto m = MultinomialNb::train(docs, labels, 100);
  int p3 = 0;
  for (int i = 0; i < 1000; ++i) p3 += m.predict(random_vector(rng, 100, 20)) == Priority::P3;
  EXPECT_GE(p3, 950);
}

TEST(GaussianNb, SymmetricTwoPoint) {
  std::vector<std::vector<double>> rows{{0.0}, {10.0}};
  std::vector<Priority> labels{Priority::P1, Priority::P2};
  auto m = GaussianNb::train(rows, labels);
  EXPECT_EQ(m.predict(std::vector{4.0}), Priority::P1);
  EXPECT_EQ(m.predict(std::vector{6.0}), Priority::P2);
  EXPECT_EQ(m.predict(std::vector{5.0}), Priority::P1);
  EXPECT_DOUBLE_EQ(m.epsilon(), 1e-9 * 25.0);
}

TEST(GaussianNb, ConstantFeatureUsesFloor) {
  std::vector<std::vector<double>> rows{{1.0, 3.0}, {1.0, 5.0}, {1.0, 4.0}};
  std::vector<Priority> labels{Priority::P2, Priority::P2, Priority::P2};
  auto m = GaussianNb::train(rows, labels);
  EXPECT_DOUBLE_EQ(m.variance(Priority::P2, 0), m.epsilon());
  auto s = m.scores(std::vector{1.0, 4.0});
  EXPECT_TRUE(std::isfinite(s[1]));
  s = m.scores(std::vector{2.0, 4.0});
  EXPECT_TRUE(std::isfinite(s[1]));
  EXPECT_EQ(s[0], -kInf);
}

TEST(GaussianNb, MinimumFloorWhenAllConstant) {
  std::vector<std::vector<double>> rows{{2.0}, {2.0}};
  std::vector<Priority> labels{Priority::P1, Priority::P1};
  EXPECT_DOUBLE_EQ(GaussianNb::train(rows, labels).epsilon(), 1e-12);
}

TEST(GaussianNb, BoundaryMatchesBayesBoundary) {
  // N(2, 1) vs N(8, 1), equal priors: the Bayes boundary is x = 5.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> a(2.0, 1.0), b(8.0, 1.0);
  std::vector<std::vector<double>> rows;
  std::vector<Priority> labels;
  for (int i = 0; i < 100; ++i) {
    rows.push_back({a(rng)});
    labels.push_back(Priority::P1);
    rows.push_back({b(rng)});
    labels.push_back(Priority::P2);
  }
  auto m = GaussianNb::train(rows, labels);
  double lo = 2.0, hi = 8.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (m.predict(std::vector{mid}) == Priority::P1 ? lo : hi) = mid;
  }
  EXPECT_NEAR(lo, 5.0, 0.05 * 5.0);
}

TEST(GaussianNb, SparseMatchesDense) {
  std::mt19937_64 rng(7);
  const std::size_t V = 25;
  std::vector<CountVector> docs;
  std::vector<std::vector<double>> dense;
  std::vector<Priority> labels;
  auto densify = [&](const CountVector& v) {
    std::vector<double> row(V, 0.0);
    for (const auto& t : v.terms) row[t.index] = t.count;
    return row;
  };
  for (int i = 0; i < 150; ++i) {
    docs.push_back(random_vector(rng, V, 8));
    dense.push_back(densify(docs.back()));
    labels.push_back(priority_from_index(rng() % 5));
  }
  auto sparse_model = GaussianNb::train(docs, labels, V);
  auto dense_model = GaussianNb::train(dense, labels);
  EXPECT_NEAR(sparse_model.epsilon(), dense_model.epsilon(), 1e-15);
  for (int i = 0; i < 300; ++i) {
    auto x = random_vector(rng, V, 8);
    auto ss = sparse_model.scores(x);
    auto ds = dense_model.scores(densify(x));
    for (std::size_t c = 0; c < 5; ++c) ASSERT_NEAR(ss[c], ds[c], 1e-6 * (1 + std::abs(ds[c])));
    ASSERT_TRUE(std::isfinite(ss[index_of(sparse_model.predict(x))]));
  }
}

TEST(GaussianNb, JsonRoundTrip) {
  std::vector<std::vector<double>> rows{{0, 1}, {1, 0}, {5, 5}, {6, 4}};
  std::vector<Priority> labels{Priority::P1, Priority::P1, Priority::P5, Priority::P5};
  auto m = GaussianNb::train(rows, labels);
  auto back = GaussianNb::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.scores(std::vector<double>{2, 2}), m.scores(std::vector<double>{2, 2}));
}

TEST(GaussianNb, EmptyInput) {
  EXPECT_THROW(GaussianNb::train(std::vector<std::vector<double>>{}, std::vector<Priority>{}), Error);
}

TEST(Router, SparseTopicRoutesToFallback) {
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 30; ++i) ex.push_back(example(i, 0, cv({{0, 1}}), Priority::P1));
  for (int i = 30; i < 60; ++i) ex.push_back(example(i, 1, cv({{1, 1}}), Priority::P2));
  RouterOptions o;
  o.num_topics = 3;
  o.vocab_size = 2;
  auto r = TopicRoutedClassifier::train(ex, o);
  EXPECT_FALSE(r.uses_fallback(0));
  EXPECT_FALSE(r.uses_fallback(1));
  EXPECT_TRUE(r.uses_fallback(2));
  auto p = r.predict(7, 2, cv({{1, 2}}));
  EXPECT_TRUE(p.used_fallback);
  EXPECT_EQ(p.topic, 2u);
  EXPECT_EQ(p.priority, Priority::P2);
  EXPECT_THROW(r.predict(7, 3, CountVector{}), Error);
}

TEST(Router, NoFallbackWhenAllPopulated) {
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 9; ++i) ex.push_back(example(i, i % 3, cv({{0, 1}}), Priority::P3));
  RouterOptions o;
  o.num_topics = 3;
  o.vocab_size = 1;
  o.min_topic_size = 1;
  auto r = TopicRoutedClassifier::train(ex, o);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_FALSE(r.uses_fallback(t));
    EXPECT_FALSE(r.predict(1, t, CountVector{}).used_fallback);
  }
}

TEST(Router, EmptyTrainingSetIsAnError) {
  RouterOptions o;
  o.vocab_size = 1;
  EXPECT_THROW(TopicRoutedClassifier::train(std::vector<TrainingExample>{}, o), Error);
}

TEST(Router, PerTopicBeatsPooledWhenCuesFlipByTopic) {
  // Word 0 means P1 in topic 0 and P2 in topic 1; word 1 the reverse.
  std::mt19937_64 rng(8);
  auto make = [&](std::size_t n, std::int64_t base) {
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t topic = rng() % 2;
      const std::uint32_t cue = static_cast<std::uint32_t>(rng() % 2);
      const Priority label = (cue == topic) ? Priority::P1 : Priority::P2;
      CountVector f = random_vector(rng, 10, 3);
      for (auto& t : f.terms) t.index += 2;
      f.terms.insert(f.terms.begin(), TermCount{cue, 3});
      f.total += 3;
      out.push_back(example(base + static_cast<std::int64_t>(i), topic, f, label));
    }
    return out;
  };
  auto train = make(400, 0);
  auto test = make(200, 1000);
  RouterOptions routed;
  routed.num_topics = 2;
  routed.vocab_size = 12;
  RouterOptions pooled = routed;
  pooled.min_topic_size = 1000000;

  auto macro_f1 = [&](const TopicRoutedClassifier& r) {
    std::vector<Priority> gold, pred;
    for (const auto& e : test) {
      gold.push_back(e.label);
      pred.push_back(r.predict(e.bug_id, e.topic, e.features).priority);
    }
    return macro_metrics(confusion(gold, pred)).f1;
  };
  const double r = macro_f1(TopicRoutedClassifier::train(train, routed));
  const double p = macro_f1(TopicRoutedClassifier::train(train, pooled));
  EXPECT_GT(r, p + 0.1) << "routed " << r << " pooled " << p;
}

TEST(Router, JsonRoundTrip) {
  for (auto kind : {ClassifierKind::MultinomialNb, ClassifierKind::GaussianNb}) {
    std::vector<TrainingExample> ex;
    std::mt19937_64 rng(9);
    for (int i = 0; i < 80; ++i) ex.push_back(example(i, i % 3 == 2 ? 2 : i % 2, random_vector(rng, 15, 6), priority_from_index(rng() % 5)));
    RouterOptions o;
    o.kind = kind;
    o.num_topics = 4;
    o.vocab_size = 15;
    auto r = TopicRoutedClassifier::train(ex, o);
    auto back = TopicRoutedClassifier::from_json(nlohmann::json::parse(r.to_json().dump()));
    EXPECT_EQ(back.kind(), kind);
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(back.uses_fallback(t), r.uses_fallback(t));
      auto x = random_vector(rng, 15, 6);
      EXPECT_EQ(back.predict(1, t, x), r.predict(1, t, x));
    }
  }
}

TEST(Router, ExternalKindDelegatesPerTopic) {
  fixtures::MockWorker worker;
  bridge::WorkerClient client(std::make_unique<bridge::InProcessChannel>(worker), {});
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 30; ++i) ex.push_back(example(i, 0, CountVector{}, Priority::P1));
  for (int i = 30; i < 40; ++i) ex.push_back(example(i, 1, CountVector{}, Priority::P5));
  RouterOptions o;
  o.kind = ClassifierKind::External;
  o.num_topics = 2;
  o.vocab_size = 1;
  auto r = TopicRoutedClassifier::train(ex, o, &client);
  EXPECT_TRUE(worker.is_trained(0));
  EXPECT_FALSE(worker.is_trained(1));
  EXPECT_TRUE(worker.is_trained(kFallbackTopicId));
  std::vector<RoutedQuery> q{{100, 0, {}, "a"}, {101, 1, {}, "b"}, {102, 0, {}, "c"}};
  auto preds = r.predict_batch(q, &client);
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].bug_id, 100);
  EXPECT_EQ(preds[0].priority, Priority::P1);
  EXPECT_FALSE(preds[0].used_fallback);
  EXPECT_EQ(preds[1].bug_id, 101);
  EXPECT_TRUE(preds[1].used_fallback);
  EXPECT_EQ(preds[1].priority, Priority::P1);  // pooled majority
  EXPECT_EQ(preds[2].bug_id, 102);
  EXPECT_THROW(r.predict(1, 0, CountVector{}), Error);
  EXPECT_THROW(r.predict_batch(q, nullptr), Error);
}

TEST(Router, FailedRemoteTopicFallsBack) {
  fixtures::MockWorkerOptions opts;
  opts.fail_train_topics = {0};
  fixtures::MockWorker worker(opts);
  bridge::WorkerClient client(std::make_unique<bridge::InProcessChannel>(worker), {});
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 30; ++i) ex.push_back(example(i, 0, CountVector{}, Priority::P4));
  RouterOptions o;
  o.kind = ClassifierKind::External;
  o.num_topics = 1;
  o.vocab_size = 1;
  auto r = TopicRoutedClassifier::train(ex, o, &client);
  EXPECT_TRUE(r.uses_fallback(0));
}
