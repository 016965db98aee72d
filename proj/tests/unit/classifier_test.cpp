#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "forumstrat/classifier.hpp"
#include "forumstrat/synth.hpp"

using namespace forumstrat;

namespace {

/// Two classes with disjoint token sets.
std::vector<Document> separable_docs() {
  const std::vector<std::string> a{"alpha", "bravo", "charlie", "delta", "echo"};
  const std::vector<std::string> b{"kilo", "lima", "mike", "oscar", "papa"};
  std::vector<Document> out;
  for (int i = 0; i < 20; ++i) {
    std::string ta = a[i % 5] + " " + a[(i + 1) % 5] + " " + a[(i + 3) % 5];
    std::string tb = b[i % 5] + " " + b[(i + 2) % 5] + " " + b[(i + 4) % 5];
    out.push_back({"a" + std::to_string(i), ta, 0});
    out.push_back({"b" + std::to_string(i), tb, 1});
  }
  return out;
}

FeatureMatrix random_matrix(std::size_t n, std::uint32_t dim, int classes, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureMatrix m;
  m.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    SparseRow r;
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (g() % 3 == 0) {
        r.index.push_back(j);
        r.value.push_back(u(g));
      }
    }
    m.rows.push_back(std::move(r));
    m.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  }
  return m;
}

/// Synthetic labeled documents for holdout tests.
std::vector<Document> synth_docs(std::uint64_t seed, std::uint32_t members) {
  SynthConfig c;
  c.n_members = members;
  c.n_threads = 150;
  c.max_posts_per_member = 60;
  c.seed = seed;
  c.signal_fraction = 0.4;
  auto corpus = generate(c);
  std::map<std::string, int> cls;
  for (std::size_t i = 0; i < corpus.classes.size(); ++i) cls[corpus.classes[i]] = static_cast<int>(i);
  std::vector<Document> out;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    out.push_back({r.post_id, r.content + " " + r.thread_title + " " + r.board, cls.at(corpus.truth[i].second)});
  }
  return out;
}

}  // namespace

TEST(Train, SeparableToySetIsLearnedExactly) {
  auto [space, m] = fit_transform(separable_docs());
  auto model = train(m);
  auto p = predict(model, m);
  EXPECT_EQ(p.labels, m.labels);
}

TEST(Train, LogisticAlsoSeparates) {
  auto [space, m] = fit_transform(separable_docs());
  TrainConfig c;
  c.loss = Loss::Logistic;
  EXPECT_EQ(predict(train(m, c), m).labels, m.labels);
}

TEST(Train, SameSeedSameWeights) {
  auto m = random_matrix(200, 30, 3, 1);
  TrainConfig c;
  c.seed = 9;
  auto a = train(m, c);
  auto b = train(m, c);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  c.seed = 10;
  EXPECT_NE(train(m, c).weights, a.weights);
}

TEST(Train, SingleClassIsAnError) {
  auto m = random_matrix(20, 5, 1, 2);
  EXPECT_THROW(train(m), ValidationError);
}

TEST(Train, MissingRequestedClassIsAnError) {
  auto m = random_matrix(20, 5, 2, 2);
  const std::vector<int> classes{0, 1, 2};
  EXPECT_THROW(train(m, {}, classes), ValidationError);
}

TEST(Gradient, LogisticMatchesCentralDifferences) {
  auto m = random_matrix(60, 25, 2, 3);
  std::vector<double> y;
  for (int l : m.labels) y.push_back(l == 0 ? 1.0 : -1.0);
  std::mt19937_64 g(4);
  std::normal_distribution<double> nd(0.0, 0.5);
  std::vector<double> w(m.dim);
  for (auto& v : w) v = nd(g);
  const double b = 0.3, lambda = 1e-2, h = 1e-6;
  auto [gw, gb] = binary_gradient(m, y, w, b, lambda, Loss::Logistic);
  for (int trial = 0; trial < 10; ++trial) {
    const auto j = static_cast<std::size_t>(g() % m.dim);
    auto wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (binary_objective(m, y, wp, b, lambda, Loss::Logistic) -
                       binary_objective(m, y, wm, b, lambda, Loss::Logistic)) /
                      (2 * h);
    EXPECT_LT(std::abs(gw[j] - fd), 1e-5 * std::max(1.0, std::abs(fd))) << j;
  }
  const double fdb = (binary_objective(m, y, w, b + h, lambda, Loss::Logistic) -
                      binary_objective(m, y, w, b - h, lambda, Loss::Logistic)) /
                     (2 * h);
  EXPECT_LT(std::abs(gb - fdb), 1e-5 * std::max(1.0, std::abs(fdb)));
}

TEST(Train, SgdDecreasesTheObjective) {
  auto m = random_matrix(300, 20, 2, 5);
  std::vector<double> y;
  for (int l : m.labels) y.push_back(l == 0 ? 1.0 : -1.0);
  TrainConfig c;
  c.loss = Loss::Logistic;
  c.lambda = 1e-3;
  const std::vector<double> zero(m.dim, 0.0);
  auto [w, b] = train_binary(m, y, c, 1);
  EXPECT_LT(binary_objective(m, y, w, b, c.lambda, c.loss), binary_objective(m, y, zero, 0.0, c.lambda, c.loss));
}

TEST(Predict, ZeroVectorPicksLargestBias) {
  LinearModel model;
  model.classes = {0, 1, 2};
  model.dim = 3;
  model.weights.assign(3, std::vector<double>(3, 1.0));
  model.bias = {0.1, 0.7, -0.2};
  FeatureMatrix m;
  m.dim = 3;
  m.rows.push_back({});
  EXPECT_EQ(predict(model, m).labels, std::vector<int>{1});
}

TEST(Predict, TieGoesToLowestIndex) {
  LinearModel model;
  model.classes = {4, 2};
  model.dim = 1;
  model.weights = {{0.0}, {0.0}};
  model.bias = {0.5, 0.5};
  FeatureMatrix m;
  m.dim = 1;
  m.rows.push_back({});
  EXPECT_EQ(predict(model, m).labels, std::vector<int>{4});
}

TEST(Predict, DimensionMismatchIsAnError) {
  auto [space, m] = fit_transform(separable_docs());
  auto model = train(m);
  m.dim += 1;
  EXPECT_THROW(predict(model, m), ValidationError);
}

TEST(Predict, ZeroColumnPaddingLeavesScoresUnchanged) {
  auto m = random_matrix(100, 10, 3, 6);
  auto model = train(m);
  auto padded = m;
  padded.dim += 7;
  auto model_p = train(padded);
  auto a = predict(model, m);
  auto b = predict(model_p, padded);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    for (std::size_t k = 0; k < a.scores[i].size(); ++k) EXPECT_NEAR(a.scores[i][k], b.scores[i][k], 1e-12);
  }
}

TEST(Predict, RescaledFeaturesWithScaledRateKeepArgmax) {
  auto [space, m] = fit_transform(separable_docs());
  auto scaled = m;
  for (auto& r : scaled.rows) {
    for (auto& v : r.value) v *= 3.0;
  }
  TrainConfig c;
  auto base = predict(train(m, c), m).labels;
  c.learning_rate /= 9.0;
  EXPECT_EQ(predict(train(scaled, c), scaled).labels, base);
}

TEST(ModelFile, RoundTripIsBitExact) {
  auto m = random_matrix(120, 15, 3, 7);
  auto model = train(m);
  model.vocabulary_hash = 0x0123456789abcdefULL;
  std::stringstream ss;
  save_model(ss, model);
  auto back = load_model(ss);
  EXPECT_EQ(back.classes, model.classes);
  EXPECT_EQ(back.weights, model.weights);
  EXPECT_EQ(back.bias, model.bias);
  EXPECT_EQ(back.vocabulary_hash, model.vocabulary_hash);
  EXPECT_EQ(to_json(back.config), to_json(model.config));
  std::stringstream again;
  save_model(again, back);
  std::stringstream first;
  save_model(first, model);
  EXPECT_EQ(again.str(), first.str());
}

TEST(ModelFile, TruncatedFileIsAnError) {
  auto model = train(random_matrix(50, 8, 2, 8));
  std::stringstream ss;
  save_model(ss, model);
  auto s = ss.str();
  std::stringstream cut(s.substr(0, s.size() - 5));
  EXPECT_THROW(load_model(cut), DataError);
}

TEST(Interface, LinearClassifierFitsThroughTheBase) {
  auto [space, m] = fit_transform(separable_docs());
  std::unique_ptr<TextClassifier> clf = std::make_unique<LinearClassifier>();
  const std::vector<int> classes{0, 1};
  clf->fit(m, classes);
  EXPECT_EQ(clf->predict(m).labels, m.labels);
}

TEST(Split, EightyTwentyPerStratum) {
  std::vector<int> strata;
  for (int i = 0; i < 100; ++i) strata.push_back(i < 60 ? 0 : (i < 90 ? 1 : 2));
  auto [train_idx, test_idx] = stratified_split(strata, 0.8, 7);
  EXPECT_EQ(train_idx.size() + test_idx.size(), 100u);
  std::map<int, int> tr;
  for (auto i : train_idx) ++tr[strata[i]];
  EXPECT_EQ(tr[0], 48);
  EXPECT_EQ(tr[1], 24);
  EXPECT_EQ(tr[2], 8);
  std::set<std::size_t> all(train_idx.begin(), train_idx.end());
  all.insert(test_idx.begin(), test_idx.end());
  EXPECT_EQ(all.size(), 100u);
}

TEST(Split, TinyStratumIsNamed) {
  std::vector<int> strata{0, 0, 0, 5};
  try {
    stratified_split(strata, 0.8, 1);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("stratum 5"), std::string::npos);
  }
  EXPECT_THROW(stratified_split(strata, 1.0, 1), ValidationError);
}

TEST(Holdout, ThirtySeedsCoverEveryClassInEveryTrainFold) {
  const auto docs = synth_docs(3, 400);
  const auto strata = class_strata(docs);
  std::vector<int> classes{0, 1, 2, 3, 4, 5, 6};
  HoldoutConfig cfg;
  for (std::uint64_t s = 1; s <= 30; ++s) cfg.seeds.push_back(s);
  cfg.train.epochs = 5;
  auto runs = repeated_holdout(docs, classes, strata, cfg);
  ASSERT_EQ(runs.size(), 30u);
  for (const auto& run : runs) {
    // Oracle: look at the fold directly.
    std::set<int> seen;
    for (auto i : run.train_idx) seen.insert(*docs[i].label);
    EXPECT_EQ(seen.size(), classes.size()) << run.seed;
    EXPECT_TRUE(run.missing_train_classes.empty());
    EXPECT_EQ(run.train_idx.size() + run.test_idx.size(), docs.size());
  }
  auto summary = aggregate(runs);
  EXPECT_GT(summary.gmean_precision, 0.0);
  EXPECT_GT(summary.gmean_recall, 0.0);
}

TEST(Holdout, VocabularyComesFromTrainFoldOnly) {
  const auto docs = synth_docs(4, 250);
  const auto strata = class_strata(docs);
  std::vector<int> classes{0, 1, 2, 3, 4, 5, 6};
  HoldoutConfig cfg;
  cfg.seeds = {1, 2, 3};
  cfg.train.epochs = 3;
  const StopWords stop;
  const auto tokens = preprocess_all(docs, stop);
  for (const auto& run : repeated_holdout(docs, classes, strata, cfg)) {
    std::set<std::string> prov(run.space.provenance().begin(), run.space.provenance().end());
    std::set<std::string> train_ids;
    for (auto i : run.train_idx) train_ids.insert(docs[i].post_id);
    EXPECT_EQ(prov, train_ids);
    std::map<std::string, int> df;
    for (auto i : run.train_idx) {
      for (const auto& t : std::set<std::string>(tokens[i].begin(), tokens[i].end())) ++df[t];
    }
    for (const auto& t : run.space.terms()) EXPECT_GE(df[t], 2) << t;
  }
}

TEST(Aggregate, GeometricMeanOverRunsThenClasses) {
  std::vector<HoldoutRun> runs(2);
  runs[0].report.classes = runs[1].report.classes = {0, 1};
  runs[0].report.per_class[0] = {0.5, 0.8, 10, 10, 5};
  runs[0].report.per_class[1] = {0.9, 0.4, 10, 10, 5};
  runs[1].report.per_class[0] = {0.2, 0.2, 10, 10, 5};
  runs[1].report.per_class[1] = {0.4, 0.9, 10, 10, 5};
  auto s = aggregate(runs);
  // class 0 precision sqrt(0.5 * 0.2) = 0.31623, class 1 sqrt(0.9 * 0.4) = 0.6
  EXPECT_NEAR(s.per_class.at(0).first, std::sqrt(0.1), 1e-12);
  EXPECT_NEAR(s.per_class.at(1).first, 0.6, 1e-12);
  EXPECT_NEAR(s.gmean_precision, std::sqrt(std::sqrt(0.1) * 0.6), 1e-12);
  EXPECT_NEAR(s.gmean_recall, std::sqrt(0.4 * 0.6), 1e-12);
}

TEST(Loss, ParseAndConfigRoundTrip) {
  EXPECT_EQ(parse_loss("hinge"), Loss::Hinge);
  EXPECT_EQ(parse_loss("logistic"), Loss::Logistic);
  EXPECT_THROW(parse_loss("huber"), ValidationError);
  TrainConfig c{Loss::Logistic, 0.01, 7, 0.5, 42};
  auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}
