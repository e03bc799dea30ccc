#include <gtest/gtest.h>

#include <numeric>

#include "rapi/classify.hpp"
#include "support.hpp"

using namespace rapi;

namespace {

EmbeddingTable table_from(const Matrix& rows) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(rows.rows()));
  std::iota(ids.begin(), ids.end(), 0);
  return EmbeddingTable(ids, rows);
}

// Two Gaussian blobs in `dim` dimensions.
void blobs(std::size_t n, Eigen::Index dim, std::mt19937_64& rng, Matrix& x, std::vector<int>& y) {
  x = test::random_matrix(static_cast<Eigen::Index>(n), dim, rng);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    x(static_cast<Eigen::Index>(i), 0) += y[i] ? 2.5 : -2.5;
  }
}

// Planted lists: users of class c mostly see items whose first coordinate has sign c.
struct ListProblem {
  EmbeddingTable table;
  RecListSet lists;
  std::vector<UserIndex> users;
  std::vector<int> labels;
};

ListProblem list_problem(std::size_t n_users, std::size_t k, std::mt19937_64& rng) {
  ListProblem p;
  const int n_items = 40;
  Matrix e = test::random_matrix(n_items, 6, rng, 0.5);
  for (int i = 0; i < n_items; ++i) e(i, 0) += i < n_items / 2 ? -1.0 : 1.0;
  p.table = table_from(e);
  p.lists.k = k;
  for (std::size_t u = 0; u < n_users; ++u) {
    const int label = static_cast<int>(u % 2);
    std::vector<ItemIndex> pool(n_items);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::stable_partition(pool.begin(), pool.end(), [&](ItemIndex i) {
      return (i >= n_items / 2) == (label == 1) || rng() % 5 == 0;
    });
    pool.resize(k);
    p.lists.lists[static_cast<UserIndex>(u)] = pool;
    p.users.push_back(static_cast<UserIndex>(u));
    p.labels.push_back(label);
  }
  return p;
}

}  // namespace

TEST(Features, MultiHotAndStacking) {
  std::vector<ItemIndex> list = {2, 0};
  FeatureVector f = featurize_scenario1(list, 4);
  EXPECT_EQ(f.values, (Vector(4) << 1, 0, 1, 0).finished());
  std::vector<ItemIndex> bad = {4};
  EXPECT_THROW(featurize_scenario1(bad, 4), Error);
  FeatureVector g{FeatureVector::Schema::Embedding, Vector::Zero(4)};
  EXPECT_THROW(stack_features({f, g}), Error);
  EXPECT_EQ(stack_features({f, f}).rows(), 2);
}

TEST(Weights, FixedModes) {
  EXPECT_EQ(fixed_weights(AggregationMode::Sum, 4), Vector::Constant(4, 0.25));
  Vector s = fixed_weights(AggregationMode::Static, 3);
  EXPECT_DOUBLE_EQ(s[0], 3.0 / 9.0);
  EXPECT_DOUBLE_EQ(s[2], 1.0 / 9.0);
  EXPECT_THROW(fixed_weights(AggregationMode::Sum, 0), Error);
}

TEST(Weights, SoftmaxSumsToOneOnFuzzedInputs) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 60);
    const double scale = trial % 10 == 0 ? 300.0 : 1.0;  // large logits stress stability
    Matrix e = test::random_matrix(k, 8, rng, scale);
    Vector w_a = test::random_matrix(8, 1, rng);
    Vector w = softmax_weights(e, w_a, 0.3);
    EXPECT_NEAR(w.sum(), 1.0, 1e-6);
    EXPECT_TRUE(w.allFinite());
    EXPECT_GE(w.minCoeff(), 0.0);
  }
  Matrix e = test::random_matrix(5, 3, rng);
  EXPECT_LT((softmax_weights(e, Vector::Zero(3), 0.0) - Vector::Constant(5, 0.2)).norm(), 1e-15);
}

TEST(Aggregate, WeightedSumOfListRows) {
  Matrix e(3, 2);
  e << 1, 0, 0, 2, 4, 4;
  EmbeddingTable t = table_from(e);
  std::vector<ItemIndex> list = {0, 1};
  Vector sum = aggregate(list, t, AggregationMode::Sum);
  EXPECT_DOUBLE_EQ(sum[0], 0.5);
  EXPECT_DOUBLE_EQ(sum[1], 1.0);
  Vector st = aggregate(list, t, AggregationMode::Static);
  EXPECT_DOUBLE_EQ(st[0], 0.5);   // weight 2/4 on item 0
  EXPECT_DOUBLE_EQ(st[1], 0.5);   // weight 1/4 on item 1
  std::vector<ItemIndex> missing = {7};
  EXPECT_THROW(aggregate(missing, t, AggregationMode::Sum), Error);
  EXPECT_THROW(aggregate({}, t, AggregationMode::Sum), Error);
}

TEST(CrossEntropy, ValueAndGradient) {
  Matrix p(2, 2);
  p << 0.25, 0.75, 0.5, 0.5;
  std::vector<int> y = {1, 0};
  Matrix d;
  EXPECT_NEAR(cross_entropy(p, y, &d), -(std::log(0.75) + std::log(0.5)) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(d(0, 1), -0.125);
  EXPECT_DOUBLE_EQ(d(1, 0), -0.25);
}

TEST(DecisionTree, SingleInformativeFeatureGivesDepthOne) {
  Matrix x(6, 2);
  x << 0, 5, 1, 3, 2, 5, 10, 4, 11, 3, 12, 4;
  std::vector<int> y = {0, 0, 0, 1, 1, 1};
  DecisionTree tree(x, y, 2, 10, 2);
  EXPECT_EQ(tree.depth(), 1);
  EXPECT_EQ(tree.node_count(), 3u);
  EXPECT_EQ(tree.predict(x), y);
  std::vector<int> one = {0, 0, 0, 0, 0, 0};
  EXPECT_THROW(DecisionTree(x, one, 2, 10, 2), Error);
}

TEST(DecisionTree, DepthLimitAndXor) {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  std::vector<int> y = {0, 1, 1, 0};
  EXPECT_EQ(DecisionTree(x, y, 2, 0, 2).depth(), 0);
  DecisionTree full(x, y, 2, 5, 2);
  EXPECT_EQ(full.predict(x), y);
}

TEST(Knn, MatchesBruteForceOracle) {
  std::mt19937_64 rng(12);
  Matrix x;
  std::vector<int> y;
  blobs(120, 5, rng, x, y);
  for (auto& v : y) v = static_cast<int>(rng() % 3);
  KnnClassifier knn(x, y, 3, 7);
  for (int q = 0; q < 50; ++q) {
    Vector query = test::random_matrix(5, 1, rng, 2.0);
    if (q % 10 == 0) query = x.row(q).transpose();  // exact duplicates of training rows
    std::vector<std::size_t> expected_nb;
    const int expected = test::brute_force_knn(x, y, 3, 7, query, &expected_nb);
    auto got = knn_predict(knn, query);
    EXPECT_EQ(got.label, expected);
    EXPECT_EQ(got.neighbors, expected_nb);
    EXPECT_EQ(knn.predict(query.transpose())[0], expected);
  }
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (Activation act : {Activation::ReLU, Activation::Tanh}) {
    int checked = 0;
    for (int point = 0; checked < 20 && point < 200; ++point) {
      Mlp net(4, {6, 5}, 3, act, 1000 + point);
      Matrix x = test::random_matrix(5, 4, rng);
      std::vector<int> y = {0, 1, 2, 1, 0};
      Mlp::Cache cache;
      Matrix p = net.probabilities(x, &cache);
      if (net.min_abs_preactivation(cache) < 1e-3) continue;
      Matrix d;
      cross_entropy(p, y, &d);
      std::vector<Matrix> grads;
      Matrix dx = net.backward(cache, d, grads);
      std::vector<Matrix*> params;
      for (auto& g : net.parameters()) params.push_back(&g.value);
      params.push_back(&x);
      grads.push_back(dx);
      const double err = test::gradient_relative_error(params, grads, [&] { return cross_entropy(net.probabilities(x), y); });
      EXPECT_LT(err, 1e-4);
      ++checked;
    }
    EXPECT_EQ(checked, 20);
  }
}

TEST(Mlp, LearnsSeparableBlobs) {
  std::mt19937_64 rng(6);
  Matrix x;
  std::vector<int> y;
  blobs(300, 4, rng, x, y);
  ClassifierConfig cfg;
  cfg.mlp.hidden = {16};
  cfg.mlp.max_epochs = 50;
  cfg.mlp.optimizer = OptimizerKind::Adam;
  cfg.mlp.learning_rate = 0.01;
  FitLog log;
  auto model = train_classifier(x, y, 2, ClassifierKind::MLP, cfg, &log);
  auto pred = model->predict(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  EXPECT_GT(static_cast<double>(correct) / y.size(), 0.95);
  EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
  EXPECT_THROW(train_classifier(x, std::vector<int>(300, 0), 2, ClassifierKind::MLP, cfg), Error);
  EXPECT_THROW(parse_classifier_kind("svm"), Error);
}

TEST(Adaptive, CompositeGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int point = 0; checked < 20 && point < 200; ++point) {
    Mlp head(4, {5}, 3, Activation::ReLU, 500 + point);
    AdaptiveClassifier model(AggregationMode::Dynamic, 4, head);
    model.w_a() = test::random_matrix(4, 1, rng);
    model.b_a() = 0.2;
    std::vector<Matrix> lists;
    for (int u = 0; u < 6; ++u) lists.push_back(test::random_matrix(3 + u % 3, 4, rng));
    std::vector<int> y = {0, 1, 2, 0, 1, 2};
    std::vector<Matrix> grads;
    double margin = 0.0;
    model.loss(lists, y, &grads, &margin);
    if (margin < 1e-3) continue;
    Matrix w = model.w_a().transpose();
    Matrix b = Matrix::Constant(1, 1, model.b_a());
    std::vector<Matrix*> params;
    for (auto& g : model.head().parameters()) params.push_back(&g.value);
    params.push_back(&w);
    params.push_back(&b);
    const double err = test::gradient_relative_error(params, grads, [&] {
      model.w_a() = w.transpose();
      model.b_a() = b(0, 0);
      return model.loss(lists, y, nullptr);
    });
    EXPECT_LT(err, 1e-4) << "point " << point;
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Adaptive, FrozenDynamicReproducesSumMlpBitForBit) {
  std::mt19937_64 rng(40);
  ListProblem p = list_problem(120, 8, rng);
  MlpConfig head;
  head.hidden = {12};
  head.max_epochs = 30;
  head.seed = 77;

  AdaptiveConfig frozen;
  frozen.mode = AggregationMode::Dynamic;
  frozen.freeze_weights = true;
  frozen.head = head;
  AdaptiveClassifier a = train_adaptive(p.lists, p.users, p.table, p.labels, 2, frozen);

  AdaptiveConfig sum = frozen;
  sum.mode = AggregationMode::Sum;
  sum.freeze_weights = false;
  AdaptiveClassifier s = train_adaptive(p.lists, p.users, p.table, p.labels, 2, sum);

  std::vector<FeatureVector> feats;
  for (UserIndex u : p.users) {
    feats.push_back({FeatureVector::Schema::Embedding, aggregate(p.lists.at(u), p.table, AggregationMode::Sum)});
  }
  ClassifierConfig ccfg;
  ccfg.mlp = head;
  auto mlp = train_classifier(stack_features(feats), p.labels, 2, ClassifierKind::MLP, ccfg);

  std::vector<Matrix> embedded;
  for (UserIndex u : p.users) embedded.push_back(gather_rows(p.table, p.lists.at(u)));
  const Matrix pa = a.predict_proba(embedded);
  const Matrix ps = s.predict_proba(embedded);
  const Matrix pm = mlp->predict_proba(stack_features(feats));
  EXPECT_TRUE((pa.array() == pm.array()).all());
  EXPECT_TRUE((ps.array() == pm.array()).all());
  EXPECT_EQ(a.w_a(), Vector::Zero(6));
}

TEST(Adaptive, LearnsPlantedListsAndMovesWeights) {
  std::mt19937_64 rng(41);
  ListProblem p = list_problem(200, 10, rng);
  AdaptiveConfig cfg;
  cfg.head.hidden = {12};
  cfg.head.optimizer = OptimizerKind::Adam;
  cfg.head.learning_rate = 0.01;
  cfg.head.max_epochs = 60;
  AdaptiveClassifier m = train_adaptive(p.lists, p.users, p.table, p.labels, 2, cfg);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.users.size(); ++i) {
    auto pred = predict_attribute(m, p.lists.at(p.users[i]), p.table);
    EXPECT_NEAR(pred.probabilities.sum(), 1.0, 1e-12);
    correct += pred.label == p.labels[i];
  }
  EXPECT_GT(static_cast<double>(correct) / p.users.size(), 0.9);
  EXPECT_GT(m.w_a().norm(), 0.0);
}
