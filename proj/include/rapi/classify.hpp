#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rapi/common.hpp"
#include "rapi/embedding.hpp"
#include "rapi/optim.hpp"
#include "rapi/surrogate.hpp"

namespace rapi {

// ---------------------------------------------------------------------------
// Features

struct FeatureVector {
  enum class Schema { MultiHot, Embedding };
  Schema schema = Schema::Embedding;
  Vector values;
};

// Indicator vector over n items with a one at each listed item.
FeatureVector featurize_scenario1(std::span<const ItemIndex> list, std::size_t num_items);

// Row r = features[r].values; all rows must share schema and length.
Matrix stack_features(const std::vector<FeatureVector>& features);

// ---------------------------------------------------------------------------
// List aggregation

enum class AggregationMode { Sum, Static, Dynamic };

std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation(const std::string& name);

// Softmax over list positions of w_a . e_j + b_a, one row of `list_embeddings` per item.
template <typename Derived, typename DerivedW>
Vector softmax_weights(const Eigen::MatrixBase<Derived>& list_embeddings,
                       const Eigen::MatrixBase<DerivedW>& w_a, double b_a) {
  Vector logits = list_embeddings * w_a.derived().reshaped();
  logits.array() += b_a;
  const double peak = logits.maxCoeff();
  Vector w = (logits.array() - peak).exp().matrix();
  return w / w.sum();
}

// Position weights for a list of length k under the fixed modes: 1/k for Sum,
// (k - j + 1) / k^2 for Static (j is 1-based).
Vector fixed_weights(AggregationMode mode, Eigen::Index k);

// Rows of `table` for the list items, in list order.
Matrix gather_rows(const EmbeddingTable& table, std::span<const ItemIndex> list);

Vector compute_weights(std::span<const ItemIndex> list, const EmbeddingTable& table,
                       const Vector& w_a, double b_a);

// User vector: the weighted sum of list-item embeddings. Dynamic uses
// compute_weights with (w_a, b_a); Sum and Static ignore them.
Vector aggregate(std::span<const ItemIndex> list, const EmbeddingTable& table,
                 AggregationMode mode, const Vector& w_a = {}, double b_a = 0.0);

// ---------------------------------------------------------------------------
// Softmax MLP

enum class Activation { ReLU, Tanh };

struct MlpConfig {
  std::vector<int> hidden = {256};
  Activation activation = Activation::ReLU;
  double learning_rate = 0.05;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 20;                  // epochs without validation improvement
  double validation_fraction = 0.1;   // of the training rows, for early stopping
  OptimizerKind optimizer = OptimizerKind::SGD;
  std::uint64_t seed = 0;
};

// Fully connected network with a softmax output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(Eigen::Index input_dim, const std::vector<int>& hidden, int num_classes,
      Activation activation, std::uint64_t seed);

  struct Cache {
    std::vector<Matrix> inputs;   // input of each layer
    std::vector<Matrix> preact;   // pre-activation of each hidden layer
    Matrix probabilities;
  };

  Matrix logits(const Matrix& x, Cache* cache = nullptr) const;
  Matrix probabilities(const Matrix& x, Cache* cache = nullptr) const;

  // Gradients for d(loss)/d(logits) = `d_logits`; returns d(loss)/d(x).
  Matrix backward(const Cache& cache, const Matrix& d_logits, std::vector<Matrix>& grads) const;

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().value.rows(); }
  int num_classes() const { return static_cast<int>(layers_.back().value.cols()); }
  Activation activation() const { return activation_; }
  double min_abs_preactivation(const Cache& cache) const;

  // Alternating weight (in x out) and bias (1 x out) groups.
  std::vector<ParamGroup>& parameters() { return layers_; }
  const std::vector<ParamGroup>& parameters() const { return layers_; }

 private:
  Activation activation_ = Activation::ReLU;
  std::vector<ParamGroup> layers_;
};

// Mean cross-entropy of the rows' labels; writes (p - onehot) / n into d_logits.
double cross_entropy(const Matrix& probabilities, std::span<const int> labels,
                     Matrix* d_logits = nullptr);

// ---------------------------------------------------------------------------
// Baseline classifiers

enum class ClassifierKind { DecisionTree, KNN, MLP };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& name);

struct ClassifierConfig {
  int tree_max_depth = 12;
  int tree_min_samples_split = 2;
  int knn_k = 15;
  MlpConfig mlp;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierKind kind() const = 0;
  virtual int num_classes() const = 0;
  // One probability row per input row.
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  // Argmax with ties to the smallest class id.
  virtual std::vector<int> predict(const Matrix& x) const;
};

class DecisionTree final : public Classifier {
 public:
  DecisionTree(const Matrix& x, std::span<const int> labels, int num_classes, int max_depth,
               int min_samples_split);

  ClassifierKind kind() const override { return ClassifierKind::DecisionTree; }
  int num_classes() const override { return num_classes_; }
  Matrix predict_proba(const Matrix& x) const override;

  // Depth of the deepest leaf (a single leaf has depth 0).
  int depth() const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;    // go left when x[feature] <= threshold
    int left = -1, right = -1;
    Vector distribution;
    int depth = 0;
  };
  int build(const Matrix& x, std::span<const int> labels, std::vector<std::size_t>& rows,
            int depth);

  int num_classes_ = 0;
  int max_depth_ = 0;
  int min_samples_split_ = 2;
  std::vector<Node> nodes_;
};

class KnnClassifier final : public Classifier {
 public:
  KnnClassifier(Matrix x, std::vector<int> labels, int num_classes, int k);

  ClassifierKind kind() const override { return ClassifierKind::KNN; }
  int num_classes() const override { return num_classes_; }
  Matrix predict_proba(const Matrix& x) const override;

  struct Prediction {
    int label = 0;
    std::vector<std::size_t> neighbors;  // training rows, nearest first, ties by row
  };
  // Majority vote over the k nearest rows; vote ties go to the smallest class id.
  template <typename Derived>
  Prediction query(const Eigen::MatrixBase<Derived>& row) const;

  int k() const { return k_; }

 private:
  Matrix x_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  int k_ = 1;
};

class MlpClassifier final : public Classifier {
 public:
  explicit MlpClassifier(Mlp net) : net_(std::move(net)) {}

  ClassifierKind kind() const override { return ClassifierKind::MLP; }
  int num_classes() const override { return net_.num_classes(); }
  Matrix predict_proba(const Matrix& x) const override { return net_.probabilities(x); }
  const Mlp& network() const { return net_; }

 private:
  Mlp net_;
};

struct FitLog {
  std::vector<double> epoch_loss;
  std::vector<double> validation_accuracy;
  int best_epoch = 0;
};

std::unique_ptr<Classifier> train_classifier(const Matrix& features, std::span<const int> labels,
                                             int num_classes, ClassifierKind kind,
                                             const ClassifierConfig& cfg, FitLog* log = nullptr);

KnnClassifier::Prediction knn_predict(const KnnClassifier& model, const Vector& feature);

// ---------------------------------------------------------------------------
// Adaptive-weight classifier

struct AdaptiveConfig {
  AggregationMode mode = AggregationMode::Dynamic;
  MlpConfig head;   // hidden defaults to one layer of width 2 * dim when empty
  // Keep w_a = 0 and b_a = 0 fixed, which reduces Dynamic to Sum.
  bool freeze_weights = false;
};

class AdaptiveClassifier {
 public:
  AdaptiveClassifier() = default;
  AdaptiveClassifier(AggregationMode mode, Eigen::Index dim, Mlp head);

  AggregationMode mode() const { return mode_; }
  const Vector& w_a() const { return w_a_; }
  double b_a() const { return b_a_; }
  Vector& w_a() { return w_a_; }
  double& b_a() { return b_a_; }
  const Mlp& head() const { return head_; }
  Mlp& head() { return head_; }

  Vector weights(const Matrix& list_embeddings) const;
  Vector user_vector(const Matrix& list_embeddings) const;

  // Probabilities for each list (rows follow `lists` order).
  Matrix predict_proba(const std::vector<Matrix>& list_embeddings) const;

  // Mean cross-entropy over the lists. When `grads` is given it receives the
  // head gradients followed by d/dw_a (1 x dim) and d/db_a (1 x 1).
  double loss(const std::vector<Matrix>& list_embeddings, std::span<const int> labels,
              std::vector<Matrix>* grads, double* kink_margin = nullptr) const;

 private:
  AggregationMode mode_ = AggregationMode::Dynamic;
  Vector w_a_;
  double b_a_ = 0.0;
  Mlp head_;
};

struct AttributePrediction {
  int label = 0;
  Vector probabilities;
};

// Trains on the given users' lists; embeddings are looked up in `table`.
AdaptiveClassifier train_adaptive(const RecListSet& lists, std::span<const UserIndex> users,
                                  const EmbeddingTable& table, std::span<const int> labels,
                                  int num_classes, const AdaptiveConfig& cfg,
                                  FitLog* log = nullptr);

AttributePrediction predict_attribute(const AdaptiveClassifier& model,
                                      std::span<const ItemIndex> list, const EmbeddingTable& table);

// ---------------------------------------------------------------------------

template <typename Derived>
KnnClassifier::Prediction KnnClassifier::query(const Eigen::MatrixBase<Derived>& row) const {
  const Eigen::Index n = x_.rows();
  Vector dist = (x_.rowwise() - row.derived().reshaped().transpose()).rowwise().squaredNorm();
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(k_, n));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&dist](std::size_t a, std::size_t b) {
                      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                    });
  order.resize(k);
  std::vector<int> votes(static_cast<std::size_t>(num_classes_), 0);
  for (auto r : order) ++votes[labels_[r]];
  Prediction p;
  p.label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  p.neighbors = std::move(order);
  return p;
}

}  // namespace rapi
