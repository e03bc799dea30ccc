#include "rapi/classify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "rapi/random.hpp"

namespace rapi {

FeatureVector featurize_scenario1(std::span<const ItemIndex> list, std::size_t num_items) {
  FeatureVector f;
  f.schema = FeatureVector::Schema::MultiHot;
  f.values = Vector::Zero(static_cast<Eigen::Index>(num_items));
  for (ItemIndex i : list) {
    if (i < 0 || static_cast<std::size_t>(i) >= num_items) {
      throw Error("featurize: item " + std::to_string(i) + " outside [0, " +
                  std::to_string(num_items) + ")");
    }
    f.values[i] = 1.0;
  }
  return f;
}

Matrix stack_features(const std::vector<FeatureVector>& features) {
  if (features.empty()) return Matrix(0, 0);
  const auto dim = features.front().values.size();
  Matrix x(static_cast<Eigen::Index>(features.size()), dim);
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].values.size() != dim || features[r].schema != features.front().schema) {
      throw Error("stack_features: heterogeneous feature schema at row " + std::to_string(r));
    }
    x.row(static_cast<Eigen::Index>(r)) = features[r].values.transpose();
  }
  return x;
}

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::Sum: return "Sum";
    case AggregationMode::Static: return "Static";
    case AggregationMode::Dynamic: return "Dynamic";
  }
  return "?";
}

AggregationMode parse_aggregation(const std::string& name) {
  if (name == "Sum" || name == "sum") return AggregationMode::Sum;
  if (name == "Static" || name == "static") return AggregationMode::Static;
  if (name == "Dynamic" || name == "dynamic") return AggregationMode::Dynamic;
  throw Error("unknown aggregation mode '" + name + "'");
}

Vector fixed_weights(AggregationMode mode, Eigen::Index k) {
  if (k <= 0) throw Error("aggregate: empty list");
  Vector w(k);
  const double kk = static_cast<double>(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    w[j] = mode == AggregationMode::Static ? (kk - static_cast<double>(j)) / (kk * kk) : 1.0 / kk;
  }
  return w;
}

Matrix gather_rows(const EmbeddingTable& table, std::span<const ItemIndex> list) {
  Matrix out(static_cast<Eigen::Index>(list.size()), table.dim());
  for (std::size_t r = 0; r < list.size(); ++r) {
    auto row = table.row_of(list[r]);
    if (!row) throw Error("no embedding for item " + std::to_string(list[r]));
    out.row(static_cast<Eigen::Index>(r)) = table.matrix().row(*row);
  }
  return out;
}

Vector compute_weights(std::span<const ItemIndex> list, const EmbeddingTable& table,
                       const Vector& w_a, double b_a) {
  if (list.empty()) throw Error("compute_weights: empty list");
  if (w_a.size() != table.dim()) throw Error("compute_weights: w_a has the wrong length");
  return softmax_weights(gather_rows(table, list), w_a, b_a);
}

Vector aggregate(std::span<const ItemIndex> list, const EmbeddingTable& table,
                 AggregationMode mode, const Vector& w_a, double b_a) {
  if (list.empty()) throw Error("aggregate: empty list");
  const Matrix rows = gather_rows(table, list);
  const Vector w = mode == AggregationMode::Dynamic
                       ? softmax_weights(rows, w_a.size() ? w_a : Vector::Zero(table.dim()), b_a)
                       : fixed_weights(mode, rows.rows());
  return rows.transpose() * w;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(Eigen::Index input_dim, const std::vector<int>& hidden, int num_classes,
         Activation activation, std::uint64_t seed)
    : activation_(activation) {
  if (input_dim <= 0 || num_classes < 2) throw Error("mlp: need a positive input dim and >= 2 classes");
  Rng rng(seed);
  Eigen::Index in = input_dim;
  std::vector<Eigen::Index> widths(hidden.begin(), hidden.end());
  widths.push_back(num_classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const Eigen::Index out = widths[l];
    if (out <= 0) throw Error("mlp: hidden widths must be positive");
    const bool is_hidden = l + 1 < widths.size();
    const double std = is_hidden && activation == Activation::ReLU
                           ? std::sqrt(2.0 / static_cast<double>(in))
                           : std::sqrt(1.0 / static_cast<double>(in));
    std::normal_distribution<double> dist(0.0, std);
    Matrix w(in, out);
    for (Eigen::Index r = 0; r < in; ++r) {
      for (Eigen::Index c = 0; c < out; ++c) w(r, c) = dist(rng);
    }
    layers_.push_back({"w" + std::to_string(l), std::move(w)});
    layers_.push_back({"b" + std::to_string(l), Matrix::Zero(1, out)});
    in = out;
  }
}

Matrix Mlp::logits(const Matrix& x, Cache* cache) const {
  if (x.cols() != input_dim()) {
    throw Error("mlp: input has " + std::to_string(x.cols()) + " columns, expected " +
                std::to_string(input_dim()));
  }
  const std::size_t n_layers = layers_.size() / 2;
  Matrix h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (cache) cache->inputs.push_back(h);
    Matrix z = h * layers_[2 * l].value;
    z.rowwise() += layers_[2 * l + 1].value.row(0);
    if (l + 1 == n_layers) return z;
    if (cache) cache->preact.push_back(z);
    h = activation_ == Activation::ReLU ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh().matrix());
  }
  return h;
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double peak = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - peak).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

Matrix Mlp::probabilities(const Matrix& x, Cache* cache) const {
  Matrix p = softmax_rows(logits(x, cache));
  if (cache) cache->probabilities = p;
  return p;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& d_logits, std::vector<Matrix>& grads) const {
  const std::size_t n_layers = layers_.size() / 2;
  grads.resize(layers_.size());
  Matrix g = d_logits;
  for (std::size_t l = n_layers; l-- > 0;) {
    grads[2 * l] = cache.inputs[l].transpose() * g;
    grads[2 * l + 1] = g.colwise().sum();
    Matrix g_in = g * layers_[2 * l].value.transpose();
    if (l == 0) return g_in;
    const Matrix& z = cache.preact[l - 1];
    if (activation_ == Activation::ReLU) {
      g = g_in.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    } else {
      g = g_in.cwiseProduct((1.0 - z.array().tanh().square()).matrix());
    }
  }
  return g;
}

double Mlp::min_abs_preactivation(const Cache& cache) const {
  double m = std::numeric_limits<double>::infinity();
  if (activation_ != Activation::ReLU) return m;
  for (const auto& z : cache.preact) {
    if (z.size()) m = std::min(m, z.cwiseAbs().minCoeff());
  }
  return m;
}

double cross_entropy(const Matrix& probabilities, std::span<const int> labels, Matrix* d_logits) {
  const auto n = probabilities.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw Error("cross_entropy: label count mismatch");
  if (n == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    loss -= std::log(std::max(probabilities(r, labels[r]), std::numeric_limits<double>::min()));
  }
  if (d_logits) {
    *d_logits = probabilities;
    for (Eigen::Index r = 0; r < n; ++r) (*d_logits)(r, labels[r]) -= 1.0;
    *d_logits /= static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Shared mini-batch loop for the softmax head. `inputs` produces the head's
// input rows for a set of sample indices; `input_step`, when set, receives the
// gradient w.r.t. those inputs so upstream parameters can be updated.

namespace {

struct HeadLoop {
  std::function<Matrix(std::span<const std::size_t>)> inputs;
  std::function<void(std::span<const std::size_t>, const Matrix&)> input_step;
  std::function<void()> snapshot;
  std::function<void()> restore;
};

void fit_head(Mlp& net, std::span<const int> labels, const MlpConfig& cfg, HeadLoop& loop,
              FitLog* log) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Rng split_rng(splitmix64(cfg.seed ^ 0xa11ce5ULL));
  std::shuffle(rows.begin(), rows.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(n) + 1e-9));
  if (n_val >= n) n_val = 0;
  std::vector<std::size_t> val(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  std::vector<int> val_labels;
  for (auto r : val) val_labels.push_back(labels[r]);

  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  std::vector<Matrix*> targets;
  for (auto& p : net.parameters()) targets.push_back(&p.value);
  std::vector<ParamGroup> best_params = net.parameters();
  double best_acc = -1.0;
  int stale = 0;
  Rng order_rng(splitmix64(cfg.seed ^ 0xba7c4ULL));
  std::vector<Matrix> grads;
  std::vector<int> batch_labels;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), order_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.size(); start += bs) {
      std::span<const std::size_t> batch(train.data() + start, std::min(bs, train.size() - start));
      batch_labels.clear();
      for (auto r : batch) batch_labels.push_back(labels[r]);
      Mlp::Cache cache;
      Matrix x = loop.inputs(batch);
      Matrix p = net.probabilities(x, &cache);
      Matrix d_logits;
      const double loss = cross_entropy(p, batch_labels, &d_logits);
      if (!std::isfinite(loss)) throw Error("classifier training diverged (non-finite loss)");
      Matrix d_x = net.backward(cache, d_logits, grads);
      opt.step(targets, grads);
      if (loop.input_step) loop.input_step(batch, d_x);
      epoch_loss += loss;
      ++batches;
    }
    if (log) log->epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    if (val.empty()) continue;
    Matrix pv = net.probabilities(loop.inputs(val));
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < pv.rows(); ++r) {
      Eigen::Index arg;
      pv.row(r).maxCoeff(&arg);
      if (arg == val_labels[r]) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(val.size());
    if (log) log->validation_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best_params = net.parameters();
      if (loop.snapshot) loop.snapshot();
      if (log) log->best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (!val.empty() && best_acc >= 0.0) {
    net.parameters() = best_params;
    if (loop.restore) loop.restore();
  } else if (log) {
    log->best_epoch = cfg.max_epochs;
  }
}

void check_labels(std::span<const int> labels, int num_classes, std::size_t rows) {
  if (rows == 0 || labels.empty()) throw Error("classifier: empty training set");
  if (labels.size() != rows) throw Error("classifier: feature/label count mismatch");
  std::vector<char> seen(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  int distinct = 0;
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error("classifier: label " + std::to_string(y) + " out of range");
    if (!seen[y]) {
      seen[y] = 1;
      ++distinct;
    }
  }
  if (distinct < 2) throw Error("classifier: training labels contain a single class");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::DecisionTree: return "DT";
    case ClassifierKind::KNN: return "KNN";
    case ClassifierKind::MLP: return "MLP";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "DT" || name == "dt") return ClassifierKind::DecisionTree;
  if (name == "KNN" || name == "knn") return ClassifierKind::KNN;
  if (name == "MLP" || name == "mlp" || name == "DNN" || name == "dnn") return ClassifierKind::MLP;
  throw Error("unknown classifier '" + name + "' (expected DT, KNN or MLP)");
}

std::vector<int> Classifier::predict(const Matrix& x) const {
  Matrix p = predict_proba(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index arg;
    p.row(r).maxCoeff(&arg);
    out[r] = static_cast<int>(arg);
  }
  return out;
}

DecisionTree::DecisionTree(const Matrix& x, std::span<const int> labels, int num_classes,
                           int max_depth, int min_samples_split)
    : num_classes_(num_classes), max_depth_(max_depth), min_samples_split_(min_samples_split) {
  check_labels(labels, num_classes, static_cast<std::size_t>(x.rows()));
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  build(x, labels, rows, 0);
}

namespace {

double gini(const std::vector<double>& counts, double total) {
  if (total <= 0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

}  // namespace

int DecisionTree::build(const Matrix& x, std::span<const int> labels,
                        std::vector<std::size_t>& rows, int depth) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[index].depth = depth;
  std::vector<double> counts(static_cast<std::size_t>(num_classes_), 0.0);
  for (auto r : rows) counts[labels[r]] += 1.0;
  const double total = static_cast<double>(rows.size());
  Vector dist(num_classes_);
  for (int c = 0; c < num_classes_; ++c) dist[c] = counts[c] / total;
  nodes_[index].distribution = dist;

  const double parent = gini(counts, total);
  if (depth >= max_depth_ || static_cast<int>(rows.size()) < min_samples_split_ || parent <= 0.0) {
    return index;
  }

  double best_gain = -std::numeric_limits<double>::infinity();
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::size_t> order = rows;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return x(a, f) != x(b, f) ? x(a, f) < x(b, f) : a < b;
    });
    if (x(order.front(), f) == x(order.back(), f)) continue;
    std::vector<double> left(static_cast<std::size_t>(num_classes_), 0.0);
    std::vector<double> right = counts;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const int y = labels[order[i]];
      left[y] += 1.0;
      right[y] -= 1.0;
      const double a = x(order[i], f), b = x(order[i + 1], f);
      if (a == b) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = total - nl;
      const double gain = parent - (nl / total) * gini(left, nl) - (nr / total) * gini(right, nr);
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = static_cast<int>(f);
        best_threshold = 0.5 * (a + b);
      }
    }
  }
  if (best_feature < 0) return index;

  std::vector<std::size_t> left_rows, right_rows;
  for (auto r : rows) (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
  rows.clear();
  rows.shrink_to_fit();
  const int l = build(x, labels, left_rows, depth + 1);
  const int r = build(x, labels, right_rows, depth + 1);
  nodes_[index].feature = best_feature;
  nodes_[index].threshold = best_threshold;
  nodes_[index].left = l;
  nodes_[index].right = r;
  return index;
}

Matrix DecisionTree::predict_proba(const Matrix& x) const {
  Matrix out(x.rows(), num_classes_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int node = 0;
    while (nodes_[node].feature >= 0) {
      node = x(r, nodes_[node].feature) <= nodes_[node].threshold ? nodes_[node].left : nodes_[node].right;
    }
    out.row(r) = nodes_[node].distribution.transpose();
  }
  return out;
}

int DecisionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

KnnClassifier::KnnClassifier(Matrix x, std::vector<int> labels, int num_classes, int k)
    : x_(std::move(x)), labels_(std::move(labels)), num_classes_(num_classes), k_(k) {
  check_labels(labels_, num_classes, static_cast<std::size_t>(x_.rows()));
  if (k_ < 1) throw Error("knn: k must be at least 1");
}

Matrix KnnClassifier::predict_proba(const Matrix& x) const {
  Matrix out = Matrix::Zero(x.rows(), num_classes_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Prediction p = query(x.row(r));
    for (auto n : p.neighbors) out(r, labels_[n]) += 1.0;
    out.row(r) /= static_cast<double>(p.neighbors.size());
  }
  return out;
}

KnnClassifier::Prediction knn_predict(const KnnClassifier& model, const Vector& feature) {
  return model.query(feature);
}

std::unique_ptr<Classifier> train_classifier(const Matrix& features, std::span<const int> labels,
                                             int num_classes, ClassifierKind kind,
                                             const ClassifierConfig& cfg, FitLog* log) {
  check_labels(labels, num_classes, static_cast<std::size_t>(features.rows()));
  switch (kind) {
    case ClassifierKind::DecisionTree:
      return std::make_unique<DecisionTree>(features, labels, num_classes, cfg.tree_max_depth,
                                            cfg.tree_min_samples_split);
    case ClassifierKind::KNN:
      return std::make_unique<KnnClassifier>(features, std::vector<int>(labels.begin(), labels.end()),
                                             num_classes, cfg.knn_k);
    case ClassifierKind::MLP: {
      Mlp net(features.cols(), cfg.mlp.hidden, num_classes, cfg.mlp.activation, cfg.mlp.seed);
      HeadLoop loop;
      loop.inputs = [&features](std::span<const std::size_t> rows) {
        Matrix x(static_cast<Eigen::Index>(rows.size()), features.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
        return x;
      };
      fit_head(net, labels, cfg.mlp, loop, log);
      return std::make_unique<MlpClassifier>(std::move(net));
    }
  }
  throw Error("train_classifier: unknown kind");
}

// ---------------------------------------------------------------------------

AdaptiveClassifier::AdaptiveClassifier(AggregationMode mode, Eigen::Index dim, Mlp head)
    : mode_(mode), w_a_(Vector::Zero(dim)), head_(std::move(head)) {
  if (head_.input_dim() != dim) throw Error("adaptive classifier: head input dim mismatch");
}

Vector AdaptiveClassifier::weights(const Matrix& list_embeddings) const {
  if (list_embeddings.rows() == 0) throw Error("adaptive classifier: empty list");
  if (mode_ == AggregationMode::Dynamic) return softmax_weights(list_embeddings, w_a_, b_a_);
  return fixed_weights(mode_, list_embeddings.rows());
}

Vector AdaptiveClassifier::user_vector(const Matrix& list_embeddings) const {
  return list_embeddings.transpose() * weights(list_embeddings);
}

Matrix AdaptiveClassifier::predict_proba(const std::vector<Matrix>& list_embeddings) const {
  Matrix u(static_cast<Eigen::Index>(list_embeddings.size()), w_a_.size());
  for (std::size_t r = 0; r < list_embeddings.size(); ++r) {
    u.row(static_cast<Eigen::Index>(r)) = user_vector(list_embeddings[r]).transpose();
  }
  return head_.probabilities(u);
}

namespace {

// d/dw_a and d/db_a of the user vectors given d/du (one row per list).
void weight_gradients(const AdaptiveClassifier& model, const std::vector<const Matrix*>& lists,
                      const Matrix& d_u, Vector& g_w, double& g_b) {
  g_w = Vector::Zero(model.w_a().size());
  g_b = 0.0;
  for (std::size_t r = 0; r < lists.size(); ++r) {
    const Matrix& e = *lists[r];
    const Vector w = model.weights(e);
    const Vector d_w = e * d_u.row(static_cast<Eigen::Index>(r)).transpose();
    const Vector d_s = w.cwiseProduct((d_w.array() - w.dot(d_w)).matrix());
    g_w += e.transpose() * d_s;
    g_b += d_s.sum();
  }
}

}  // namespace

double AdaptiveClassifier::loss(const std::vector<Matrix>& list_embeddings,
                                std::span<const int> labels, std::vector<Matrix>* grads,
                                double* kink_margin) const {
  Matrix u(static_cast<Eigen::Index>(list_embeddings.size()), w_a_.size());
  for (std::size_t r = 0; r < list_embeddings.size(); ++r) {
    u.row(static_cast<Eigen::Index>(r)) = user_vector(list_embeddings[r]).transpose();
  }
  Mlp::Cache cache;
  Matrix p = head_.probabilities(u, &cache);
  if (kink_margin) *kink_margin = head_.min_abs_preactivation(cache);
  Matrix d_logits;
  const double value = cross_entropy(p, labels, grads ? &d_logits : nullptr);
  if (grads) {
    std::vector<Matrix> head_grads;
    Matrix d_u = head_.backward(cache, d_logits, head_grads);
    Vector g_w = Vector::Zero(w_a_.size());
    double g_b = 0.0;
    if (mode_ == AggregationMode::Dynamic) {
      std::vector<const Matrix*> ptrs;
      for (const auto& m : list_embeddings) ptrs.push_back(&m);
      weight_gradients(*this, ptrs, d_u, g_w, g_b);
    }
    *grads = std::move(head_grads);
    grads->push_back(g_w.transpose());
    grads->push_back(Matrix::Constant(1, 1, g_b));
  }
  return value;
}

AdaptiveClassifier train_adaptive(const RecListSet& lists, std::span<const UserIndex> users,
                                  const EmbeddingTable& table, std::span<const int> labels,
                                  int num_classes, const AdaptiveConfig& cfg, FitLog* log) {
  check_labels(labels, num_classes, users.size());
  std::vector<Matrix> embedded;
  embedded.reserve(users.size());
  for (UserIndex u : users) embedded.push_back(gather_rows(table, lists.at(u)));

  MlpConfig head_cfg = cfg.head;
  if (head_cfg.hidden.empty()) head_cfg.hidden = {static_cast<int>(2 * table.dim())};
  AdaptiveClassifier model(cfg.mode, table.dim(),
                           Mlp(table.dim(), head_cfg.hidden, num_classes, head_cfg.activation,
                               head_cfg.seed));

  const bool learn_weights = cfg.mode == AggregationMode::Dynamic && !cfg.freeze_weights;
  Optimizer weight_opt(head_cfg.optimizer, head_cfg.learning_rate);
  Vector best_w = model.w_a();
  double best_b = model.b_a();

  HeadLoop loop;
  loop.inputs = [&](std::span<const std::size_t> rows) {
    Matrix x(static_cast<Eigen::Index>(rows.size()), table.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = model.user_vector(embedded[rows[i]]).transpose();
    }
    return x;
  };
  if (learn_weights) {
    loop.input_step = [&](std::span<const std::size_t> rows, const Matrix& d_u) {
      std::vector<const Matrix*> ptrs;
      for (auto r : rows) ptrs.push_back(&embedded[r]);
      Vector g_w;
      double g_b = 0.0;
      weight_gradients(model, ptrs, d_u, g_w, g_b);
      Matrix w = model.w_a().transpose();
      Matrix b = Matrix::Constant(1, 1, model.b_a());
      weight_opt.step({&w, &b}, {Matrix(g_w.transpose()), Matrix::Constant(1, 1, g_b)});
      model.w_a() = w.transpose();
      model.b_a() = b(0, 0);
    };
    loop.snapshot = [&] {
      best_w = model.w_a();
      best_b = model.b_a();
    };
    loop.restore = [&] {
      model.w_a() = best_w;
      model.b_a() = best_b;
    };
  }
  fit_head(model.head(), labels, head_cfg, loop, log);
  return model;
}

AttributePrediction predict_attribute(const AdaptiveClassifier& model,
                                      std::span<const ItemIndex> list, const EmbeddingTable& table) {
  Matrix p = model.predict_proba({gather_rows(table, list)});
  AttributePrediction out;
  out.probabilities = p.row(0).transpose();
  Eigen::Index arg;
  out.probabilities.maxCoeff(&arg);
  out.label = static_cast<int>(arg);
  return out;
}

}  // namespace rapi
