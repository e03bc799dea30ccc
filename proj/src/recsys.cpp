#include "rapi/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "rapi/random.hpp"
#include "text.hpp"

namespace rapi {

namespace fs = std::filesystem;

namespace {

constexpr double kLeakySlope = 0.2;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

double xavier_std(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::MF: return "MF";
    case ModelKind::NeuMF: return "NeuMF";
    case ModelKind::NGCF: return "NGCF";
    case ModelKind::LightGCN: return "LightGCN";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "mf") return ModelKind::MF;
  if (lower == "neumf") return ModelKind::NeuMF;
  if (lower == "ngcf") return ModelKind::NGCF;
  if (lower == "lightgcn") return ModelKind::LightGCN;
  throw Error("unknown recommender kind '" + name + "' (expected MF, NeuMF, NGCF or LightGCN)");
}

SparseMatrix normalized_adjacency(std::size_t num_users, std::size_t num_items,
                                  std::span<const std::pair<UserIndex, ItemIndex>> edges) {
  const auto nodes = static_cast<Eigen::Index>(num_users + num_items);
  std::vector<double> degree(nodes, 0.0);
  for (auto [u, i] : edges) {
    degree[u] += 1.0;
    degree[num_users + i] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(edges.size() * 2);
  for (auto [u, i] : edges) {
    const auto a = static_cast<Eigen::Index>(u);
    const auto b = static_cast<Eigen::Index>(num_users + i);
    const double w = 1.0 / std::sqrt(degree[a] * degree[b]);
    entries.emplace_back(a, b, w);
    entries.emplace_back(b, a, w);
  }
  SparseMatrix adj(nodes, nodes);
  // Duplicate edges are summed; callers pass unique pairs.
  adj.setFromTriplets(entries.begin(), entries.end());
  return adj;
}

void TrainConfig::validate() const {
  if (dim <= 0) throw Error("train config: dim must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("train config: learning_rate must be finite and nonnegative");
  }
  if (batch_size <= 0) throw Error("train config: batch_size must be positive");
  if (max_epochs < 0) throw Error("train config: max_epochs must be nonnegative");
  if (patience < 1) throw Error("train config: patience must be at least 1");
  if (eval_every < 1) throw Error("train config: eval_every must be at least 1");
  if (eval_k < 1) throw Error("train config: eval_k must be at least 1");
  if (negatives_per_positive < 1) throw Error("train config: negatives_per_positive must be >= 1");
  if (layers < 0) throw Error("train config: layers must be nonnegative");
  if (!(l2 >= 0.0)) throw Error("train config: l2 must be nonnegative");
}

struct RecommenderModel::Forward {
  Matrix final_all;               // (M + N) x d; unused for NeuMF
  std::vector<Matrix> ego;        // E_l, l = 0..L
  std::vector<Matrix> neighbors;  // A E_l (NGCF)
  std::vector<Matrix> preact;     // Z_l (NGCF)
};

RecommenderModel RecommenderModel::initialize(ModelKind kind, std::size_t num_users,
                                              std::size_t num_items, const TrainConfig& cfg,
                                              std::shared_ptr<const SparseMatrix> graph) {
  cfg.validate();
  if ((kind == ModelKind::LightGCN || kind == ModelKind::NGCF) && !graph) {
    throw Error(to_string(kind) + " needs an interaction graph");
  }
  Rng rng(cfg.seed);
  const auto d = cfg.dim;
  RecommenderModel m;
  m.kind_ = kind;
  m.dim_ = d;
  m.layers_ = (kind == ModelKind::LightGCN || kind == ModelKind::NGCF) ? cfg.layers : 0;
  m.graph_ = std::move(graph);
  m.params_.push_back({"user", gaussian(static_cast<Eigen::Index>(num_users), d, cfg.init_std, rng)});
  m.params_.push_back({"item", gaussian(static_cast<Eigen::Index>(num_items), d, cfg.init_std, rng)});
  if (kind == ModelKind::NGCF) {
    for (int l = 0; l < m.layers_; ++l) {
      const auto s = std::to_string(l);
      m.params_.push_back({"w1_" + s, gaussian(d, d, xavier_std(d, d), rng)});
      m.params_.push_back({"w2_" + s, gaussian(d, d, xavier_std(d, d), rng)});
      m.params_.push_back({"b_" + s, Matrix::Zero(1, d)});
    }
  } else if (kind == ModelKind::NeuMF) {
    m.params_.push_back({"w1", gaussian(2 * d, 2 * d, xavier_std(2 * d, 2 * d), rng)});
    m.params_.push_back({"b1", Matrix::Zero(1, 2 * d)});
    Matrix out(1, 3 * d);
    // GMF half starts as a plain dot product.
    out.leftCols(d).setOnes();
    out.rightCols(2 * d) = gaussian(1, 2 * d, xavier_std(2 * d, 1), rng);
    m.params_.push_back({"out", out});
  }
  if (m.graph_ && m.graph_->rows() != static_cast<Eigen::Index>(num_users + num_items)) {
    throw Error("interaction graph size does not match user and item counts");
  }
  m.refresh();
  return m;
}

RecommenderModel RecommenderModel::from_factors(Matrix users, Matrix items) {
  if (users.cols() != items.cols()) throw Error("from_factors: user and item dims differ");
  RecommenderModel m;
  m.kind_ = ModelKind::MF;
  m.dim_ = users.cols();
  m.params_.push_back({"user", std::move(users)});
  m.params_.push_back({"item", std::move(items)});
  m.refresh();
  return m;
}

const Matrix& RecommenderModel::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw Error("model has no parameter group '" + name + "'");
}

RecommenderModel::Forward RecommenderModel::forward() const {
  Forward f;
  const Matrix& users = params_[0].value;
  const Matrix& items = params_[1].value;
  if (kind_ == ModelKind::MF || kind_ == ModelKind::NeuMF) {
    f.final_all = stack(users, items);
    return f;
  }
  if (!graph_) throw Error(to_string(kind_) + " model has no graph; it cannot be propagated");
  const SparseMatrix& adj = *graph_;
  const double scale = 1.0 / static_cast<double>(layers_ + 1);
  f.ego.push_back(stack(users, items));
  if (kind_ == ModelKind::LightGCN) {
    Matrix acc = f.ego[0];
    Matrix cur = f.ego[0];
    for (int l = 0; l < layers_; ++l) {
      Matrix next = adj * cur;
      acc += next;
      cur = std::move(next);
    }
    f.final_all = scale * acc;
    return f;
  }
  // NGCF
  Matrix acc = f.ego[0];
  for (int l = 0; l < layers_; ++l) {
    const Matrix& e = f.ego[l];
    const Matrix& w1 = params_[2 + 3 * l].value;
    const Matrix& w2 = params_[3 + 3 * l].value;
    const Matrix& b = params_[4 + 3 * l].value;
    Matrix s = adj * e;
    Matrix z = (e + s) * w1 + s.cwiseProduct(e) * w2;
    z.rowwise() += b.row(0);
    Matrix next = z.unaryExpr([](double v) { return v > 0 ? v : kLeakySlope * v; });
    acc += next;
    f.neighbors.push_back(std::move(s));
    f.preact.push_back(std::move(z));
    f.ego.push_back(std::move(next));
  }
  f.final_all = scale * acc;
  return f;
}

void RecommenderModel::refresh() {
  Forward f = forward();
  const auto m = params_[0].value.rows();
  const auto n = params_[1].value.rows();
  final_users_ = f.final_all.topRows(m);
  final_items_ = f.final_all.bottomRows(n);
}

void RecommenderModel::check_user(UserIndex user) const {
  if (user < 0 || static_cast<std::size_t>(user) >= num_users()) {
    throw Error("unknown user index " + std::to_string(user));
  }
}

void RecommenderModel::check_item(ItemIndex item) const {
  if (item < 0 || static_cast<std::size_t>(item) >= num_items()) {
    throw Error("unknown item index " + std::to_string(item));
  }
}

double RecommenderModel::score(UserIndex user, ItemIndex item) const {
  check_user(user);
  check_item(item);
  if (kind_ != ModelKind::NeuMF) return final_users_.row(user).dot(final_items_.row(item));
  const auto d = dim_;
  const Matrix& w1 = params_[2].value;
  const Matrix& b1 = params_[3].value;
  const Matrix& out = params_[4].value;
  Eigen::RowVectorXd x(2 * d);
  x << final_users_.row(user), final_items_.row(item);
  Eigen::RowVectorXd h = (x * w1 + b1.row(0)).cwiseMax(0.0);
  return final_users_.row(user).cwiseProduct(final_items_.row(item)).dot(out.row(0).head(d)) +
         h.dot(out.row(0).tail(2 * d));
}

Vector RecommenderModel::score_all(UserIndex user) const {
  check_user(user);
  if (kind_ != ModelKind::NeuMF) return final_items_ * final_users_.row(user).transpose();
  const auto d = dim_;
  const auto n = final_items_.rows();
  const Matrix& w1 = params_[2].value;
  const Matrix& b1 = params_[3].value;
  const Matrix& out = params_[4].value;
  // [p, q] W1 = p W1_top + q W1_bottom
  Eigen::RowVectorXd user_part = final_users_.row(user) * w1.topRows(d) + b1.row(0);
  Matrix h = final_items_ * w1.bottomRows(d);
  h.rowwise() += user_part;
  h = h.cwiseMax(0.0);
  Eigen::RowVectorXd gmf_w = final_users_.row(user).cwiseProduct(out.row(0).head(d));
  Vector s = final_items_ * gmf_w.transpose() + h * out.row(0).tail(2 * d).transpose();
  (void)n;
  return s;
}

RecList RecommenderModel::recommend_topk(UserIndex user, std::size_t k,
                                         std::span<const ItemIndex> exclude) const {
  check_user(user);
  const std::size_t n = num_items();
  std::vector<char> excluded(n, 0);
  std::size_t n_excluded = 0;
  for (ItemIndex i : exclude) {
    check_item(i);
    if (!excluded[i]) {
      excluded[i] = 1;
      ++n_excluded;
    }
  }
  if (k > n - n_excluded) {
    throw Error("recommend_topk: K=" + std::to_string(k) + " exceeds the " +
                std::to_string(n - n_excluded) + " recommendable items");
  }
  const Vector s = score_all(user);
  std::vector<ItemIndex> candidates;
  candidates.reserve(n - n_excluded);
  for (std::size_t i = 0; i < n; ++i) {
    if (!excluded[i]) candidates.push_back(static_cast<ItemIndex>(i));
  }
  auto better = [&s](ItemIndex a, ItemIndex b) { return s[a] != s[b] ? s[a] > s[b] : a < b; };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

EmbeddingTable RecommenderModel::export_item_embeddings() const {
  std::vector<std::int64_t> ids(final_items_.rows());
  std::iota(ids.begin(), ids.end(), 0);
  return EmbeddingTable(std::move(ids), final_items_);
}

double RecommenderModel::pairwise_loss(std::span<const Triple> batch, double l2,
                                       std::vector<Matrix>* grads, double* kink_margin) const {
  if (batch.empty()) throw Error("pairwise_loss: empty batch");
  const auto m = static_cast<Eigen::Index>(num_users());
  const auto n = static_cast<Eigen::Index>(num_items());
  const auto d = dim_;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const Matrix& users = params_[0].value;
  const Matrix& items = params_[1].value;
  for (const auto& t : batch) {
    check_user(t.user);
    check_item(t.pos);
    check_item(t.neg);
  }
  double margin = std::numeric_limits<double>::infinity();

  if (grads) {
    grads->clear();
    for (const auto& p : params_) grads->push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }

  double loss = 0.0;
  double reg = 0.0;
  for (const auto& t : batch) {
    reg += users.row(t.user).squaredNorm() + items.row(t.pos).squaredNorm() +
           items.row(t.neg).squaredNorm();
  }
  loss += 0.5 * l2 * inv_b * reg;

  if (kind_ == ModelKind::NeuMF) {
    const Matrix& w1 = params_[2].value;
    const Matrix& b1 = params_[3].value;
    const Eigen::RowVectorXd og = params_[4].value.row(0).head(d);
    const Eigen::RowVectorXd om = params_[4].value.row(0).tail(2 * d);
    struct Pass {
      Eigen::RowVectorXd x, z, h;
      double s;
    };
    auto run = [&](UserIndex u, ItemIndex i) {
      Pass p;
      p.x.resize(2 * d);
      p.x << users.row(u), items.row(i);
      p.z = p.x * w1 + b1.row(0);
      margin = std::min(margin, p.z.cwiseAbs().minCoeff());
      p.h = p.z.cwiseMax(0.0);
      p.s = users.row(u).cwiseProduct(items.row(i)).dot(og) + p.h.dot(om);
      return p;
    };
    auto backprop = [&](UserIndex u, ItemIndex i, const Pass& p, double ds) {
      auto& g = *grads;
      g[4].row(0).head(d) += ds * users.row(u).cwiseProduct(items.row(i));
      g[4].row(0).tail(2 * d) += ds * p.h;
      Eigen::RowVectorXd dz = (ds * om).cwiseProduct((p.z.array() > 0.0).cast<double>().matrix());
      g[2] += p.x.transpose() * dz;
      g[3].row(0) += dz;
      Eigen::RowVectorXd dx = dz * w1.transpose();
      g[0].row(u) += ds * og.cwiseProduct(items.row(i)) + dx.head(d);
      g[1].row(i) += ds * og.cwiseProduct(users.row(u)) + dx.tail(d);
    };
    for (const auto& t : batch) {
      Pass pos = run(t.user, t.pos);
      Pass neg = run(t.user, t.neg);
      const double x = pos.s - neg.s;
      loss += inv_b * softplus(-x);
      if (grads) {
        const double dx = -inv_b * sigmoid(-x);
        backprop(t.user, t.pos, pos, dx);
        backprop(t.user, t.neg, neg, -dx);
      }
    }
  } else {
    Forward f = forward();
    const Matrix& fin = f.final_all;
    Matrix g_final;
    if (grads) g_final = Matrix::Zero(fin.rows(), fin.cols());
    for (const auto& t : batch) {
      const auto u = static_cast<Eigen::Index>(t.user);
      const auto i = m + t.pos;
      const auto j = m + t.neg;
      const double x = fin.row(u).dot(fin.row(i) - fin.row(j));
      loss += inv_b * softplus(-x);
      if (grads) {
        const double dx = -inv_b * sigmoid(-x);
        g_final.row(u) += dx * (fin.row(i) - fin.row(j));
        g_final.row(i) += dx * fin.row(u);
        g_final.row(j) -= dx * fin.row(u);
      }
    }
    if (kind_ == ModelKind::NGCF) {
      for (const auto& z : f.preact) margin = std::min(margin, z.cwiseAbs().minCoeff());
    }
    if (grads) {
      Matrix g_ego;
      if (kind_ == ModelKind::MF) {
        g_ego = std::move(g_final);
      } else if (kind_ == ModelKind::LightGCN) {
        const double scale = 1.0 / static_cast<double>(layers_ + 1);
        // sum_{l=0..L} (A^T)^l G via Horner's scheme
        Matrix acc = g_final;
        for (int l = 0; l < layers_; ++l) acc = g_final + graph_->transpose() * acc;
        g_ego = scale * acc;
      } else {
        const SparseMatrix& adj = *graph_;
        const double scale = 1.0 / static_cast<double>(layers_ + 1);
        const Matrix g_direct = scale * g_final;
        Matrix g_e = g_direct;  // gradient w.r.t. E_L
        for (int l = layers_ - 1; l >= 0; --l) {
          const Matrix& e = f.ego[l];
          const Matrix& s = f.neighbors[l];
          const Matrix& z = f.preact[l];
          const Matrix& w1 = params_[2 + 3 * l].value;
          const Matrix& w2 = params_[3 + 3 * l].value;
          Matrix g_z = g_e.cwiseProduct(z.unaryExpr([](double v) { return v > 0 ? 1.0 : kLeakySlope; }));
          (*grads)[2 + 3 * l] += (e + s).transpose() * g_z;
          (*grads)[3 + 3 * l] += s.cwiseProduct(e).transpose() * g_z;
          (*grads)[4 + 3 * l].row(0) += g_z.colwise().sum();
          Matrix g_sum = g_z * w1.transpose();   // w.r.t. (E + S)
          Matrix g_h = g_z * w2.transpose();     // w.r.t. S .* E
          Matrix g_s = g_sum + g_h.cwiseProduct(e);
          g_e = g_direct + g_sum + g_h.cwiseProduct(s) + adj.transpose() * g_s;
        }
        g_ego = std::move(g_e);
      }
      (*grads)[0] += g_ego.topRows(m);
      (*grads)[1] += g_ego.bottomRows(n);
    }
  }

  if (grads) {
    for (const auto& t : batch) {
      (*grads)[0].row(t.user) += l2 * inv_b * users.row(t.user);
      (*grads)[1].row(t.pos) += l2 * inv_b * items.row(t.pos);
      (*grads)[1].row(t.neg) += l2 * inv_b * items.row(t.neg);
    }
  }
  if (kink_margin) *kink_margin = margin;
  return loss;
}

void RecommenderModel::save(const std::string& dir, const std::string& extra_manifest) const {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  manifest << "kind=" << to_string(kind_) << '\n'
           << "num_users=" << num_users() << '\n'
           << "num_items=" << num_items() << '\n'
           << "dim=" << dim_ << '\n'
           << "layers=" << layers_ << '\n';
  std::string groups;
  for (const auto& p : params_) {
    groups += (groups.empty() ? "" : ",") + p.name;
    write_matrix((fs::path(dir) / (p.name + ".emb")).string(), p.value);
  }
  manifest << "groups=" << groups << '\n';
  manifest << extra_manifest;
  write_matrix((fs::path(dir) / "final_users.emb").string(), final_users_);
  write_matrix((fs::path(dir) / "final_items.emb").string(), final_items_);
  if (!manifest) throw Error("failed to write model manifest in " + dir);
}

RecommenderModel RecommenderModel::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw Error("no model checkpoint at " + dir);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  RecommenderModel m;
  m.kind_ = parse_model_kind(kv.at("kind"));
  m.dim_ = std::stol(kv.at("dim"));
  m.layers_ = std::stoi(kv.at("layers"));
  for (auto name : detail::split_on(kv.at("groups"), ",")) {
    const std::string n(name);
    m.params_.push_back({n, load_matrix((fs::path(dir) / (n + ".emb")).string())});
  }
  m.final_users_ = load_matrix((fs::path(dir) / "final_users.emb").string());
  m.final_items_ = load_matrix((fs::path(dir) / "final_items.emb").string());
  return m;
}

std::vector<std::vector<ItemIndex>> user_histories(const Dataset& dataset,
                                                   std::span<const std::size_t> interaction_ids) {
  std::vector<std::vector<ItemIndex>> out(dataset.num_users());
  for (std::size_t idx : interaction_ids) {
    const auto& r = dataset.interactions()[idx];
    out[r.user].push_back(r.item);
  }
  for (auto& h : out) {
    std::sort(h.begin(), h.end());
    h.erase(std::unique(h.begin(), h.end()), h.end());
  }
  return out;
}

double validation_hit_rate(const RecommenderModel& model, const Dataset& dataset,
                           const Split& split, int k) {
  const auto train = user_histories(dataset, split.train);
  const auto val = user_histories(dataset, split.validation);
  std::size_t users = 0, hits = 0;
  for (std::size_t u = 0; u < val.size(); ++u) {
    if (val[u].empty()) continue;
    const std::size_t available = model.num_items() - train[u].size();
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), available);
    if (kk == 0) continue;
    ++users;
    RecList top = model.recommend_topk(static_cast<UserIndex>(u), kk, train[u]);
    for (ItemIndex i : top) {
      if (std::binary_search(val[u].begin(), val[u].end(), i)) {
        ++hits;
        break;
      }
    }
  }
  return users == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(users);
}

RecommenderModel train_recommender(const Dataset& dataset, const Split& split,
                                   const TrainConfig& cfg, ModelKind kind, TrainLog* log) {
  cfg.validate();
  if (split.train.empty()) throw Error("train_recommender: empty training split");
  const std::size_t m = dataset.num_users();
  const std::size_t n = dataset.num_items();
  const auto history = user_histories(dataset, split.train);

  std::shared_ptr<const SparseMatrix> graph;
  if (kind == ModelKind::LightGCN || kind == ModelKind::NGCF) {
    std::vector<std::pair<UserIndex, ItemIndex>> edges;
    for (std::size_t u = 0; u < m; ++u) {
      for (ItemIndex i : history[u]) edges.emplace_back(static_cast<UserIndex>(u), i);
    }
    graph = std::make_shared<const SparseMatrix>(normalized_adjacency(m, n, edges));
  }
  RecommenderModel model = RecommenderModel::initialize(kind, m, n, cfg, graph);

  Rng rng(splitmix64(cfg.seed ^ 0x5eedULL));
  std::uniform_int_distribution<ItemIndex> any_item(0, static_cast<ItemIndex>(n - 1));
  std::vector<std::pair<UserIndex, ItemIndex>> positives;
  for (std::size_t u = 0; u < m; ++u) {
    if (history[u].size() >= n) continue;  // no negative exists
    for (ItemIndex i : history[u]) positives.emplace_back(static_cast<UserIndex>(u), i);
  }
  if (positives.empty()) throw Error("train_recommender: no trainable interactions");

  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  std::vector<Matrix*> targets;
  for (auto& p : model.parameters()) targets.push_back(&p.value);

  const bool early_stop = !split.validation.empty();
  std::vector<ParamGroup> best = model.parameters();
  double best_hr = -1.0;
  int best_epoch = 0;
  int stale = 0;
  std::vector<Triple> batch;
  std::vector<Matrix> grads;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(positives.begin(), positives.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < positives.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(positives.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t p = start; p < end; ++p) {
        const auto [u, i] = positives[p];
        for (int s = 0; s < cfg.negatives_per_positive; ++s) {
          ItemIndex j;
          do {
            j = any_item(rng);
          } while (std::binary_search(history[u].begin(), history[u].end(), j));
          batch.push_back({u, i, j});
        }
      }
      const double loss = model.pairwise_loss(batch, cfg.l2, &grads);
      if (!std::isfinite(loss)) {
        throw Error("train_recommender: " + to_string(kind) + " diverged at epoch " +
                    std::to_string(epoch) + " (non-finite loss; learning rate " +
                    detail::format_double(cfg.learning_rate) + ")");
      }
      opt.step(targets, grads);
      epoch_loss += loss;
      ++batches;
    }
    for (const auto& p : model.parameters()) {
      if (!p.value.allFinite()) {
        throw Error("train_recommender: non-finite parameters in group '" + p.name +
                    "' after epoch " + std::to_string(epoch));
      }
    }
    model.refresh();
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (early_stop && epoch % cfg.eval_every == 0) {
      const double hr = validation_hit_rate(model, dataset, split, cfg.eval_k);
      if (log) log->validation_hit_rate.push_back(hr);
      if (hr > best_hr) {
        best_hr = hr;
        best_epoch = epoch;
        best = model.parameters();
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  if (early_stop && best_hr >= 0.0) {
    model.parameters() = best;
    model.refresh();
  } else {
    best_epoch = cfg.max_epochs;
  }
  if (log) {
    log->best_epoch = best_epoch;
    log->best_hit_rate = std::max(best_hr, 0.0);
  }
  return model;
}

}  // namespace rapi
