#include "rapi/rlda.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "rapi/random.hpp"
#include "text.hpp"

namespace rapi {

namespace fs = std::filesystem;

std::string to_string(AlignmentKind kind) {
  return kind == AlignmentKind::Linear ? "linear" : "autoencoder";
}

AlignmentKind parse_alignment_kind(const std::string& name) {
  if (name == "linear" || name == "mlp") return AlignmentKind::Linear;
  if (name == "autoencoder" || name == "ae") return AlignmentKind::Autoencoder;
  throw Error("unknown alignment kind '" + name + "' (expected linear or autoencoder)");
}

AlignmentModel AlignmentModel::initialize(AlignmentKind kind, Eigen::Index input_dim,
                                          Eigen::Index output_dim, double init_std,
                                          std::uint64_t seed) {
  if (input_dim <= 0 || output_dim <= 0) throw Error("alignment: dimensions must be positive");
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, init_std);
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    }
    return m;
  };
  AlignmentModel m;
  m.kind_ = kind;
  if (kind == AlignmentKind::Linear) {
    m.params_.push_back({"w", random(output_dim, input_dim)});
    m.params_.push_back({"b", Matrix::Zero(1, output_dim)});
  } else {
    // tanh needs inputs of order one to train; scale the encoder like Xavier.
    std::normal_distribution<double> enc(0.0, std::sqrt(1.0 / static_cast<double>(input_dim)));
    Matrix w1(output_dim, input_dim);
    for (Eigen::Index i = 0; i < w1.rows(); ++i) {
      for (Eigen::Index j = 0; j < w1.cols(); ++j) w1(i, j) = enc(rng);
    }
    m.params_.push_back({"w1", std::move(w1)});
    m.params_.push_back({"b1", Matrix::Zero(1, output_dim)});
    m.params_.push_back({"w2", random(output_dim, output_dim)});
    m.params_.push_back({"b2", Matrix::Zero(1, output_dim)});
  }
  return m;
}

AlignmentModel AlignmentModel::linear(Matrix weight, Vector bias) {
  if (weight.rows() != bias.size()) throw Error("alignment: bias length must match weight rows");
  AlignmentModel m;
  m.kind_ = AlignmentKind::Linear;
  m.params_.push_back({"w", std::move(weight)});
  m.params_.push_back({"b", bias.transpose()});
  return m;
}

Eigen::Index AlignmentModel::output_dim() const {
  return kind_ == AlignmentKind::Linear ? params_.at(0).value.rows() : params_.at(2).value.rows();
}

Matrix AlignmentModel::apply_rows(const Matrix& content) const {
  if (content.cols() != input_dim()) {
    throw Error("alignment: content dim " + std::to_string(content.cols()) + " does not match " +
                std::to_string(input_dim()));
  }
  if (kind_ == AlignmentKind::Linear) {
    Matrix out = content * params_[0].value.transpose();
    out.rowwise() += params_[1].value.row(0);
    return out;
  }
  Matrix hidden = content * params_[0].value.transpose();
  hidden.rowwise() += params_[1].value.row(0);
  hidden = hidden.array().tanh().matrix();
  Matrix out = hidden * params_[2].value.transpose();
  out.rowwise() += params_[3].value.row(0);
  return out;
}

double AlignmentModel::mse(const Matrix& content, const Matrix& target,
                           std::vector<Matrix>* grads) const {
  if (content.rows() != target.rows() || target.cols() != output_dim()) {
    throw Error("alignment: content/target shapes do not match");
  }
  if (content.rows() == 0) throw Error("alignment: no training rows");
  const double scale = 1.0 / static_cast<double>(target.rows() * target.cols());
  if (kind_ == AlignmentKind::Linear) {
    Matrix diff = apply_rows(content) - target;
    if (grads) {
      Matrix g_out = 2.0 * scale * diff;
      grads->assign({g_out.transpose() * content, g_out.colwise().sum()});
    }
    return scale * diff.squaredNorm();
  }
  Matrix pre = content * params_[0].value.transpose();
  pre.rowwise() += params_[1].value.row(0);
  Matrix hidden = pre.array().tanh().matrix();
  Matrix out = hidden * params_[2].value.transpose();
  out.rowwise() += params_[3].value.row(0);
  Matrix diff = out - target;
  if (grads) {
    Matrix g_out = 2.0 * scale * diff;
    Matrix g_hidden = g_out * params_[2].value;
    Matrix g_pre = g_hidden.cwiseProduct((1.0 - hidden.array().square()).matrix());
    grads->assign({g_pre.transpose() * content, g_pre.colwise().sum(), g_out.transpose() * hidden,
                   g_out.colwise().sum()});
  }
  return scale * diff.squaredNorm();
}

void AlignmentModel::save(const std::string& dir) const {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  manifest << "kind=" << to_string(kind_) << '\n';
  for (const auto& p : params_) write_matrix((fs::path(dir) / (p.name + ".emb")).string(), p.value);
}

AlignmentModel AlignmentModel::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw Error("no alignment model at " + dir);
  std::string line;
  std::getline(in, line);
  if (line.rfind("kind=", 0) != 0) throw Error("bad alignment manifest in " + dir);
  AlignmentModel m;
  m.kind_ = parse_alignment_kind(line.substr(5));
  const std::vector<std::string> names =
      m.kind_ == AlignmentKind::Linear ? std::vector<std::string>{"w", "b"}
                                       : std::vector<std::string>{"w1", "b1", "w2", "b2"};
  for (const auto& n : names) m.params_.push_back({n, load_matrix((fs::path(dir) / (n + ".emb")).string())});
  return m;
}

double alignment_res(const AlignmentModel& model, const Matrix& content, const Matrix& target) {
  if (content.rows() == 0) return 0.0;
  Matrix diff = model.apply_rows(content) - target;
  return diff.rowwise().norm().mean();
}

namespace {

Matrix gather(const EmbeddingTable& table, const std::vector<std::int64_t>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.dim());
  for (std::size_t r = 0; r < ids.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = table[ids[r]];
  return out;
}

}  // namespace

AlignmentResult train_alignment(const EmbeddingTable& content, const EmbeddingTable& target,
                                const AlignmentConfig& cfg) {
  std::vector<std::int64_t> shared;
  for (auto id : target.ids()) {
    if (content.contains(id)) shared.push_back(id);
  }
  if (shared.size() != target.size() || shared.size() != content.size()) {
    throw Error("train_alignment: content and target tables must cover the same items");
  }
  if (shared.empty()) throw Error("train_alignment: no related items to align");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
    throw Error("train_alignment: holdout_fraction must lie in [0, 1)");
  }
  std::sort(shared.begin(), shared.end());
  Rng rng(cfg.seed);
  std::shuffle(shared.begin(), shared.end(), rng);
  std::size_t n_hold = static_cast<std::size_t>(
      std::floor(cfg.holdout_fraction * static_cast<double>(shared.size()) + 1e-9));
  if (n_hold >= shared.size()) n_hold = shared.size() - 1;
  std::vector<std::int64_t> hold(shared.begin(), shared.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::int64_t> train(shared.begin() + static_cast<std::ptrdiff_t>(n_hold), shared.end());

  const Matrix x_train = gather(content, train);
  const Matrix t_train = gather(target, train);
  const Matrix x_hold = gather(content, hold);
  const Matrix t_hold = gather(target, hold);

  AlignmentResult result;
  result.model = AlignmentModel::initialize(cfg.kind, content.dim(), target.dim(), cfg.init_std,
                                            splitmix64(cfg.seed));
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  std::vector<Matrix*> targets;
  for (auto& p : result.model.parameters()) targets.push_back(&p.value);
  std::vector<Matrix> grads;
  double checkpoint_loss = std::numeric_limits<double>::infinity();
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const double loss = result.model.mse(x_train, t_train, &grads);
    if (!std::isfinite(loss)) throw Error("train_alignment: diverged (non-finite loss)");
    if (epoch % 50 == 0) {
      if (checkpoint_loss - loss < cfg.tolerance) break;
      checkpoint_loss = loss;
    }
    opt.step(targets, grads);
  }
  result.epochs = epoch;
  result.train_items = train.size();
  result.holdout_items = hold.size();
  result.train_res = alignment_res(result.model, x_train, t_train);
  if (!hold.empty()) {
    result.holdout_res = alignment_res(result.model, x_hold, t_hold);
    const Eigen::RowVectorXd mean = t_train.colwise().mean();
    result.baseline_res = (t_hold.rowwise() - mean).rowwise().norm().mean();
  }
  return result;
}

EmbeddingTable apply_alignment(const AlignmentModel& model, const EmbeddingTable& content) {
  if (content.dim() != model.input_dim()) {
    throw Error("apply_alignment: content dim " + std::to_string(content.dim()) +
                " does not match model input dim " + std::to_string(model.input_dim()));
  }
  return EmbeddingTable(content.ids(), model.apply_rows(content.matrix()));
}

EmbeddingTable cooccurrence_targets(const RecListSet& lists, const EmbeddingTable& content) {
  std::map<std::int64_t, std::pair<Vector, int>> acc;
  for (const auto& [user, list] : lists.lists) {
    if (list.empty()) continue;
    Vector centroid = Vector::Zero(content.dim());
    for (ItemIndex i : list) centroid += content[i].transpose();
    centroid /= static_cast<double>(list.size());
    for (ItemIndex i : list) {
      auto [it, inserted] = acc.try_emplace(i, Vector::Zero(content.dim()), 0);
      it->second.first += centroid;
      it->second.second += 1;
    }
  }
  std::vector<std::int64_t> ids;
  Matrix rows(static_cast<Eigen::Index>(acc.size()), content.dim());
  Eigen::Index r = 0;
  for (const auto& [id, sum] : acc) {
    ids.push_back(id);
    rows.row(r++) = (sum.first / static_cast<double>(sum.second)).transpose();
  }
  return EmbeddingTable(std::move(ids), std::move(rows));
}

Provenance UnifiedEmbedding::provenance_of(std::int64_t id) const {
  auto row = table.row_of(id);
  if (!row) throw Error("unified embedding: unknown item " + std::to_string(id));
  return provenance[*row];
}

UnifiedEmbedding unify_embeddings(const EmbeddingTable& aligned, const EmbeddingTable& surrogate) {
  if (!aligned.empty() && !surrogate.empty() && aligned.dim() != surrogate.dim()) {
    throw Error("unify_embeddings: aligned dim " + std::to_string(aligned.dim()) +
                " differs from surrogate dim " + std::to_string(surrogate.dim()));
  }
  std::vector<std::pair<std::int64_t, Provenance>> order;
  for (auto id : surrogate.ids()) order.emplace_back(id, Provenance::Surrogate);
  for (auto id : aligned.ids()) {
    if (surrogate.contains(id)) {
      throw Error("unify_embeddings: item " + std::to_string(id) + " present in both tables");
    }
    order.emplace_back(id, Provenance::Aligned);
  }
  std::sort(order.begin(), order.end());
  const Eigen::Index dim = surrogate.empty() ? aligned.dim() : surrogate.dim();
  Matrix rows(static_cast<Eigen::Index>(order.size()), dim);
  std::vector<std::int64_t> ids;
  UnifiedEmbedding out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto [id, source] = order[r];
    ids.push_back(id);
    rows.row(static_cast<Eigen::Index>(r)) =
        source == Provenance::Surrogate ? surrogate[id] : aligned[id];
    out.provenance.push_back(source);
  }
  out.table = EmbeddingTable(std::move(ids), std::move(rows));
  return out;
}

double item_distance(ItemIndex a, ItemIndex b, const UnifiedEmbedding& embedding) {
  return euclidean(embedding.table[a], embedding.table[b]);
}

double res(std::span<const ItemIndex> list, ItemIndex candidate, const UnifiedEmbedding& embedding) {
  if (list.empty()) throw Error("res: empty list");
  if (std::find(list.begin(), list.end(), candidate) != list.end()) {
    throw Error("res: candidate " + std::to_string(candidate) + " is already in the list");
  }
  double sum = 0.0;
  for (ItemIndex a : list) sum += item_distance(a, candidate, embedding);
  return sum / static_cast<double>(list.size());
}

namespace {

// Candidate order shared by augment_list and augment_all.
void keep_closest(std::vector<std::pair<double, ItemIndex>>& scored, std::size_t extra) {
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(extra),
                    scored.end());
  scored.resize(extra);
}

std::vector<char> excluded_mask(std::span<const ItemIndex> list, std::span<const ItemIndex> exclude,
                                const UnifiedEmbedding& embedding, std::int64_t max_id) {
  std::vector<char> mask(static_cast<std::size_t>(max_id + 1), 0);
  for (ItemIndex i : list) {
    if (!embedding.table.contains(i)) throw Error("augment: list item " + std::to_string(i) + " has no embedding");
    mask.at(i) = 1;
  }
  for (ItemIndex i : exclude) {
    if (i >= 0 && i <= max_id) mask[i] = 1;
  }
  return mask;
}

std::int64_t max_id(const UnifiedEmbedding& embedding) {
  return embedding.table.empty() ? -1 : embedding.table.ids().back();
}

}  // namespace

AugmentedList augment_list(std::span<const ItemIndex> list, const UnifiedEmbedding& embedding,
                           std::size_t k2, std::span<const ItemIndex> exclude) {
  if (k2 < list.size()) throw Error("augment_list: K2 is smaller than the list length");
  AugmentedList out;
  out.items.assign(list.begin(), list.end());
  out.original_length = list.size();
  const std::size_t extra = k2 - list.size();
  if (extra == 0) return out;
  if (list.empty()) throw Error("augment_list: cannot augment an empty list");
  const auto top = max_id(embedding);
  const auto mask = excluded_mask(list, exclude, embedding, top);
  std::vector<std::pair<double, ItemIndex>> scored;
  for (auto id : embedding.table.ids()) {
    if (mask[id]) continue;
    const auto c = static_cast<ItemIndex>(id);
    scored.emplace_back(res(list, c, embedding), c);
  }
  if (scored.size() < extra) {
    throw Error("augment_list: only " + std::to_string(scored.size()) + " candidates for " +
                std::to_string(extra) + " slots");
  }
  keep_closest(scored, extra);
  for (const auto& [r, item] : scored) {
    out.items.push_back(item);
    out.res.push_back(r);
  }
  return out;
}

RecListSet AugmentedListSet::as_reclists() const {
  RecListSet out;
  out.k = k2;
  for (const auto& [user, list] : lists) out.lists[user] = list.items;
  return out;
}

AugmentedListSet augment_all(const RecListSet& lists, const UnifiedEmbedding& embedding,
                             std::size_t k2,
                             const std::vector<std::vector<ItemIndex>>* histories) {
  AugmentedListSet out;
  out.k = lists.k;
  out.k2 = k2;
  if (k2 < lists.k) throw Error("augment_all: K2 is smaller than K");
  const auto& ids = embedding.table.ids();
  const auto n = static_cast<Eigen::Index>(ids.size());
  // Pairwise distances are computed once when the table is small enough.
  constexpr Eigen::Index kDenseLimit = 6000;
  const bool dense = n <= kDenseLimit && k2 > lists.k;
  Matrix dist;
  if (dense) {
    dist.resize(n, n);
    const auto& m = embedding.table.matrix();
    for (Eigen::Index a = 0; a < n; ++a) {
      dist(a, a) = 0.0;
      for (Eigen::Index b = a + 1; b < n; ++b) {
        dist(a, b) = euclidean(m.row(a), m.row(b));
        dist(b, a) = dist(a, b);
      }
    }
  }
  const auto top = max_id(embedding);
  const std::size_t extra = k2 - lists.k;
  for (const auto& [user, list] : lists.lists) {
    std::span<const ItemIndex> exclude;
    if (histories && static_cast<std::size_t>(user) < histories->size()) exclude = (*histories)[user];
    if (!dense || extra == 0) {
      out.lists[user] = augment_list(list, embedding, k2, exclude);
      continue;
    }
    if (list.empty()) throw Error("augment_all: empty list for user " + std::to_string(user));
    const auto mask = excluded_mask(list, exclude, embedding, top);
    std::vector<Eigen::Index> rows;
    for (ItemIndex i : list) rows.push_back(*embedding.table.row_of(i));
    std::vector<std::pair<double, ItemIndex>> scored;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (mask[ids[c]]) continue;
      double sum = 0.0;
      for (auto r : rows) sum += dist(r, c);
      scored.emplace_back(sum / static_cast<double>(list.size()), static_cast<ItemIndex>(ids[c]));
    }
    if (scored.size() < extra) {
      throw Error("augment_all: user " + std::to_string(user) + " has only " +
                  std::to_string(scored.size()) + " candidates for " + std::to_string(extra) +
                  " slots");
    }
    keep_closest(scored, extra);
    AugmentedList a;
    a.items = list;
    a.original_length = list.size();
    for (const auto& [r, item] : scored) {
      a.items.push_back(item);
      a.res.push_back(r);
    }
    out.lists[user] = std::move(a);
  }
  return out;
}

void write_augmented(const std::string& path, const AugmentedListSet& lists,
                     const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [user, list] : lists.lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      const bool original = r < list.original_length;
      out << dataset.user_ids().at(user) << '\t' << (r + 1) << '\t'
          << dataset.item_ids().at(list.items[r]) << '\t' << (original ? "original" : "augmented")
          << '\t' << (original ? std::string("NA") : detail::format_double(list.res[r - list.original_length]))
          << '\n';
    }
  }
}

}  // namespace rapi
