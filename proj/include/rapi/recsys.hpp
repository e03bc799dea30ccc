#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "rapi/dataset.hpp"
#include "rapi/embedding.hpp"
#include "rapi/optim.hpp"

namespace rapi {

enum class ModelKind { MF, NeuMF, NGCF, LightGCN };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Symmetrically normalized adjacency D^-1/2 A D^-1/2 of the user-item bipartite
// graph. Users occupy rows [0, m), items rows [m, m + n).
SparseMatrix normalized_adjacency(std::size_t num_users, std::size_t num_items,
                                  std::span<const std::pair<UserIndex, ItemIndex>> edges);

struct TrainConfig {
  Eigen::Index dim = 64;
  double learning_rate = 0.01;
  int batch_size = 1024;
  int max_epochs = 500;
  int patience = 10;       // in evaluations
  int eval_every = 5;      // epochs between validation evaluations
  int eval_k = 20;         // hit-rate cutoff used for early stopping
  int negatives_per_positive = 1;
  int layers = 2;          // propagation layers (graph models)
  double l2 = 1e-4;        // on the ego embeddings of each sampled triple
  double init_std = 0.1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;

  void validate() const;
};

// One (user, positive item, negative item) sample of the pairwise objective.
struct Triple {
  UserIndex user = 0;
  ItemIndex pos = 0;
  ItemIndex neg = 0;
};

// A trained implicit-feedback ranker. Parameter groups are dense matrices
// (named, e.g. "user", "item", "w1_0"); scoring uses cached final embeddings
// that refresh() recomputes from the parameters.
class RecommenderModel {
 public:
  RecommenderModel() = default;

  // Gaussian(0, init_std) embeddings plus kind-specific weights.
  static RecommenderModel initialize(ModelKind kind, std::size_t num_users, std::size_t num_items,
                                     const TrainConfig& cfg,
                                     std::shared_ptr<const SparseMatrix> graph = nullptr);

  // Plain dot-product MF with the given factors.
  static RecommenderModel from_factors(Matrix users, Matrix items);

  ModelKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  int layers() const { return layers_; }
  std::size_t num_users() const { return static_cast<std::size_t>(params_[0].value.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(params_[1].value.rows()); }

  std::vector<ParamGroup>& parameters() { return params_; }
  const std::vector<ParamGroup>& parameters() const { return params_; }
  const Matrix& parameter(const std::string& name) const;

  const SparseMatrix* graph() const { return graph_.get(); }

  // Recomputes the cached final embeddings after parameters change.
  void refresh();

  double score(UserIndex user, ItemIndex item) const;
  Vector score_all(UserIndex user) const;

  // Top-K by descending score, excluding `exclude`; ties go to the lower item index.
  RecList recommend_topk(UserIndex user, std::size_t k, std::span<const ItemIndex> exclude) const;

  // Item vectors in the model's latent space: the factor table for MF/NeuMF,
  // the layer-averaged propagated vectors for the graph models.
  EmbeddingTable export_item_embeddings() const;
  const Matrix& final_users() const { return final_users_; }
  const Matrix& final_items() const { return final_items_; }

  void save(const std::string& dir, const std::string& extra_manifest = {}) const;
  // Loaded models can score and export but carry no graph.
  static RecommenderModel load(const std::string& dir);

  // Pairwise logistic loss on a batch plus l2/2 times the mean squared norm of
  // the triples' ego embeddings. When `grads` is given it receives one matrix
  // per parameter group. `kink_margin` reports the smallest |pre-activation| of
  // any piecewise-linear unit (infinity when there is none).
  double pairwise_loss(std::span<const Triple> batch, double l2, std::vector<Matrix>* grads,
                       double* kink_margin = nullptr) const;

 private:
  struct Forward;
  Forward forward() const;
  void check_user(UserIndex user) const;
  void check_item(ItemIndex item) const;

  ModelKind kind_ = ModelKind::MF;
  Eigen::Index dim_ = 0;
  int layers_ = 0;
  std::vector<ParamGroup> params_;
  std::shared_ptr<const SparseMatrix> graph_;
  Matrix final_users_;
  Matrix final_items_;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> validation_hit_rate;
  int best_epoch = 0;
  double best_hit_rate = 0.0;
};

// Fraction of users with validation interactions that have at least one of
// them in their top-k (train items excluded).
double validation_hit_rate(const RecommenderModel& model, const Dataset& dataset,
                           const Split& split, int k);

// Pairwise-ranking SGD with uniform negative sampling and early stopping on
// validation hit rate. Graph models propagate over the train interactions.
RecommenderModel train_recommender(const Dataset& dataset, const Split& split,
                                   const TrainConfig& cfg, ModelKind kind,
                                   TrainLog* log = nullptr);

// Per-user sorted item lists built from a subset of interactions.
std::vector<std::vector<ItemIndex>> user_histories(const Dataset& dataset,
                                                   std::span<const std::size_t> interaction_ids);

}  // namespace rapi
