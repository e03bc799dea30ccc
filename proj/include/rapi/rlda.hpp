#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rapi/embedding.hpp"
#include "rapi/optim.hpp"
#include "rapi/surrogate.hpp"

namespace rapi {

// ---------------------------------------------------------------------------
// Alignment: content space -> surrogate recommendation space.

enum class AlignmentKind { Linear, Autoencoder };

std::string to_string(AlignmentKind kind);
AlignmentKind parse_alignment_kind(const std::string& name);

struct AlignmentConfig {
  AlignmentKind kind = AlignmentKind::Linear;
  double learning_rate = 0.01;
  int max_epochs = 3000;        // full-batch steps
  double tolerance = 1e-10;     // stop when the loss improves less than this over 50 steps
  double holdout_fraction = 0.1;
  double init_std = 0.01;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
};

// Linear kind: out = W e + B with W of shape (L3 x L2).
// Autoencoder kind: out = W2 tanh(W1 e + b1) + b2 with a hidden width of L3.
class AlignmentModel {
 public:
  AlignmentModel() = default;
  static AlignmentModel initialize(AlignmentKind kind, Eigen::Index input_dim,
                                   Eigen::Index output_dim, double init_std, std::uint64_t seed);
  static AlignmentModel linear(Matrix weight, Vector bias);

  AlignmentKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return params_.at(0).value.cols(); }
  Eigen::Index output_dim() const;

  // One mapped vector per row of `content` (n x L2 -> n x L3).
  Matrix apply_rows(const Matrix& content) const;

  // Mean over rows and output dimensions of the squared prediction error.
  double mse(const Matrix& content, const Matrix& target, std::vector<Matrix>* grads) const;

  std::vector<ParamGroup>& parameters() { return params_; }
  const std::vector<ParamGroup>& parameters() const { return params_; }

  void save(const std::string& dir) const;
  static AlignmentModel load(const std::string& dir);

 private:
  AlignmentKind kind_ = AlignmentKind::Linear;
  // Linear: {w (L3 x L2), b (1 x L3)}. Autoencoder: {w1, b1, w2, b2}.
  std::vector<ParamGroup> params_;
};

// Mean Euclidean distance between mapped rows and their targets.
double alignment_res(const AlignmentModel& model, const Matrix& content, const Matrix& target);

struct AlignmentResult {
  AlignmentModel model;
  double train_res = 0.0;
  double holdout_res = 0.0;
  // Holdout res of the constant predictor that outputs the mean training target.
  double baseline_res = 0.0;
  std::size_t train_items = 0;
  std::size_t holdout_items = 0;
  int epochs = 0;
};

// Fits the model on a seeded 90/10 split of the shared ids (by default),
// minimizing mean squared error with full-batch gradient steps.
AlignmentResult train_alignment(const EmbeddingTable& content, const EmbeddingTable& target,
                                const AlignmentConfig& cfg);

EmbeddingTable apply_alignment(const AlignmentModel& model, const EmbeddingTable& content);

// Pseudo-targets for when no surrogate embedding exists: each item that
// appears in some list gets the mean, over those lists, of the list's content
// centroid. Items in no list are omitted.
EmbeddingTable cooccurrence_targets(const RecListSet& lists, const EmbeddingTable& content);

// ---------------------------------------------------------------------------
// Unified embedding and list augmentation.

enum class Provenance : std::uint8_t { Surrogate, Aligned };

struct UnifiedEmbedding {
  EmbeddingTable table;                 // rows sorted by id
  std::vector<Provenance> provenance;   // parallel to table rows

  Provenance provenance_of(std::int64_t id) const;
};

// Union of two disjoint tables of equal dimension.
UnifiedEmbedding unify_embeddings(const EmbeddingTable& aligned, const EmbeddingTable& surrogate);

// Euclidean distance between two vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean(const Eigen::MatrixBase<DerivedA>& a,
                                    const Eigen::MatrixBase<DerivedB>& b) {
  return (a - b).norm();
}

double item_distance(ItemIndex a, ItemIndex b, const UnifiedEmbedding& embedding);

// Mean distance from `candidate` to the items of `list`. Lower is more similar.
double res(std::span<const ItemIndex> list, ItemIndex candidate, const UnifiedEmbedding& embedding);

struct AugmentedList {
  RecList items;             // original prefix, then appended candidates
  std::vector<double> res;   // per appended item, parallel to items[original_length:]
  std::size_t original_length = 0;
};

// Appends the k2 - k candidates with the smallest res (ties by lower id).
// Candidates are embedded items outside the list and outside `exclude`.
AugmentedList augment_list(std::span<const ItemIndex> list, const UnifiedEmbedding& embedding,
                           std::size_t k2, std::span<const ItemIndex> exclude = {});

struct AugmentedListSet {
  std::size_t k = 0;
  std::size_t k2 = 0;
  std::map<UserIndex, AugmentedList> lists;

  RecListSet as_reclists() const;
};

// Augments every list; `histories`, when given, adds each user's known
// interactions to the excluded candidates.
AugmentedListSet augment_all(const RecListSet& lists, const UnifiedEmbedding& embedding,
                             std::size_t k2,
                             const std::vector<std::vector<ItemIndex>>* histories = nullptr);

// Tab-separated rows (user_id, rank, item_id, source, res).
void write_augmented(const std::string& path, const AugmentedListSet& lists,
                     const Dataset& dataset);

}  // namespace rapi
