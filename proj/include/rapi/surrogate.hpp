#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rapi/recsys.hpp"

namespace rapi {

// Top-K lists for a set of users.
struct RecListSet {
  std::size_t k = 0;
  std::map<UserIndex, RecList> lists;

  // Every list has exactly k distinct items.
  void validate() const;
  const RecList& at(UserIndex user) const;
};

// Top-k lists for `users`, each excluding that user's entry in `history`.
RecListSet recommend_all(const RecommenderModel& model, std::span<const UserIndex> users,
                         std::size_t k, const std::vector<std::vector<ItemIndex>>& history);

// Mean over `users` of |z ∩ ẑ| / |z|. Set overlap, so list order is ignored.
double compute_rls(const RecListSet& original, const RecListSet& candidate,
                   std::span<const UserIndex> users);

struct CandidateSpec {
  ModelKind kind = ModelKind::MF;
  TrainConfig cfg;
};

struct CandidateResult {
  ModelKind kind = ModelKind::MF;
  double rls = 0.0;
  bool failed = false;
  std::string error;
  double train_seconds = 0.0;
};

struct SurrogateReport {
  std::size_t k = 0;
  std::vector<CandidateResult> candidates;
  ModelKind chosen = ModelKind::MF;
  // Set when no interaction providers exist and the tournament was skipped.
  bool skipped = false;
};

struct SurrogateOutcome {
  SurrogateReport report;
  std::optional<RecommenderModel> model;  // empty when skipped
};

// Trains every candidate on the providers' interactions (`provider_split`
// must already be restricted to them), lists top-K for each provider, and keeps
// the candidate with the highest rls against `original`. Ties go to the
// earlier kind in MF, NeuMF, NGCF, LightGCN order. A candidate that throws
// during training is recorded as failed and skipped.
SurrogateOutcome confirm_surrogate(const Dataset& dataset, const Split& provider_split,
                                   std::span<const UserIndex> providers,
                                   const std::vector<CandidateSpec>& candidates,
                                   const RecListSet& original);

// Tab-separated: kind, rls, chosen flag (plus failure text when a candidate failed).
void write_surrogate_report(const std::string& path, const SurrogateReport& report);

// Tab-separated rows (user_id, rank, item_id), rank starting at 1.
void write_reclists(const std::string& path, const RecListSet& lists, const Dataset& dataset);
RecListSet read_reclists(const std::string& path, const Dataset& dataset);

}  // namespace rapi
