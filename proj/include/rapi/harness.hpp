#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rapi/classify.hpp"
#include "rapi/config.hpp"
#include "rapi/dataset.hpp"
#include "rapi/random.hpp"
#include "rapi/recsys.hpp"
#include "rapi/rlda.hpp"
#include "rapi/surrogate.hpp"

namespace rapi {

// ---------------------------------------------------------------------------
// Configuration

struct EmbeddingSource {
  enum class Kind { Hash, File };
  Kind kind = Kind::Hash;
  std::string path;       // File: embedding table keyed by item id
  Eigen::Index dim = 64;  // Hash
  std::uint64_t seed = 0; // Hash
};

// Attribute predictors. DT/KNN/MLP are the baselines; RAPI is the
// adaptive-weight classifier (Dynamic) and Sum/Static are its fixed-weight
// ablations.
enum class Method { DT, KNN, MLP, RAPI, Sum, Static };

std::string to_string(Method method);
Method parse_method(const std::string& name);
std::vector<Method> default_methods(int scenario);

struct ScenarioConfig {
  int scenario = 1;
  std::string attribute = "gender";
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t k = 20;
  std::size_t k2 = 50;
  ModelKind original_kind = ModelKind::LightGCN;
  std::vector<ModelKind> candidate_kinds = {ModelKind::MF, ModelKind::NeuMF, ModelKind::NGCF};
  EmbeddingSource embedding_source;
  SeedPolicy seeds;
  std::vector<Method> methods;   // empty: default_methods(scenario)

  TrainConfig original_train;    // original system
  TrainConfig surrogate_train;   // every surrogate candidate
  AlignmentConfig alignment;
  ClassifierConfig classifier;   // baselines; classifier.mlp also drives the adaptive head
  int adaptive_hidden = 0;       // adaptive head width; 0 means 2 * embedding dim

  double robustness_fraction = 0.0;  // share of each observed list replaced; 0 disables
  std::string dataset_name = "dataset";
  std::string cache_dir;             // empty: keep the original system in memory only

  void validate() const;
  std::vector<Method> effective_methods() const;
};

// Keys understood by apply_config; see README for their meaning.
const std::vector<std::string>& scenario_config_keys();
void apply_config(const Config& config, ScenarioConfig& cfg);

// Desk-scale training budgets (small dims, short schedules) for planted data.
ScenarioConfig desk_scale_config();

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per declared class
  std::vector<double> recall;
  std::vector<double> f1;
  // Truth contains one class only; macro-F1 still averages over every
  // declared class, so absent classes contribute 0.
  bool single_class_truth = false;
};

Metrics evaluate(std::span<const int> predictions, std::span<const int> truth, int num_classes);

// ---------------------------------------------------------------------------
// Robustness perturbation

struct PerturbationResult {
  RecListSet lists;
  std::size_t replaced = 0;
  std::size_t unchanged = 0;   // chosen positions without a same-category substitute
};

// For each list, floor(fraction * K) positions chosen uniformly are replaced by
// uniformly drawn items of the same category that are not already in the list.
PerturbationResult apply_robustness_strategy(const RecListSet& lists,
                                             const std::vector<ItemMeta>& item_meta,
                                             double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Original system

struct OriginalSystem {
  Split split;                                     // 8:1:1 interaction split
  RecommenderModel model;
  std::vector<std::vector<ItemIndex>> train_history;
  RecListSet lists;                                // every user, train items excluded
};

// Stable digest of the interactions, used to key caches.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

// Trains (or loads from cfg.cache_dir, or reuses from memory) the original
// recommender for this dataset and seed.
const OriginalSystem& original_system(const Dataset& dataset, const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Scenarios

struct MethodReport {
  Method method = Method::MLP;
  Metrics metrics;
  double runtime_s = 0.0;
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<MethodReport> methods;
  std::size_t train_users = 0;
  std::size_t eval_users = 0;
  std::optional<SurrogateReport> surrogate;   // scenarios 3 and 4
  std::optional<double> alignment_res;        // holdout res, scenarios 3 and 4
  bool cooccurrence_fallback = false;         // alignment used list co-occurrence targets
  std::size_t perturbation_unchanged = 0;
  std::string notes;

  const MethodReport& method(Method m) const;
};

// Runs every configured method for one scenario, sharing the upstream work.
ScenarioReport run_scenario(const Dataset& dataset, const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepOptions {
  std::vector<double> alphas = {0.5};
  std::vector<double> betas = {0.5};
  std::vector<int> scenarios = {1};
  int num_seeds = 3;            // seeds master, master + 1, ...
  int workers = 1;
  bool record_runtime = true;   // false writes 0 so CSVs are byte-comparable
  std::string cell_dir;         // finished cells persisted here; reused on resume
};

struct ResultRow {
  std::string dataset;
  int scenario = 1;
  std::string method;
  std::string attribute;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double runtime_s = 0.0;
  bool failed = false;
  std::string error;
};

// One row per (scenario, method, alpha, beta, seed), sorted in that key order.
// Failed cells produce rows flagged `failed`.
std::vector<ResultRow> sweep(const Dataset& dataset, const ScenarioConfig& base,
                             const SweepOptions& options);

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);

// Mean over seeds per (dataset, scenario, method, attribute, alpha, beta);
// failed rows are left out of the means.
struct AggregateRow {
  std::string dataset;
  int scenario = 1;
  std::string method;
  std::string attribute;
  double alpha = 0.0;
  double beta = 0.0;
  int seeds = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double runtime_s = 0.0;
};
std::vector<AggregateRow> aggregate_results(const std::vector<ResultRow>& rows);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate_csv(const std::string& path);

// Aligned text table: one line per (dataset, scenario, method, attribute, alpha)
// with one accuracy column per beta.
std::string render_table(const std::vector<AggregateRow>& rows);

}  // namespace rapi
