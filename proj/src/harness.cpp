#include "rapi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rapi/ingest.hpp"
#include "text.hpp"

namespace rapi {

namespace fs = std::filesystem;

std::string to_string(Method method) {
  switch (method) {
    case Method::DT: return "DT";
    case Method::KNN: return "KNN";
    case Method::MLP: return "MLP";
    case Method::RAPI: return "RAPI";
    case Method::Sum: return "Sum";
    case Method::Static: return "Static";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "dt") return Method::DT;
  if (n == "knn") return Method::KNN;
  if (n == "mlp" || n == "dnn") return Method::MLP;
  if (n == "rapi" || n == "dynamic") return Method::RAPI;
  if (n == "sum") return Method::Sum;
  if (n == "static") return Method::Static;
  throw Error("unknown method '" + name + "' (expected DT, KNN, MLP, RAPI, Sum or Static)");
}

std::vector<Method> default_methods(int scenario) {
  if (scenario <= 2) return {Method::DT, Method::KNN, Method::MLP};
  return {Method::RAPI, Method::Sum, Method::Static};
}

namespace {

bool is_adaptive(Method m) { return m == Method::RAPI || m == Method::Sum || m == Method::Static; }

AggregationMode mode_of(Method m) {
  if (m == Method::Sum) return AggregationMode::Sum;
  if (m == Method::Static) return AggregationMode::Static;
  return AggregationMode::Dynamic;
}

}  // namespace

std::vector<Method> ScenarioConfig::effective_methods() const {
  return methods.empty() ? default_methods(scenario) : methods;
}

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 4) throw Error("scenario must be 1, 2, 3 or 4");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("beta must lie in [0, 1]");
  if (scenario == 4 && alpha <= 0.0) {
    throw Error("scenario 4 needs interaction providers (alpha > 0)");
  }
  if (k == 0) throw Error("K must be positive");
  if (k2 < k) throw Error("K2 (" + std::to_string(k2) + ") must be at least K (" + std::to_string(k) + ")");
  if (scenario == 4 && candidate_kinds.empty()) throw Error("scenario 4 needs at least one candidate kind");
  if (!(robustness_fraction >= 0.0 && robustness_fraction <= 1.0)) {
    throw Error("robustness fraction must lie in [0, 1]");
  }
  if (embedding_source.kind == EmbeddingSource::Kind::File && embedding_source.path.empty()) {
    throw Error("embedding source 'file' needs a path");
  }
  if (dataset_name.find_first_of(",\"\n/") != std::string::npos ||
      attribute.find_first_of(",\"\n") != std::string::npos) {
    throw Error("dataset and attribute names must not contain ',', '\"', '/' or newlines");
  }
  for (Method m : effective_methods()) {
    if (scenario == 1 && is_adaptive(m)) {
      throw Error("method " + to_string(m) + " needs item embeddings, which scenario 1 lacks");
    }
  }
  original_train.validate();
  surrogate_train.validate();
}

// ---------------------------------------------------------------------------
// Config keys

const std::vector<std::string>& scenario_config_keys() {
  static const std::vector<std::string> keys = {
      "dataset", "scenario", "attribute", "alpha", "beta", "k", "k2", "original_kind",
      "candidate_kinds", "methods", "embedding", "embedding_dim", "embedding_seed", "seed",
      "robustness", "cache",
      "rec.dim", "rec.lr", "rec.batch", "rec.max_epochs", "rec.patience", "rec.eval_every",
      "rec.layers", "rec.l2", "rec.optimizer",
      "align.kind", "align.lr", "align.max_epochs", "align.holdout",
      "cls.tree_depth", "cls.knn_k", "cls.hidden", "cls.lr", "cls.batch", "cls.max_epochs",
      "cls.patience", "cls.optimizer", "adaptive.hidden",
      "alphas", "betas", "scenarios", "seeds", "workers", "timing"};
  return keys;
}

namespace {

void apply_train(const Config& c, TrainConfig& t) {
  t.dim = c.get_int("rec.dim", t.dim);
  t.learning_rate = c.get_double("rec.lr", t.learning_rate);
  t.batch_size = static_cast<int>(c.get_int("rec.batch", t.batch_size));
  t.max_epochs = static_cast<int>(c.get_int("rec.max_epochs", t.max_epochs));
  t.patience = static_cast<int>(c.get_int("rec.patience", t.patience));
  t.eval_every = static_cast<int>(c.get_int("rec.eval_every", t.eval_every));
  t.layers = static_cast<int>(c.get_int("rec.layers", t.layers));
  t.l2 = c.get_double("rec.l2", t.l2);
  if (c.has("rec.optimizer")) t.optimizer = parse_optimizer(c.get_string("rec.optimizer", ""));
}

}  // namespace

void apply_config(const Config& c, ScenarioConfig& cfg) {
  cfg.dataset_name = c.get_string("dataset", cfg.dataset_name);
  cfg.scenario = static_cast<int>(c.get_int("scenario", cfg.scenario));
  cfg.attribute = c.get_string("attribute", cfg.attribute);
  cfg.alpha = c.get_double("alpha", cfg.alpha);
  cfg.beta = c.get_double("beta", cfg.beta);
  cfg.k = static_cast<std::size_t>(c.get_int("k", static_cast<long long>(cfg.k)));
  cfg.k2 = static_cast<std::size_t>(c.get_int("k2", static_cast<long long>(cfg.k2)));
  if (c.has("original_kind")) cfg.original_kind = parse_model_kind(c.get_string("original_kind", ""));
  if (c.has("candidate_kinds")) {
    cfg.candidate_kinds.clear();
    for (const auto& s : c.get_list("candidate_kinds", {})) cfg.candidate_kinds.push_back(parse_model_kind(s));
  }
  if (c.has("methods")) {
    cfg.methods.clear();
    for (const auto& s : c.get_list("methods", {})) cfg.methods.push_back(parse_method(s));
  }
  if (c.has("embedding")) {
    const std::string e = c.get_string("embedding", "hash");
    if (e == "hash") {
      cfg.embedding_source.kind = EmbeddingSource::Kind::Hash;
    } else {
      cfg.embedding_source.kind = EmbeddingSource::Kind::File;
      cfg.embedding_source.path = e;
    }
  }
  cfg.embedding_source.dim = c.get_int("embedding_dim", cfg.embedding_source.dim);
  cfg.embedding_source.seed = c.get_u64("embedding_seed", cfg.embedding_source.seed);
  cfg.seeds.master_seed = c.get_u64("seed", cfg.seeds.master_seed);
  cfg.robustness_fraction = c.get_double("robustness", cfg.robustness_fraction);
  cfg.cache_dir = c.get_string("cache", cfg.cache_dir);
  apply_train(c, cfg.original_train);
  apply_train(c, cfg.surrogate_train);
  if (c.has("align.kind")) cfg.alignment.kind = parse_alignment_kind(c.get_string("align.kind", ""));
  cfg.alignment.learning_rate = c.get_double("align.lr", cfg.alignment.learning_rate);
  cfg.alignment.max_epochs = static_cast<int>(c.get_int("align.max_epochs", cfg.alignment.max_epochs));
  cfg.alignment.holdout_fraction = c.get_double("align.holdout", cfg.alignment.holdout_fraction);
  cfg.classifier.tree_max_depth = static_cast<int>(c.get_int("cls.tree_depth", cfg.classifier.tree_max_depth));
  cfg.classifier.knn_k = static_cast<int>(c.get_int("cls.knn_k", cfg.classifier.knn_k));
  auto& mlp = cfg.classifier.mlp;
  if (c.has("cls.hidden")) {
    mlp.hidden.clear();
    for (const auto& s : c.get_list("cls.hidden", {})) {
      auto v = detail::parse_number<int>(s);
      if (!v || *v <= 0) throw Error("config key 'cls.hidden': expected positive widths, got '" + s + "'");
      mlp.hidden.push_back(*v);
    }
  }
  mlp.learning_rate = c.get_double("cls.lr", mlp.learning_rate);
  mlp.batch_size = static_cast<int>(c.get_int("cls.batch", mlp.batch_size));
  mlp.max_epochs = static_cast<int>(c.get_int("cls.max_epochs", mlp.max_epochs));
  mlp.patience = static_cast<int>(c.get_int("cls.patience", mlp.patience));
  if (c.has("cls.optimizer")) mlp.optimizer = parse_optimizer(c.get_string("cls.optimizer", ""));
  cfg.adaptive_hidden = static_cast<int>(c.get_int("adaptive.hidden", cfg.adaptive_hidden));
}

ScenarioConfig desk_scale_config() {
  ScenarioConfig cfg;
  TrainConfig t;
  t.dim = 32;
  t.learning_rate = 0.01;
  t.batch_size = 512;
  t.max_epochs = 60;
  t.patience = 3;
  t.eval_every = 5;
  t.layers = 2;
  cfg.original_train = t;
  cfg.surrogate_train = t;
  cfg.alignment.max_epochs = 1500;
  cfg.alignment.learning_rate = 0.01;
  cfg.embedding_source.dim = 64;
  cfg.classifier.mlp.hidden = {64};
  cfg.classifier.mlp.optimizer = OptimizerKind::Adam;
  cfg.classifier.mlp.learning_rate = 0.005;
  cfg.classifier.mlp.batch_size = 32;
  cfg.classifier.mlp.max_epochs = 100;
  cfg.classifier.mlp.patience = 15;
  return cfg;
}

// ---------------------------------------------------------------------------
// Metrics

Metrics evaluate(std::span<const int> predictions, std::span<const int> truth, int num_classes) {
  if (predictions.size() != truth.size()) {
    throw Error("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(truth.size()) + " users");
  }
  if (truth.empty()) throw Error("evaluate: no users to evaluate");
  if (num_classes < 1) throw Error("evaluate: empty label set");
  const auto nc = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(nc, 0), pred_count(nc, 0), true_count(nc, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predictions[i], t = truth[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes) {
      throw Error("evaluate: label outside the declared set");
    }
    pred_count[p] += 1;
    true_count[t] += 1;
    if (p == t) {
      tp[t] += 1;
      ++correct;
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.precision.resize(nc);
  m.recall.resize(nc);
  m.f1.resize(nc);
  int present = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    m.precision[c] = pred_count[c] > 0 ? tp[c] / pred_count[c] : 0.0;
    m.recall[c] = true_count[c] > 0 ? tp[c] / true_count[c] : 0.0;
    const double s = m.precision[c] + m.recall[c];
    m.f1[c] = s > 0 ? 2.0 * m.precision[c] * m.recall[c] / s : 0.0;
    m.macro_f1 += m.f1[c];
    if (true_count[c] > 0) ++present;
  }
  m.macro_f1 /= static_cast<double>(nc);
  m.single_class_truth = present == 1;
  return m;
}

// ---------------------------------------------------------------------------
// Robustness perturbation

PerturbationResult apply_robustness_strategy(const RecListSet& lists,
                                             const std::vector<ItemMeta>& item_meta,
                                             double fraction, std::uint64_t seed) {
  PerturbationResult out;
  out.lists = lists;
  const std::size_t n_replace = static_cast<std::size_t>(
      std::floor(std::clamp(fraction, 0.0, 1.0) * static_cast<double>(lists.k) + 1e-9));
  if (n_replace == 0) return out;
  std::map<std::string, std::vector<ItemIndex>> by_category;
  for (std::size_t i = 0; i < item_meta.size(); ++i) {
    by_category[item_meta[i].category].push_back(static_cast<ItemIndex>(i));
  }
  Rng rng(seed);
  for (auto& [user, list] : out.lists.lists) {
    std::vector<std::size_t> positions(list.size());
    std::iota(positions.begin(), positions.end(), 0);
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(std::min(n_replace, positions.size()));
    std::sort(positions.begin(), positions.end());
    std::set<ItemIndex> taken(list.begin(), list.end());
    for (std::size_t p : positions) {
      const ItemIndex old = list[p];
      std::vector<ItemIndex> pool;
      if (static_cast<std::size_t>(old) < item_meta.size()) {
        for (ItemIndex cand : by_category[item_meta[old].category]) {
          if (!taken.count(cand)) pool.push_back(cand);
        }
      }
      if (pool.empty()) {
        ++out.unchanged;
        continue;
      }
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      list[p] = pool[pick(rng)];
      taken.insert(list[p]);
      ++out.replaced;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Original system

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
  std::ostringstream s;
  s << dataset.num_users() << ' ' << dataset.num_items() << '\n';
  for (const auto& x : dataset.interactions()) {
    s << x.user << ' ' << x.item << ' ' << detail::format_double(x.weight) << '\n';
  }
  return fnv1a64(s.str());
}

namespace {

std::string train_config_digest(const TrainConfig& t) {
  std::ostringstream s;
  s << t.dim << ' ' << detail::format_double(t.learning_rate) << ' ' << t.batch_size << ' '
    << t.max_epochs << ' ' << t.patience << ' ' << t.eval_every << ' ' << t.eval_k << ' '
    << t.negatives_per_positive << ' ' << t.layers << ' ' << detail::format_double(t.l2) << ' '
    << detail::format_double(t.init_std) << ' ' << to_string(t.optimizer) << ' ' << t.seed;
  return s.str();
}

std::mutex original_mutex;
std::map<std::string, std::unique_ptr<OriginalSystem>> original_cache;

}  // namespace

const OriginalSystem& original_system(const Dataset& dataset, const ScenarioConfig& cfg) {
  TrainConfig train = cfg.original_train;
  train.seed = cfg.seeds.model_init();
  std::ostringstream key_stream;
  key_stream << cfg.dataset_name << '-' << std::hex << dataset_fingerprint(dataset) << '-'
             << to_string(cfg.original_kind) << '-' << std::dec << cfg.seeds.master_seed << '-'
             << std::hex << fnv1a64(train_config_digest(train));
  const std::string key = key_stream.str();
  const std::string memo_key = key + "-k" + std::to_string(cfg.k);

  std::lock_guard<std::mutex> lock(original_mutex);
  if (auto it = original_cache.find(memo_key); it != original_cache.end()) return *it->second;

  auto sys = std::make_unique<OriginalSystem>();
  sys->split = split_dataset(dataset, {0.8, 0.1, 0.1}, cfg.seeds.split());
  sys->train_history = user_histories(dataset, sys->split.train);
  const fs::path dir = cfg.cache_dir.empty() ? fs::path() : fs::path(cfg.cache_dir) / "original" / key;
  if (!dir.empty() && fs::exists(dir / "manifest.txt")) {
    sys->model = RecommenderModel::load(dir.string());
  } else {
    sys->model = train_recommender(dataset, sys->split, train, cfg.original_kind);
    if (!dir.empty()) {
      fs::create_directories(dir);
      sys->model.save(dir.string(), "dataset " + cfg.dataset_name + "\n");
    }
  }
  std::vector<UserIndex> users(dataset.num_users());
  std::iota(users.begin(), users.end(), 0);
  sys->lists = recommend_all(sys->model, users, cfg.k, sys->train_history);
  auto [it, inserted] = original_cache.emplace(memo_key, std::move(sys));
  return *it->second;
}

// ---------------------------------------------------------------------------
// Scenarios

const MethodReport& ScenarioReport::method(Method m) const {
  for (const auto& r : methods) {
    if (r.method == m) return r;
  }
  throw Error("scenario report has no method " + to_string(m));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

EmbeddingTable content_embeddings(const Dataset& dataset, const EmbeddingSource& src) {
  if (src.kind == EmbeddingSource::Kind::Hash) {
    std::vector<ItemMeta> meta = dataset.item_meta();
    meta.resize(dataset.num_items());
    return hash_embed_titles(meta, src.dim, src.seed);
  }
  EmbeddingTable table = load_embedding_table(src.path, [&](const std::string& id) {
    auto i = dataset.find_item(id);
    return i ? std::optional<std::int64_t>(*i) : std::nullopt;
  });
  for (std::size_t i = 0; i < dataset.num_items(); ++i) {
    if (!table.contains(static_cast<std::int64_t>(i))) {
      throw Error(src.path + ": no content embedding for item " + dataset.item_ids()[i]);
    }
  }
  return table;
}

std::vector<int> argmax_rows(const Matrix& p) {
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index arg;
    p.row(r).maxCoeff(&arg);
    out[r] = static_cast<int>(arg);
  }
  return out;
}

}  // namespace

ScenarioReport run_scenario(const Dataset& dataset, const ScenarioConfig& cfg) {
  cfg.validate();
  const AttributeColumn& column = dataset.attribute(cfg.attribute);
  ScenarioReport report;
  report.config = cfg;

  const OriginalSystem& original = original_system(dataset, cfg);
  RecListSet observed = original.lists;
  if (cfg.robustness_fraction > 0.0) {
    if (dataset.item_meta().size() != dataset.num_items()) {
      throw Error("robustness perturbation needs item categories");
    }
    auto perturbed = apply_robustness_strategy(observed, dataset.item_meta(),
                                               cfg.robustness_fraction, cfg.seeds.perturbation());
    observed = std::move(perturbed.lists);
    report.perturbation_unchanged = perturbed.unchanged;
  }

  const auto t_upstream = Clock::now();
  const ProviderPartition partition =
      partition_providers(dataset, cfg.alpha, cfg.beta, cfg.seeds.partition());
  std::vector<UserIndex> train_users, eval_users;
  std::vector<int> train_labels, eval_labels;
  for (UserIndex u : partition.attribute_providers) {
    if (column.codes[u] < 0) continue;
    train_users.push_back(u);
    train_labels.push_back(column.codes[u]);
  }
  for (UserIndex u : partition.target_users) {
    if (column.codes[u] < 0) continue;
    eval_users.push_back(u);
    eval_labels.push_back(column.codes[u]);
  }
  {
    std::vector<UserIndex> overlap;
    std::set_intersection(train_users.begin(), train_users.end(), eval_users.begin(),
                          eval_users.end(), std::back_inserter(overlap));
    if (!overlap.empty()) throw Error("internal: an attribute provider is in the evaluation set");
  }
  if (train_users.empty()) throw Error("no attribute providers with known labels (beta too small)");
  if (eval_users.empty()) throw Error("no target users with known labels (beta too large)");
  report.train_users = train_users.size();
  report.eval_users = eval_users.size();

  // Item embeddings and the lists they are aggregated over.
  EmbeddingTable table;
  RecListSet used = observed;
  if (cfg.scenario == 2) {
    table = original.model.export_item_embeddings();
  } else if (cfg.scenario >= 3) {
    const EmbeddingTable content = content_embeddings(dataset, cfg.embedding_source);
    AlignmentConfig acfg = cfg.alignment;
    acfg.seed = cfg.seeds.alignment();
    UnifiedEmbedding unified;
    std::vector<std::vector<ItemIndex>> histories(dataset.num_users());
    if (cfg.scenario == 3) {
      SurrogateReport skipped;
      skipped.k = cfg.k;
      skipped.skipped = true;
      report.surrogate = skipped;
      report.cooccurrence_fallback = true;
      report.notes = "no interaction providers: alignment trained on list co-occurrence targets";
      const EmbeddingTable targets = cooccurrence_targets(observed, content);
      const AlignmentResult aligned =
          train_alignment(content.select(targets.ids()), targets, acfg);
      report.alignment_res = aligned.holdout_res;
      unified = unify_embeddings(apply_alignment(aligned.model, content), EmbeddingTable());
    } else {
      const Split provider_split = restrict_split(dataset, original.split, partition.interaction_providers);
      std::vector<CandidateSpec> candidates;
      for (ModelKind kind : cfg.candidate_kinds) {
        CandidateSpec spec{kind, cfg.surrogate_train};
        spec.cfg.seed = cfg.seeds.derive("surrogate");
        candidates.push_back(spec);
      }
      SurrogateOutcome outcome = confirm_surrogate(dataset, provider_split,
                                                   partition.interaction_providers, candidates, observed);
      report.surrogate = outcome.report;
      const ItemPartition items = derive_item_partition(dataset, partition);
      std::vector<std::int64_t> related(items.related.begin(), items.related.end());
      std::vector<std::int64_t> unrelated(items.unrelated.begin(), items.unrelated.end());
      const EmbeddingTable surrogate = outcome.model->export_item_embeddings().select(related);
      EmbeddingTable aligned;
      if (!unrelated.empty()) {
        const AlignmentResult fit = train_alignment(content.select(related), surrogate, acfg);
        report.alignment_res = fit.holdout_res;
        aligned = apply_alignment(fit.model, content.select(unrelated));
      } else {
        report.notes = "every item is related: no alignment needed";
      }
      unified = unify_embeddings(aligned, surrogate);
      std::set<UserIndex> providers(partition.interaction_providers.begin(),
                                    partition.interaction_providers.end());
      for (const auto& x : dataset.interactions()) {
        if (providers.count(x.user)) histories[x.user].push_back(x.item);
      }
      for (auto& h : histories) std::sort(h.begin(), h.end());
    }
    used = augment_all(observed, unified, cfg.k2, &histories).as_reclists();
    table = std::move(unified.table);
  }
  const double upstream_seconds = seconds_since(t_upstream);

  // Baseline features are computed once and shared by DT, KNN and MLP.
  std::optional<Matrix> x_train, x_eval;
  auto baseline_features = [&](const std::vector<UserIndex>& users) {
    std::vector<FeatureVector> rows;
    rows.reserve(users.size());
    for (UserIndex u : users) {
      if (cfg.scenario == 1) {
        rows.push_back(featurize_scenario1(used.at(u), dataset.num_items()));
      } else {
        rows.push_back({FeatureVector::Schema::Embedding, aggregate(used.at(u), table, AggregationMode::Sum)});
      }
    }
    return stack_features(rows);
  };

  const int nc = column.num_classes();
  for (Method method : cfg.effective_methods()) {
    const auto t0 = Clock::now();
    std::vector<int> predicted;
    if (!is_adaptive(method)) {
      if (!x_train) {
        x_train = baseline_features(train_users);
        x_eval = baseline_features(eval_users);
      }
      ClassifierConfig ccfg = cfg.classifier;
      ccfg.mlp.seed = cfg.seeds.classifier();
      const ClassifierKind kind = method == Method::DT    ? ClassifierKind::DecisionTree
                                  : method == Method::KNN ? ClassifierKind::KNN
                                                          : ClassifierKind::MLP;
      auto model = train_classifier(*x_train, train_labels, nc, kind, ccfg);
      predicted = model->predict(*x_eval);
    } else {
      AdaptiveConfig acfg;
      acfg.mode = mode_of(method);
      acfg.head = cfg.classifier.mlp;
      acfg.head.seed = cfg.seeds.classifier();
      acfg.head.hidden = {cfg.adaptive_hidden > 0 ? cfg.adaptive_hidden : static_cast<int>(2 * table.dim())};
      AdaptiveClassifier model = train_adaptive(used, train_users, table, train_labels, nc, acfg);
      std::vector<Matrix> lists;
      lists.reserve(eval_users.size());
      for (UserIndex u : eval_users) lists.push_back(gather_rows(table, used.at(u)));
      predicted = argmax_rows(model.predict_proba(lists));
    }
    MethodReport r;
    r.method = method;
    r.metrics = evaluate(predicted, eval_labels, nc);
    r.runtime_s = upstream_seconds + seconds_since(t0);
    report.methods.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

const char* kResultHeader = "dataset,scenario,method,attribute,alpha,beta,seed,accuracy,macro_f1,runtime_s";
const char* kAggregateHeader =
    "dataset,scenario,method,attribute,alpha,beta,seeds,accuracy,macro_f1,runtime_s";

int method_rank(const std::string& name) {
  try {
    return static_cast<int>(parse_method(name));
  } catch (const Error&) {
    return 100;
  }
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::tie(a.dataset, a.scenario, a.attribute, a.alpha, a.beta, a.seed) <
                 std::tie(b.dataset, b.scenario, b.attribute, b.alpha, b.beta, b.seed)
             ? true
         : std::tie(b.dataset, b.scenario, b.attribute, b.alpha, b.beta, b.seed) <
                 std::tie(a.dataset, a.scenario, a.attribute, a.alpha, a.beta, a.seed)
             ? false
             : method_rank(a.method) < method_rank(b.method);
}

std::string fmt_or_na(double v, bool na) { return na ? "NA" : detail::format_double(v); }

struct Cell {
  ScenarioConfig cfg;
  std::vector<Method> methods;
  std::string key;
};

double round_ms(double s) { return std::round(s * 1000.0) / 1000.0; }

}  // namespace

std::vector<ResultRow> sweep(const Dataset& dataset, const ScenarioConfig& base,
                             const SweepOptions& options) {
  if (options.num_seeds < 1) throw Error("sweep needs at least one seed");
  std::vector<Cell> cells;
  for (int scenario : options.scenarios) {
    for (double alpha : options.alphas) {
      for (double beta : options.betas) {
        for (int s = 0; s < options.num_seeds; ++s) {
          Cell c;
          c.cfg = base;
          c.cfg.scenario = scenario;
          c.cfg.alpha = alpha;
          c.cfg.beta = beta;
          c.cfg.seeds.master_seed = base.seeds.master_seed + static_cast<std::uint64_t>(s);
          if (base.methods.empty()) {
            c.methods = default_methods(scenario);
          } else {
            for (Method m : base.methods) {
              if (!(scenario == 1 && is_adaptive(m))) c.methods.push_back(m);
            }
          }
          c.cfg.methods = c.methods;
          c.key = "s" + std::to_string(scenario) + "_a" + detail::format_double(alpha) + "_b" +
                  detail::format_double(beta) + "_seed" + std::to_string(c.cfg.seeds.master_seed);
          cells.push_back(std::move(c));
        }
      }
    }
  }

  fs::path cell_dir;
  if (!options.cell_dir.empty()) {
    cell_dir = fs::path(options.cell_dir) / (base.dataset_name + "-" + base.attribute);
    fs::create_directories(cell_dir);
  }

  // Train the original systems up front so concurrent cells only read them.
  {
    std::set<std::uint64_t> seeds;
    for (const auto& c : cells) {
      if (!seeds.insert(c.cfg.seeds.master_seed).second) continue;
      try {
        original_system(dataset, c.cfg);
      } catch (const Error&) {
        // Surfaces again as a failed cell.
      }
    }
  }

  std::vector<std::vector<ResultRow>> results(cells.size());
  auto run_cell = [&](std::size_t i) {
    const Cell& c = cells[i];
    const fs::path file = cell_dir.empty() ? fs::path() : cell_dir / (c.key + ".csv");
    if (!file.empty() && fs::exists(file)) {
      results[i] = read_results_csv(file.string());
      return;
    }
    auto row_for = [&](Method m) {
      ResultRow r;
      r.dataset = base.dataset_name;
      r.scenario = c.cfg.scenario;
      r.method = to_string(m);
      r.attribute = base.attribute;
      r.alpha = c.cfg.alpha;
      r.beta = c.cfg.beta;
      r.seed = c.cfg.seeds.master_seed;
      return r;
    };
    std::vector<ResultRow> rows;
    try {
      const ScenarioReport rep = run_scenario(dataset, c.cfg);
      for (const auto& m : rep.methods) {
        ResultRow r = row_for(m.method);
        r.accuracy = m.metrics.accuracy;
        r.macro_f1 = m.metrics.macro_f1;
        r.runtime_s = options.record_runtime ? round_ms(m.runtime_s) : 0.0;
        rows.push_back(r);
      }
    } catch (const std::exception& e) {
      rows.clear();
      for (Method m : c.methods) {
        ResultRow r = row_for(m);
        r.failed = true;
        r.error = e.what();
        rows.push_back(r);
      }
    }
    const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.failed; });
    if (!file.empty() && !any_failed) {
      const fs::path tmp = file.string() + ".tmp";
      write_results_csv(tmp.string(), rows);
      fs::rename(tmp, file);
    }
    results[i] = std::move(rows);
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<ResultRow> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  std::stable_sort(out.begin(), out.end(), row_less);
  return out;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << kResultHeader << '\n';
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.scenario << ',' << r.method << ',' << r.attribute << ','
        << detail::format_double(r.alpha) << ',' << detail::format_double(r.beta) << ',' << r.seed
        << ',' << fmt_or_na(r.accuracy, r.failed) << ',' << fmt_or_na(r.macro_f1, r.failed) << ','
        << fmt_or_na(r.runtime_s, r.failed) << '\n';
  }
  if (!out) throw Error("error while writing " + path);
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, const char* header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != header) {
    throw Error(path + ":1: unexpected header (expected '" + std::string(header) + "')");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields;
    for (auto f : detail::split_on(detail::trim(line), ",")) fields.emplace_back(f);
    if (fields.size() != 10) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected 10 fields, got " +
                  std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

template <typename T>
T field(const std::string& s, const std::string& path) {
  auto v = detail::parse_number<T>(s);
  if (!v) throw Error(path + ": bad numeric field '" + s + "'");
  return *v;
}

}  // namespace

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::vector<ResultRow> out;
  for (const auto& f : read_csv_rows(path, kResultHeader)) {
    ResultRow r;
    r.dataset = f[0];
    r.scenario = field<int>(f[1], path);
    r.method = f[2];
    r.attribute = f[3];
    r.alpha = field<double>(f[4], path);
    r.beta = field<double>(f[5], path);
    r.seed = field<std::uint64_t>(f[6], path);
    r.failed = f[7] == "NA";
    if (!r.failed) {
      r.accuracy = field<double>(f[7], path);
      r.macro_f1 = field<double>(f[8], path);
      r.runtime_s = field<double>(f[9], path);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AggregateRow> aggregate_results(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(), row_less);
  std::vector<AggregateRow> out;
  std::map<std::tuple<std::string, int, std::string, std::string, double, double>, std::size_t> index;
  std::vector<std::tuple<std::string, int, int, std::string, double, double>> order;
  for (const auto& r : sorted) {
    auto key = std::make_tuple(r.dataset, r.scenario, r.method, r.attribute, r.alpha, r.beta);
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      AggregateRow a;
      a.dataset = r.dataset;
      a.scenario = r.scenario;
      a.method = r.method;
      a.attribute = r.attribute;
      a.alpha = r.alpha;
      a.beta = r.beta;
      out.push_back(a);
    }
    if (r.failed) continue;
    AggregateRow& a = out[it->second];
    a.seeds += 1;
    a.accuracy += r.accuracy;
    a.macro_f1 += r.macro_f1;
    a.runtime_s += r.runtime_s;
  }
  for (auto& a : out) {
    if (a.seeds == 0) continue;
    a.accuracy /= a.seeds;
    a.macro_f1 /= a.seeds;
    a.runtime_s = round_ms(a.runtime_s / a.seeds);
  }
  std::stable_sort(out.begin(), out.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return std::make_tuple(a.dataset, a.scenario, a.attribute, method_rank(a.method), a.alpha, a.beta) <
           std::make_tuple(b.dataset, b.scenario, b.attribute, method_rank(b.method), b.alpha, b.beta);
  });
  return out;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    const bool na = a.seeds == 0;
    out << a.dataset << ',' << a.scenario << ',' << a.method << ',' << a.attribute << ','
        << detail::format_double(a.alpha) << ',' << detail::format_double(a.beta) << ',' << a.seeds
        << ',' << fmt_or_na(a.accuracy, na) << ',' << fmt_or_na(a.macro_f1, na) << ','
        << fmt_or_na(a.runtime_s, na) << '\n';
  }
  if (!out) throw Error("error while writing " + path);
}

std::vector<AggregateRow> read_aggregate_csv(const std::string& path) {
  std::vector<AggregateRow> out;
  for (const auto& f : read_csv_rows(path, kAggregateHeader)) {
    AggregateRow a;
    a.dataset = f[0];
    a.scenario = field<int>(f[1], path);
    a.method = f[2];
    a.attribute = f[3];
    a.alpha = field<double>(f[4], path);
    a.beta = field<double>(f[5], path);
    a.seeds = field<int>(f[6], path);
    if (f[7] != "NA") {
      a.accuracy = field<double>(f[7], path);
      a.macro_f1 = field<double>(f[8], path);
      a.runtime_s = field<double>(f[9], path);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string render_table(const std::vector<AggregateRow>& rows) {
  std::set<double> betas;
  for (const auto& a : rows) betas.insert(a.beta);
  using Key = std::tuple<std::string, int, std::string, int, std::string, double>;
  std::map<Key, std::map<double, const AggregateRow*>> grid;
  for (const auto& a : rows) {
    grid[{a.dataset, a.scenario, a.attribute, method_rank(a.method), a.method, a.alpha}][a.beta] = &a;
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"dataset", "scenario", "attribute", "method", "alpha"};
  for (double b : betas) header.push_back("acc(beta=" + detail::format_double(b) + ")");
  cells.push_back(header);
  for (const auto& [key, by_beta] : grid) {
    std::vector<std::string> line = {std::get<0>(key), std::to_string(std::get<1>(key)), std::get<2>(key),
                                     std::get<4>(key), detail::format_double(std::get<5>(key))};
    for (double b : betas) {
      auto it = by_beta.find(b);
      if (it == by_beta.end() || it->second->seeds == 0) {
        line.push_back("-");
      } else {
        std::ostringstream v;
        v << std::fixed << std::setprecision(4) << it->second->accuracy;
        line.push_back(v.str());
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out << "  ";
      if (c < 5) {
        out << std::left << std::setw(static_cast<int>(width[c])) << line[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << line[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace rapi
