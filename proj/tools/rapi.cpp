// rapi: staged command-line pipeline. Each subcommand reads and writes named
// artifacts under the cache directory.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <list>
#include <sstream>

#include "rapi/harness.hpp"
#include "rapi/ingest.hpp"

namespace fs = std::filesystem;
using namespace rapi;

namespace {

std::vector<std::string> known_keys() {
  std::vector<std::string> keys = scenario_config_keys();
  for (const char* k : {"profile", "format", "interactions", "attributes", "items", "filter_rare",
                        "synth.users", "synth.items", "synth.clusters", "synth.affinity",
                        "synth.per_user", "synth.noise", "out"}) {
    keys.emplace_back(k);
  }
  return keys;
}

struct Globals {
  std::string config_path;
  std::string cache = ".rapi-cache";
  std::string seed;
  std::string workers;
  std::vector<std::string> sets;
};

// Flag values that were given on the command line, keyed like the config file.
struct Overrides {
  struct Binding {
    std::string key;
    CLI::App* owner;
    CLI::Option* option;
    std::string* slot;
  };
  std::vector<Binding> bound;
  std::list<std::string> storage;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    std::string* slot = &storage.emplace_back();
    bound.push_back({key, app, app->add_option(flag, *slot, help), slot});
  }
};

Config resolve_config(const Globals& g, const Overrides& o) {
  Config cfg(known_keys());
  if (!g.config_path.empty()) cfg.merge(Config::load(g.config_path, known_keys()));
  if (!g.seed.empty()) cfg.set("seed", g.seed);
  if (!g.workers.empty()) cfg.set("workers", g.workers);
  for (const auto& s : g.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& b : o.bound) {
    if (b.owner->parsed() && b.option->count() > 0) cfg.set(b.key, *b.slot);
  }
  return cfg;
}

ScenarioConfig scenario_from(const Config& c, const Globals& g) {
  const std::string profile = c.get_string("profile", "desk");
  ScenarioConfig cfg;
  if (profile == "desk") {
    cfg = desk_scale_config();
  } else if (profile != "paper") {
    throw Error("unknown profile '" + profile + "' (expected desk or paper)");
  }
  cfg.cache_dir = g.cache;
  apply_config(c, cfg);
  return cfg;
}

fs::path dataset_dir(const Globals& g, const std::string& name) {
  return fs::path(g.cache) / "datasets" / name;
}

Dataset load_cached_dataset(const Globals& g, const std::string& name) {
  const fs::path dir = dataset_dir(g, name);
  if (!fs::exists(dir / "interactions.tsv")) {
    throw Error("dataset '" + name + "' not found in " + dir.string() +
                " (produce it with `rapi ingest` or `rapi synth`)");
  }
  return read_dataset(dir.string());
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

void print_summary(const std::string& name, const Dataset& ds) {
  std::cout << "dataset\tusers\titems\tinteractions\tdensity\tattributes\n";
  std::cout << name << '\t' << ds.num_users() << '\t' << ds.num_items() << '\t'
            << ds.num_interactions() << '\t' << std::setprecision(4) << ds.density() * 100.0 << "%\t";
  bool first = true;
  for (const auto& [attr, col] : ds.attributes()) {
    std::cout << (first ? "" : ",") << attr << '(' << col.num_classes() << ')';
    first = false;
  }
  std::cout << (first ? "-" : "") << '\n';
}

std::string file_digest(const std::vector<std::string>& paths, const std::string& extra) {
  std::ostringstream all;
  all << extra << '\n';
  for (const auto& p : paths) {
    if (p.empty()) {
      all << "-\n";
      continue;
    }
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p);
    all << p << '\n' << in.rdbuf() << '\n';
  }
  std::ostringstream hex;
  hex << std::hex << fnv1a64(all.str());
  return hex.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path run_dir(const Globals& g, const ScenarioConfig& cfg) {
  return fs::path(g.cache) / "runs" / cfg.dataset_name / ("seed" + std::to_string(cfg.seeds.master_seed));
}

fs::path alpha_dir(const Globals& g, const ScenarioConfig& cfg) {
  std::ostringstream a;
  a << "alpha" << cfg.alpha;
  return run_dir(g, cfg) / a.str();
}

void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw Error("missing artifact " + p.string() + " (run `rapi " + producer + "` first)");
  }
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Config& c, const Globals& g) {
  const std::string name = c.get_string("dataset", "dataset");
  const std::string inter = c.get_string("interactions", "");
  if (inter.empty()) throw Error("ingest needs --interactions");
  const std::string attrs = c.get_string("attributes", "");
  const std::string items = c.get_string("items", "");
  const std::string format = c.get_string("format", "tsv");
  const long long rare = c.get_int("filter_rare", 0);
  for (const auto& p : {inter, attrs, items}) {
    if (!p.empty() && !fs::exists(p)) throw Error("input file not found: " + p);
  }
  const fs::path dir = dataset_dir(g, name);
  const std::string digest =
      file_digest({inter, attrs, items}, format + " " + std::to_string(rare));
  if (fs::exists(dir / "source.digest") && fs::exists(dir / "interactions.tsv") &&
      read_text(dir / "source.digest") == digest) {
    std::cerr << "cache hit: " << dir.string() << " is up to date\n";
    print_summary(name, read_dataset(dir.string()));
    return 0;
  }
  const InputFormat fmt_in = InputFormat::parse(format);
  Dataset ds = parse_interactions(inter, fmt_in);
  AttributeRecords records;
  if (!attrs.empty()) records = parse_attributes(attrs, fmt_in);
  std::map<std::string, ItemMeta> meta;
  if (!items.empty()) meta = parse_item_meta(items, fmt_in);
  ds = assemble_dataset(ds, records, meta);
  if (rare > 0) ds = filter_rare_items(ds, static_cast<std::size_t>(rare));
  fs::create_directories(dir);
  write_dataset(dir.string(), ds);
  std::ofstream(dir / "source.digest") << digest;
  print_summary(name, ds);
  return 0;
}

int cmd_synth(const Config& c, const Globals& g) {
  SyntheticSpec spec;
  spec.n_users = static_cast<std::size_t>(c.get_int("synth.users", static_cast<long long>(spec.n_users)));
  spec.n_items = static_cast<std::size_t>(c.get_int("synth.items", static_cast<long long>(spec.n_items)));
  spec.n_clusters = static_cast<std::size_t>(c.get_int("synth.clusters", static_cast<long long>(spec.n_clusters)));
  spec.cluster_affinity = c.get_double("synth.affinity", spec.cluster_affinity);
  spec.interactions_per_user =
      static_cast<std::size_t>(c.get_int("synth.per_user", static_cast<long long>(spec.interactions_per_user)));
  spec.label_noise = c.get_double("synth.noise", spec.label_noise);
  spec.attribute_name = c.get_string("attribute", spec.attribute_name);
  const std::string name = c.get_string("dataset", "planted");
  SyntheticData syn = generate_synthetic(spec, c.get_u64("seed", 42));
  const fs::path dir = dataset_dir(g, name);
  fs::create_directories(dir);
  write_dataset(dir.string(), syn.dataset);
  fs::remove(dir / "source.digest");
  print_summary(name, syn.dataset);
  return 0;
}

int cmd_train_rec(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  const OriginalSystem& sys = original_system(ds, cfg);
  const fs::path dir = run_dir(g, cfg);
  fs::create_directories(dir);
  write_reclists((dir / "reclists.tsv").string(), sys.lists, ds);
  write_embedding_table((dir / "item_embeddings.emb").string(), sys.model.export_item_embeddings(),
                        [&](std::int64_t i) { return ds.item_ids()[static_cast<std::size_t>(i)]; });
  std::cout << "original " << to_string(cfg.original_kind) << ": "
            << "validation HR@" << cfg.original_train.eval_k << " "
            << fmt(validation_hit_rate(sys.model, ds, sys.split, cfg.original_train.eval_k)) << '\n'
            << "wrote " << (dir / "reclists.tsv").string() << '\n';
  return 0;
}

int cmd_confirm(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  const fs::path lists_path = run_dir(g, cfg) / "reclists.tsv";
  require(lists_path, "train-rec");
  const RecListSet original = read_reclists(lists_path.string(), ds);
  const ProviderPartition part = partition_providers(ds, cfg.alpha, cfg.beta, cfg.seeds.partition());
  const Split split = split_dataset(ds, {0.8, 0.1, 0.1}, cfg.seeds.split());
  const Split provider_split = restrict_split(ds, split, part.interaction_providers);
  std::vector<CandidateSpec> candidates;
  for (ModelKind k : cfg.candidate_kinds) {
    CandidateSpec spec{k, cfg.surrogate_train};
    spec.cfg.seed = cfg.seeds.derive("surrogate");
    candidates.push_back(spec);
  }
  SurrogateOutcome out = confirm_surrogate(ds, provider_split, part.interaction_providers, candidates, original);
  const fs::path dir = alpha_dir(g, cfg);
  fs::create_directories(dir);
  write_surrogate_report((dir / "surrogate_report.tsv").string(), out.report);
  if (out.model) out.model->save((dir / "surrogate").string());
  std::cout << read_text(dir / "surrogate_report.tsv");
  return 0;
}

int cmd_align(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  std::vector<ItemMeta> meta = ds.item_meta();
  meta.resize(ds.num_items());
  EmbeddingTable content;
  if (cfg.embedding_source.kind == EmbeddingSource::Kind::Hash) {
    content = hash_embed_titles(meta, cfg.embedding_source.dim, cfg.embedding_source.seed);
  } else {
    content = load_embedding_table(cfg.embedding_source.path, [&](const std::string& id) {
      auto i = ds.find_item(id);
      return i ? std::optional<std::int64_t>(*i) : std::nullopt;
    });
  }
  AlignmentConfig acfg = cfg.alignment;
  acfg.seed = cfg.seeds.alignment();
  const fs::path dir = alpha_dir(g, cfg);
  fs::create_directories(dir);
  UnifiedEmbedding unified;
  AlignmentResult fit;
  if (cfg.alpha <= 0.0) {
    const fs::path lists_path = run_dir(g, cfg) / "reclists.tsv";
    require(lists_path, "train-rec");
    const EmbeddingTable targets = cooccurrence_targets(read_reclists(lists_path.string(), ds), content);
    fit = train_alignment(content.select(targets.ids()), targets, acfg);
    unified = unify_embeddings(apply_alignment(fit.model, content), EmbeddingTable());
    std::cerr << "note: alpha = 0, alignment trained on list co-occurrence targets\n";
  } else {
    require(dir / "surrogate" / "manifest.txt", "confirm");
    const RecommenderModel surrogate_model = RecommenderModel::load((dir / "surrogate").string());
    const ProviderPartition part = partition_providers(ds, cfg.alpha, cfg.beta, cfg.seeds.partition());
    const ItemPartition items = derive_item_partition(ds, part);
    std::vector<std::int64_t> related(items.related.begin(), items.related.end());
    std::vector<std::int64_t> unrelated(items.unrelated.begin(), items.unrelated.end());
    const EmbeddingTable surrogate = surrogate_model.export_item_embeddings().select(related);
    fit = train_alignment(content.select(related), surrogate, acfg);
    unified = unify_embeddings(unrelated.empty() ? EmbeddingTable()
                                                 : apply_alignment(fit.model, content.select(unrelated)),
                               surrogate);
  }
  fit.model.save((dir / "alignment").string());
  write_embedding_table((dir / "unified.emb").string(), unified.table,
                        [&](std::int64_t i) { return ds.item_ids()[static_cast<std::size_t>(i)]; });
  std::ofstream prov(dir / "provenance.tsv");
  for (std::size_t r = 0; r < unified.table.size(); ++r) {
    prov << ds.item_ids()[static_cast<std::size_t>(unified.table.ids()[r])] << '\t'
         << (unified.provenance[r] == Provenance::Surrogate ? "surrogate" : "aligned") << '\n';
  }
  std::cout << "alignment " << to_string(acfg.kind) << ": train res " << fmt(fit.train_res)
            << ", holdout res " << fmt(fit.holdout_res) << " (constant baseline "
            << fmt(fit.baseline_res) << ")\n";
  return 0;
}

int cmd_augment(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  const fs::path lists_path = run_dir(g, cfg) / "reclists.tsv";
  require(lists_path, "train-rec");
  const fs::path dir = alpha_dir(g, cfg);
  require(dir / "unified.emb", "align");
  UnifiedEmbedding unified;
  unified.table = load_embedding_table((dir / "unified.emb").string(), [&](const std::string& id) {
    auto i = ds.find_item(id);
    return i ? std::optional<std::int64_t>(*i) : std::nullopt;
  });
  unified.provenance.assign(unified.table.size(), Provenance::Aligned);
  const ProviderPartition part = partition_providers(ds, cfg.alpha, cfg.beta, cfg.seeds.partition());
  std::vector<std::vector<ItemIndex>> histories(ds.num_users());
  std::vector<char> is_provider(ds.num_users(), 0);
  for (UserIndex u : part.interaction_providers) is_provider[u] = 1;
  for (const auto& x : ds.interactions()) {
    if (is_provider[x.user]) histories[x.user].push_back(x.item);
  }
  for (auto& h : histories) std::sort(h.begin(), h.end());
  const AugmentedListSet lists =
      augment_all(read_reclists(lists_path.string(), ds), unified, cfg.k2, &histories);
  write_augmented((dir / "augmented.tsv").string(), lists, ds);
  std::cout << "augmented " << lists.lists.size() << " lists from K=" << lists.k << " to K2=" << lists.k2
            << "\nwrote " << (dir / "augmented.tsv").string() << '\n';
  return 0;
}

int cmd_run(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  const ScenarioReport rep = run_scenario(ds, cfg);
  const auto& labels = ds.attribute(cfg.attribute).labels;
  std::cout << "scenario " << cfg.scenario << ", attribute " << cfg.attribute << ", alpha " << cfg.alpha
            << ", beta " << cfg.beta << ", seed " << cfg.seeds.master_seed << ": " << rep.train_users
            << " training users, " << rep.eval_users << " target users\n";
  if (rep.surrogate) {
    if (rep.surrogate->skipped) {
      std::cout << "surrogate: skipped (" << rep.notes << ")\n";
    } else {
      std::cout << "surrogate: " << to_string(rep.surrogate->chosen) << " (";
      for (std::size_t i = 0; i < rep.surrogate->candidates.size(); ++i) {
        const auto& cand = rep.surrogate->candidates[i];
        std::cout << (i ? ", " : "") << to_string(cand.kind) << " rls "
                  << (cand.failed ? std::string("failed") : fmt(cand.rls));
      }
      std::cout << ")\n";
    }
  }
  if (rep.alignment_res) std::cout << "alignment holdout res: " << fmt(*rep.alignment_res) << '\n';
  if (rep.perturbation_unchanged) {
    std::cout << "perturbation: " << rep.perturbation_unchanged << " positions had no substitute\n";
  }
  std::cout << "method\taccuracy\tmacro_f1\truntime_s";
  for (const auto& l : labels) std::cout << "\tP(" << l << ")\tR(" << l << ")";
  std::cout << '\n';
  for (const auto& m : rep.methods) {
    std::cout << to_string(m.method) << '\t' << fmt(m.metrics.accuracy) << '\t' << fmt(m.metrics.macro_f1)
              << '\t' << fmt(m.runtime_s, 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::cout << '\t' << fmt(m.metrics.precision[i]) << '\t' << fmt(m.metrics.recall[i]);
    }
    std::cout << '\n';
  }
  return 0;
}

fs::path results_dir(const Config& c, const Globals& g, const ScenarioConfig& cfg) {
  const std::string out = c.get_string("out", "");
  return out.empty() ? fs::path(g.cache) / "results" / cfg.dataset_name : fs::path(out);
}

int cmd_sweep(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const Dataset ds = load_cached_dataset(g, cfg.dataset_name);
  SweepOptions opt;
  opt.alphas = c.get_doubles("alphas", {cfg.alpha});
  opt.betas = c.get_doubles("betas", {cfg.beta});
  opt.scenarios.clear();
  for (const auto& s : c.get_list("scenarios", {std::to_string(cfg.scenario)})) {
    opt.scenarios.push_back(std::stoi(s));
  }
  opt.num_seeds = static_cast<int>(c.get_int("seeds", 3));
  opt.workers = static_cast<int>(c.get_int("workers", 1));
  opt.record_runtime = c.get_bool("timing", true);
  opt.cell_dir = (fs::path(g.cache) / "cells").string();
  const std::vector<ResultRow> rows = sweep(ds, cfg, opt);
  const fs::path dir = results_dir(c, g, cfg);
  fs::create_directories(dir);
  write_results_csv((dir / "results.csv").string(), rows);
  write_aggregate_csv((dir / "results_mean.csv").string(), aggregate_results(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.failed) continue;
    ++failed;
    std::cerr << "failed cell: scenario " << r.scenario << " " << r.method << " alpha " << r.alpha
              << " beta " << r.beta << " seed " << r.seed << ": " << r.error << '\n';
  }
  std::cout << "wrote " << rows.size() << " rows to " << (dir / "results.csv").string() << " ("
            << failed << " failed)\n";
  return failed ? 2 : 0;
}

int cmd_report(const Config& c, const Globals& g) {
  ScenarioConfig cfg = scenario_from(c, g);
  const fs::path path = results_dir(c, g, cfg) / "results_mean.csv";
  require(path, "sweep");
  std::cout << render_table(read_aggregate_csv(path.string()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute inference from recommendation lists"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value settings file");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--cache", g.cache, "artifact cache directory")->capture_default_str();
  app.add_option("--workers", g.workers, "parallel sweep cells");
  app.add_option("--set", g.sets, "override any config key (key=value), repeatable");

  Overrides o;
  struct Sub {
    CLI::App* app;
    int (*fn)(const Config&, const Globals&);
  };
  std::vector<Sub> subs;
  auto add = [&](const std::string& name, const std::string& help, int (*fn)(const Config&, const Globals&)) {
    CLI::App* s = app.add_subcommand(name, help);
    o.bind(s, "--dataset", "dataset", "dataset name in the cache");
    subs.push_back({s, fn});
    return s;
  };
  auto scenario_flags = [&](CLI::App* s) {
    o.bind(s, "--scenario", "scenario", "1-4");
    o.bind(s, "--attribute", "attribute", "attribute to infer");
    o.bind(s, "--alpha", "alpha", "interaction-provider fraction");
    o.bind(s, "--beta", "beta", "attribute-provider fraction");
    o.bind(s, "--k", "k", "list length");
    o.bind(s, "--k2", "k2", "augmented list length");
    o.bind(s, "--methods", "methods", "comma-separated: DT,KNN,MLP,RAPI,Sum,Static");
    o.bind(s, "--candidates", "candidate_kinds", "surrogate kinds, comma-separated");
    o.bind(s, "--embedding", "embedding", "'hash' or a content-embedding file");
    o.bind(s, "--robustness", "robustness", "fraction of list positions perturbed");
  };

  CLI::App* ingest = add("ingest", "parse raw files into the dataset cache", cmd_ingest);
  o.bind(ingest, "--interactions", "interactions", "interaction file");
  o.bind(ingest, "--attributes", "attributes", "user attribute file");
  o.bind(ingest, "--items", "items", "item metadata file");
  o.bind(ingest, "--format", "format", "tsv, csv, movielens or delimited:<sep>");
  o.bind(ingest, "--filter-rare", "filter_rare", "drop items with at most this many interactions");

  CLI::App* synth = add("synth", "generate a planted-signal dataset", cmd_synth);
  o.bind(synth, "--attribute", "attribute", "attribute name");
  o.bind(synth, "--users", "synth.users", "number of users");
  o.bind(synth, "--items", "synth.items", "number of items");
  o.bind(synth, "--clusters", "synth.clusters", "number of clusters (= classes)");
  o.bind(synth, "--affinity", "synth.affinity", "share of interactions inside the own cluster");
  o.bind(synth, "--per-user", "synth.per_user", "interactions per user");
  o.bind(synth, "--noise", "synth.noise", "label flip probability");

  CLI::App* train = add("train-rec", "train the original recommender and write its lists", cmd_train_rec);
  o.bind(train, "--kind", "original_kind", "MF, NeuMF, NGCF or LightGCN");
  o.bind(train, "--k", "k", "list length");

  CLI::App* confirm = add("confirm", "pick the surrogate with the highest list similarity", cmd_confirm);
  o.bind(confirm, "--alpha", "alpha", "interaction-provider fraction");
  o.bind(confirm, "--candidates", "candidate_kinds", "comma-separated kinds");

  CLI::App* align = add("align", "map content embeddings into the surrogate space", cmd_align);
  o.bind(align, "--alpha", "alpha", "interaction-provider fraction");
  o.bind(align, "--embedding", "embedding", "'hash' or a content-embedding file");
  o.bind(align, "--kind", "align.kind", "linear or autoencoder");

  CLI::App* augment = add("augment", "extend the lists to K2 items", cmd_augment);
  o.bind(augment, "--alpha", "alpha", "interaction-provider fraction");
  o.bind(augment, "--k2", "k2", "augmented list length");

  CLI::App* run = add("run", "run one scenario end to end", cmd_run);
  scenario_flags(run);

  CLI::App* sw = add("sweep", "grid over alpha and beta, several seeds", cmd_sweep);
  scenario_flags(sw);
  o.bind(sw, "--alphas", "alphas", "comma-separated");
  o.bind(sw, "--betas", "betas", "comma-separated");
  o.bind(sw, "--scenarios", "scenarios", "comma-separated");
  o.bind(sw, "--seeds", "seeds", "number of seeds");
  o.bind(sw, "--timing", "timing", "record runtimes (false writes 0)");
  o.bind(sw, "--out", "out", "results directory");

  CLI::App* report = add("report", "print the aggregated results as a table", cmd_report);
  o.bind(report, "--out", "out", "results directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    const Config cfg = resolve_config(g, o);
    for (const auto& s : subs) {
      if (s.app->parsed()) return s.fn(cfg, g);
    }
  } catch (const std::exception& e) {
    std::cerr << "rapi: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
