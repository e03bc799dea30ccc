#include "rapi/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rapi/random.hpp"
#include "text.hpp"

namespace rapi {

namespace fs = std::filesystem;

InputFormat InputFormat::parse(const std::string& tag) {
  InputFormat f;
  if (tag == "tsv" || tag.empty()) return f;
  if (tag == "csv") {
    f.separator = ",";
    return f;
  }
  if (tag == "movielens" || tag == "movielens_dat") {
    f.kind = Kind::MovieLens;
    f.separator = "::";
    return f;
  }
  const std::string prefix = "delimited:";
  if (tag.rfind(prefix, 0) == 0 && tag.size() > prefix.size()) {
    f.separator = tag.substr(prefix.size());
    if (f.separator == "\\t") f.separator = "\t";
    return f;
  }
  throw Error("unknown input format '" + tag + "'");
}

namespace {

std::vector<std::string_view> split_row(std::string_view line, const InputFormat& format) {
  auto fields = detail::split_on(line, format.separator);
  for (auto& f : fields) f = detail::trim(f);
  return fields;
}

template <typename Fn>
void for_each_row(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    fn(std::string_view(line), line_no);
  }
}

std::string where(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

}  // namespace

Dataset parse_interactions(const std::string& path, const InputFormat& format) {
  DatasetBuilder b;
  for_each_row(path, [&](std::string_view line, std::size_t line_no) {
    auto fields = split_row(line, format);
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw Error(where(path, line_no) + ": malformed interaction row (need user and item)");
    }
    double weight = 1.0;
    std::int64_t ts = 0;
    if (fields.size() >= 3 && !fields[2].empty()) {
      auto w = detail::parse_number<double>(fields[2]);
      if (!w) throw Error(where(path, line_no) + ": bad weight '" + std::string(fields[2]) + "'");
      weight = *w;
    }
    if (fields.size() >= 4 && !fields[3].empty()) {
      auto t = detail::parse_number<std::int64_t>(fields[3]);
      if (!t) throw Error(where(path, line_no) + ": bad timestamp '" + std::string(fields[3]) + "'");
      ts = *t;
    }
    try {
      b.add_interaction(std::string(fields[0]), std::string(fields[1]), weight, ts);
    } catch (const Error& e) {
      throw Error(where(path, line_no) + ": " + e.what());
    }
  });
  return std::move(b).build();
}

std::size_t AttributeRecords::num_labels(const std::string& name) const {
  auto it = labels.find(name);
  return it == labels.end() ? 0 : it->second.size();
}

AttributeRecords parse_attributes(const std::string& path, const InputFormat& format) {
  AttributeRecords out;
  auto put = [&](const std::string& user, const std::string& name, const std::string& value,
                 std::size_t line_no) {
    auto& per_user = out.values[name];
    auto [it, inserted] = per_user.emplace(user, value);
    if (!inserted && it->second != value) {
      throw Error(where(path, line_no) + ": conflicting labels for user " + user + " attribute " +
                  name + ": '" + it->second + "' vs '" + value + "'");
    }
    auto& labels = out.labels[name];
    if (std::find(labels.begin(), labels.end(), value) == labels.end()) labels.push_back(value);
  };
  for_each_row(path, [&](std::string_view line, std::size_t line_no) {
    auto fields = split_row(line, format);
    if (format.kind == InputFormat::Kind::MovieLens) {
      if (fields.size() < 4) throw Error(where(path, line_no) + ": malformed users.dat row");
      const std::string user(fields[0]);
      put(user, "gender", std::string(fields[1]), line_no);
      put(user, "age", std::string(fields[2]), line_no);
      put(user, "occupation", std::string(fields[3]), line_no);
      return;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw Error(where(path, line_no) + ": attribute rows must be (user, attribute, value)");
    }
    put(std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), line_no);
  });
  return out;
}

std::map<std::string, ItemMeta> parse_item_meta(const std::string& path,
                                                const InputFormat& format) {
  std::map<std::string, ItemMeta> out;
  for_each_row(path, [&](std::string_view line, std::size_t line_no) {
    auto fields = split_row(line, format);
    if (fields.size() < 2 || fields[0].empty()) {
      throw Error(where(path, line_no) + ": metadata rows must be (item, title[, category])");
    }
    ItemMeta meta;
    meta.title = std::string(fields[1]);
    if (fields.size() >= 3) {
      std::string_view category = fields[2];
      if (format.kind == InputFormat::Kind::MovieLens) {
        category = category.substr(0, category.find('|'));
      }
      meta.category = std::string(category);
    }
    out[std::string(fields[0])] = std::move(meta);
  });
  return out;
}

Dataset assemble_dataset(const Dataset& interactions, const AttributeRecords& attributes,
                         const std::map<std::string, ItemMeta>& meta) {
  DatasetBuilder b;
  for (const auto& id : interactions.user_ids()) b.add_user(id);
  for (const auto& id : interactions.item_ids()) b.add_item(id);
  for (const auto& r : interactions.interactions()) {
    b.add_interaction(interactions.user_ids()[r.user], interactions.item_ids()[r.item], r.weight,
                      r.timestamp);
  }
  for (const auto& [name, per_user] : attributes.values) {
    for (const auto& [user, value] : per_user) b.set_attribute(user, name, value);
  }
  for (const auto& [item, m] : meta) b.set_item_meta(item, m);
  return std::move(b).build();
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '\t', ' ');
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "interactions.tsv");
    for (const auto& r : dataset.interactions()) {
      out << dataset.user_ids()[r.user] << '\t' << dataset.item_ids()[r.item] << '\t'
          << detail::format_double(r.weight) << '\t' << r.timestamp << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "users.tsv");
    for (const auto& id : dataset.user_ids()) out << id << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "attributes.tsv");
    for (const auto& [name, column] : dataset.attributes()) {
      for (std::size_t u = 0; u < column.codes.size(); ++u) {
        if (column.codes[u] < 0) continue;
        out << dataset.user_ids()[u] << '\t' << name << '\t' << column.labels[column.codes[u]]
            << '\n';
      }
    }
  }
  {
    std::ofstream out(fs::path(dir) / "items.tsv");
    for (std::size_t i = 0; i < dataset.num_items(); ++i) {
      const auto& m = dataset.item_meta()[i];
      out << dataset.item_ids()[i] << '\t' << sanitize(m.title) << '\t' << sanitize(m.category)
          << '\n';
    }
  }
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path interactions = root / "interactions.tsv";
  if (!fs::exists(interactions)) throw Error("no dataset at " + dir + " (missing interactions.tsv)");
  // users.tsv and items.tsv pin the dense index order written by write_dataset.
  DatasetBuilder b;
  if (fs::exists(root / "users.tsv")) {
    for_each_row((root / "users.tsv").string(),
                 [&](std::string_view line, std::size_t) { b.add_user(std::string(detail::trim(line))); });
  }
  std::map<std::string, ItemMeta> meta;
  if (fs::exists(root / "items.tsv")) {
    for_each_row((root / "items.tsv").string(), [&](std::string_view line, std::size_t) {
      b.add_item(std::string(detail::trim(detail::split_on(line, "\t")[0])));
    });
    meta = parse_item_meta((root / "items.tsv").string());
  }
  Dataset fragment = parse_interactions(interactions.string());
  for (const auto& r : fragment.interactions()) {
    b.add_interaction(fragment.user_ids()[r.user], fragment.item_ids()[r.item], r.weight,
                      r.timestamp);
  }
  if (fs::exists(root / "attributes.tsv")) {
    AttributeRecords attributes = parse_attributes((root / "attributes.tsv").string());
    for (const auto& [name, per_user] : attributes.values) {
      for (const auto& [user, value] : per_user) b.set_attribute(user, name, value);
    }
  }
  for (const auto& [item, m] : meta) b.set_item_meta(item, m);
  return std::move(b).build();
}

EmbeddingTable hash_embed_titles(const std::vector<ItemMeta>& item_meta, Eigen::Index dim,
                                 std::uint64_t seed, std::size_t* empty_titles) {
  if (dim < 8) throw Error("hash_embed_titles: dim must be at least 8");
  std::vector<std::int64_t> ids(item_meta.size());
  std::iota(ids.begin(), ids.end(), 0);
  Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(item_meta.size()), dim);
  std::size_t empty = 0;
  for (std::size_t i = 0; i < item_meta.size(); ++i) {
    std::string text = " ";
    for (unsigned char c : item_meta[i].title) text.push_back(static_cast<char>(std::tolower(c)));
    text.push_back(' ');
    if (detail::trim(text).empty()) {
      ++empty;
      continue;
    }
    for (std::size_t p = 0; p + 3 <= text.size(); ++p) {
      const auto slot = fnv1a64(std::string_view(text).substr(p, 3), seed) %
                        static_cast<std::uint64_t>(dim);
      rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(slot)) += 1.0;
    }
    rows.row(i).normalize();
  }
  if (empty_titles) *empty_titles = empty;
  return EmbeddingTable(std::move(ids), std::move(rows));
}

void SyntheticSpec::validate() const {
  if (n_users == 0 || n_items == 0 || n_clusters == 0 || interactions_per_user == 0) {
    throw Error("synthetic spec: counts must be positive");
  }
  if (n_items < n_clusters) throw Error("synthetic spec: n_items must be at least n_clusters");
  if (!(cluster_affinity > 1.0 / static_cast<double>(n_clusters)) || cluster_affinity > 1.0) {
    throw Error("synthetic spec: cluster_affinity must lie in (1/n_clusters, 1]");
  }
  if (interactions_per_user > n_items) {
    throw Error("synthetic spec: interactions_per_user exceeds n_items");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw Error("synthetic spec: bad label_noise");
}

namespace {

std::string random_word(Rng& rng) {
  static constexpr char kConsonants[] = "bcdfghjklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  std::uniform_int_distribution<int> len(2, 3);
  std::uniform_int_distribution<int> con(0, sizeof(kConsonants) - 2);
  std::uniform_int_distribution<int> vow(0, sizeof(kVowels) - 2);
  std::string w;
  const int syllables = len(rng);
  for (int s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[con(rng)]);
    w.push_back(kVowels[vow(rng)]);
  }
  return w;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t m = spec.n_users;
  const std::size_t n = spec.n_items;
  const std::size_t c = spec.n_clusters;

  SyntheticData out;
  out.user_cluster.resize(m);
  for (std::size_t u = 0; u < m; ++u) out.user_cluster[u] = static_cast<int>(u % c);
  std::shuffle(out.user_cluster.begin(), out.user_cluster.end(), rng);
  out.item_cluster.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.item_cluster[i] = static_cast<int>(i % c);

  std::vector<std::vector<ItemIndex>> items_of(c);
  for (std::size_t i = 0; i < n; ++i) items_of[out.item_cluster[i]].push_back(static_cast<ItemIndex>(i));

  DatasetBuilder b;
  for (std::size_t u = 0; u < m; ++u) b.add_user(std::to_string(u));
  for (std::size_t i = 0; i < n; ++i) b.add_item(std::to_string(i));

  std::bernoulli_distribution in_cluster(spec.cluster_affinity);
  std::int64_t clock = 0;
  for (std::size_t u = 0; u < m; ++u) {
    const int home = out.user_cluster[u];
    std::vector<ItemIndex> own = items_of[home];
    std::vector<ItemIndex> other;
    for (std::size_t k = 0; k < c; ++k) {
      if (static_cast<int>(k) != home) other.insert(other.end(), items_of[k].begin(), items_of[k].end());
    }
    // Draw without replacement from the chosen pool; fall back to the other
    // pool when one runs dry.
    for (std::size_t t = 0; t < spec.interactions_per_user; ++t) {
      bool pick_own = spec.cluster_affinity >= 1.0 ? true : in_cluster(rng);
      if (pick_own && own.empty()) pick_own = false;
      if (!pick_own && other.empty()) pick_own = true;
      auto& pool = pick_own ? own : other;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const std::size_t k = pick(rng);
      b.add_interaction(std::to_string(u), std::to_string(pool[k]), 1.0, clock++);
      pool[k] = pool.back();
      pool.pop_back();
    }
  }

  std::vector<std::vector<std::string>> vocab(c);
  for (auto& words : vocab) {
    for (int w = 0; w < 12; ++w) words.push_back(random_word(rng));
  }
  std::vector<std::string> shared;
  for (int w = 0; w < 12; ++w) shared.push_back(random_word(rng));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& words = vocab[out.item_cluster[i]];
    std::uniform_int_distribution<std::size_t> pick_word(0, words.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_shared(0, shared.size() - 1);
    ItemMeta meta;
    meta.title = words[pick_word(rng)] + " " + words[pick_word(rng)] + " " +
                 shared[pick_shared(rng)] + " " + std::to_string(i);
    meta.category = "cat" + std::to_string(out.item_cluster[i]);
    b.set_item_meta(std::to_string(i), std::move(meta));
  }

  std::bernoulli_distribution flip(spec.label_noise);
  std::uniform_int_distribution<std::size_t> shift(1, c > 1 ? c - 1 : 1);
  for (std::size_t u = 0; u < m; ++u) {
    std::size_t label = static_cast<std::size_t>(out.user_cluster[u]);
    if (c > 1 && spec.label_noise > 0.0 && flip(rng)) label = (label + shift(rng)) % c;
    b.set_attribute(std::to_string(u), spec.attribute_name, "c" + std::to_string(label));
  }
  out.dataset = std::move(b).build();
  return out;
}

}  // namespace rapi
