#include "rapi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "rapi/random.hpp"

namespace rapi {

std::optional<UserIndex> Dataset::find_user(const std::string& id) const {
  auto it = user_lookup_.find(id);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemIndex> Dataset::find_item(const std::string& id) const {
  auto it = item_lookup_.find(id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

const AttributeColumn& Dataset::attribute(const std::string& name) const {
  auto it = attributes_.find(name);
  if (it == attributes_.end()) throw Error("attribute '" + name + "' not present in dataset");
  return it->second;
}

double Dataset::density() const {
  if (user_ids_.empty() || item_ids_.empty()) return 0.0;
  return static_cast<double>(interactions_.size()) /
         (static_cast<double>(user_ids_.size()) * static_cast<double>(item_ids_.size()));
}

std::vector<std::vector<std::size_t>> Dataset::interactions_by_user() const {
  std::vector<std::vector<std::size_t>> out(num_users());
  for (std::size_t i = 0; i < interactions_.size(); ++i) out[interactions_[i].user].push_back(i);
  return out;
}

UserIndex DatasetBuilder::add_user(const std::string& id) {
  auto [it, inserted] =
      data_.user_lookup_.try_emplace(id, static_cast<UserIndex>(data_.user_ids_.size()));
  if (inserted) data_.user_ids_.push_back(id);
  return it->second;
}

ItemIndex DatasetBuilder::add_item(const std::string& id) {
  auto [it, inserted] =
      data_.item_lookup_.try_emplace(id, static_cast<ItemIndex>(data_.item_ids_.size()));
  if (inserted) data_.item_ids_.push_back(id);
  return it->second;
}

void DatasetBuilder::add_interaction(const std::string& user, const std::string& item,
                                     double weight, std::int64_t timestamp) {
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw Error("interaction weight must be finite and nonnegative (user " + user + ", item " +
                item + ")");
  }
  data_.interactions_.push_back({add_user(user), add_item(item), weight, timestamp});
}

void DatasetBuilder::set_attribute(const std::string& user, const std::string& name,
                                   const std::string& value) {
  pending_attributes_.push_back({user, name, value});
}

void DatasetBuilder::set_item_meta(const std::string& item, ItemMeta meta) {
  pending_meta_.emplace_back(item, std::move(meta));
}

Dataset DatasetBuilder::build() && {
  auto& rows = data_.interactions_;
  // Collapse duplicate pairs keeping the max weight; the earliest timestamp of
  // the winning weight is kept.
  std::stable_sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  });
  std::vector<Interaction> unique;
  unique.reserve(rows.size());
  for (const auto& r : rows) {
    if (!unique.empty() && unique.back().user == r.user && unique.back().item == r.item) {
      if (r.weight > unique.back().weight) unique.back() = r;
      continue;
    }
    unique.push_back(r);
  }
  rows = std::move(unique);

  const std::size_t m = data_.user_ids_.size();
  for (const auto& p : pending_attributes_) {
    auto user = data_.find_user(p.user);
    if (!user) {
      ++dropped_attribute_rows_;
      continue;
    }
    auto& column = data_.attributes_[p.name];
    if (column.codes.empty()) column.codes.assign(m, -1);
    auto label = std::find(column.labels.begin(), column.labels.end(), p.value);
    int code = static_cast<int>(label - column.labels.begin());
    if (label == column.labels.end()) column.labels.push_back(p.value);
    int& slot = column.codes[*user];
    if (slot >= 0 && slot != code) {
      throw Error("conflicting labels for user " + p.user + " attribute " + p.name + ": '" +
                  column.labels[slot] + "' vs '" + p.value + "'");
    }
    slot = code;
  }
  // Codes follow the sorted label order so they do not depend on row order.
  for (auto& [name, column] : data_.attributes_) {
    std::vector<std::string> sorted = column.labels;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> remap(column.labels.size());
    for (std::size_t k = 0; k < column.labels.size(); ++k) {
      remap[k] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), column.labels[k]) -
                                  sorted.begin());
    }
    for (int& code : column.codes) {
      if (code >= 0) code = remap[code];
    }
    column.labels = std::move(sorted);
  }
  data_.item_meta_.assign(data_.item_ids_.size(), ItemMeta{});
  for (auto& [item, meta] : pending_meta_) {
    auto idx = data_.find_item(item);
    if (!idx) {
      ++dropped_meta_rows_;
      continue;
    }
    data_.item_meta_[*idx] = std::move(meta);
  }
  pending_attributes_.clear();
  pending_meta_.clear();
  return std::move(data_);
}

Dataset filter_rare_items(const Dataset& dataset, std::size_t min_count) {
  std::vector<std::size_t> count(dataset.num_items(), 0);
  for (const auto& r : dataset.interactions()) ++count[r.item];
  DatasetBuilder b;
  for (const auto& r : dataset.interactions()) {
    if (count[r.item] <= min_count) continue;
    b.add_interaction(dataset.user_ids()[r.user], dataset.item_ids()[r.item], r.weight,
                      r.timestamp);
  }
  for (const auto& [name, column] : dataset.attributes()) {
    for (std::size_t u = 0; u < column.codes.size(); ++u) {
      if (column.codes[u] >= 0) b.set_attribute(dataset.user_ids()[u], name, column.labels[column.codes[u]]);
    }
  }
  for (std::size_t i = 0; i < dataset.num_items(); ++i) {
    b.set_item_meta(dataset.item_ids()[i], dataset.item_meta()[i]);
  }
  return std::move(b).build();
}

Dataset binarize(const Dataset& dataset) {
  DatasetBuilder b;
  for (const auto& id : dataset.user_ids()) b.add_user(id);
  for (const auto& id : dataset.item_ids()) b.add_item(id);
  for (const auto& r : dataset.interactions()) {
    b.add_interaction(dataset.user_ids()[r.user], dataset.item_ids()[r.item], 1.0, r.timestamp);
  }
  for (const auto& [name, column] : dataset.attributes()) {
    for (std::size_t u = 0; u < column.codes.size(); ++u) {
      if (column.codes[u] >= 0) b.set_attribute(dataset.user_ids()[u], name, column.labels[column.codes[u]]);
    }
  }
  for (std::size_t i = 0; i < dataset.num_items(); ++i) {
    b.set_item_meta(dataset.item_ids()[i], dataset.item_meta()[i]);
  }
  Dataset out = std::move(b).build();
  return out;
}

Split split_dataset(const Dataset& dataset, const std::array<double, 3>& ratios,
                    std::uint64_t seed) {
  if (dataset.empty()) throw Error("split_dataset: dataset has no interactions");
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error("split_dataset: ratios must be nonnegative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error("split_dataset: ratios must sum to 1");
  }
  const std::size_t n = dataset.num_interactions();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Small epsilon so that e.g. 0.1 * 10 lands on 1 rather than 0.999...
  auto take = [n](double r) {
    return std::min(n, static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t n_val = take(ratios[1]);
  const std::size_t n_test = std::min(n - n_val, take(ratios[2]));
  const std::size_t n_train = n - n_val - n_test;

  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Split restrict_split(const Dataset& dataset, const Split& split,
                     const std::vector<UserIndex>& users) {
  std::vector<char> keep(dataset.num_users(), 0);
  for (UserIndex u : users) keep.at(u) = 1;
  auto filter = [&](const std::vector<std::size_t>& part) {
    std::vector<std::size_t> out;
    for (std::size_t idx : part) {
      if (keep[dataset.interactions()[idx].user]) out.push_back(idx);
    }
    return out;
  };
  return {filter(split.train), filter(split.validation), filter(split.test)};
}

namespace {

std::vector<UserIndex> sample_users(std::size_t m, std::size_t count, Rng& rng) {
  std::vector<UserIndex> all(m);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

ProviderPartition partition_providers(const Dataset& dataset, double alpha, double beta,
                                      std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0)) {
    throw Error("partition_providers: alpha and beta must lie in [0, 1]");
  }
  const std::size_t m = dataset.num_users();
  auto size_of = [m](double f) {
    return std::min(m, static_cast<std::size_t>(std::floor(f * static_cast<double>(m) + 1e-9)));
  };
  ProviderPartition p;
  p.alpha = alpha;
  p.beta = beta;
  Rng interaction_rng(splitmix64(seed ^ 0x1ULL));
  Rng attribute_rng(splitmix64(seed ^ 0x2ULL));
  p.interaction_providers = sample_users(m, size_of(alpha), interaction_rng);
  p.attribute_providers = sample_users(m, size_of(beta), attribute_rng);
  std::vector<char> is_provider(m, 0);
  for (UserIndex u : p.attribute_providers) is_provider[u] = 1;
  for (std::size_t u = 0; u < m; ++u) {
    if (!is_provider[u]) p.target_users.push_back(static_cast<UserIndex>(u));
  }
  return p;
}

ItemPartition derive_item_partition(const Dataset& dataset, const ProviderPartition& partition) {
  std::vector<char> provider(dataset.num_users(), 0);
  for (UserIndex u : partition.interaction_providers) provider.at(u) = 1;
  std::vector<char> touched(dataset.num_items(), 0);
  for (const auto& r : dataset.interactions()) {
    if (provider[r.user]) touched[r.item] = 1;
  }
  ItemPartition out;
  for (std::size_t i = 0; i < touched.size(); ++i) {
    (touched[i] ? out.related : out.unrelated).push_back(static_cast<ItemIndex>(i));
  }
  return out;
}

}  // namespace rapi
