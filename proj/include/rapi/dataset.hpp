#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rapi/common.hpp"

namespace rapi {

struct Interaction {
  UserIndex user = 0;
  ItemIndex item = 0;
  double weight = 1.0;
  std::int64_t timestamp = 0;
};

struct ItemMeta {
  std::string title;
  std::string category;
};

// One categorical attribute: label set plus a per-user code (-1 when unknown).
struct AttributeColumn {
  std::vector<std::string> labels;
  std::vector<int> codes;

  int num_classes() const { return static_cast<int>(labels.size()); }
};

// Users, items, implicit/explicit interactions, per-user attributes and per-item
// metadata. Users and items are addressed by dense indices; the original ids are
// kept for serialization. Instances are immutable once built.
class Dataset {
 public:
  Dataset() = default;

  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_interactions() const { return interactions_.size(); }
  bool empty() const { return interactions_.empty(); }

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<Interaction>& interactions() const { return interactions_; }
  const std::map<std::string, AttributeColumn>& attributes() const { return attributes_; }
  const std::vector<ItemMeta>& item_meta() const { return item_meta_; }

  std::optional<UserIndex> find_user(const std::string& id) const;
  std::optional<ItemIndex> find_item(const std::string& id) const;

  const AttributeColumn& attribute(const std::string& name) const;
  bool has_attribute(const std::string& name) const { return attributes_.count(name) != 0; }

  double density() const;

  // Interaction indices grouped by user.
  std::vector<std::vector<std::size_t>> interactions_by_user() const;

 private:
  friend class DatasetBuilder;

  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  std::vector<Interaction> interactions_;
  std::map<std::string, AttributeColumn> attributes_;
  std::vector<ItemMeta> item_meta_;
};

// Accumulates raw records keyed by external ids; build() interns ids to dense
// indices, collapses duplicate (user, item) pairs keeping the max weight and
// validates the result.
class DatasetBuilder {
 public:
  UserIndex add_user(const std::string& id);
  ItemIndex add_item(const std::string& id);

  void add_interaction(const std::string& user, const std::string& item, double weight = 1.0,
                       std::int64_t timestamp = 0);

  void set_attribute(const std::string& user, const std::string& name,
                            const std::string& value);
  void set_item_meta(const std::string& item, ItemMeta meta);

  // Attribute rows and metadata may refer to ids that never show up in the
  // interactions; these are dropped at build time.
  Dataset build() &&;

  std::size_t dropped_attribute_rows() const { return dropped_attribute_rows_; }
  std::size_t dropped_meta_rows() const { return dropped_meta_rows_; }

 private:
  Dataset data_;
  struct PendingAttribute {
    std::string user, name, value;
  };
  std::vector<PendingAttribute> pending_attributes_;
  std::vector<std::pair<std::string, ItemMeta>> pending_meta_;
  std::size_t dropped_attribute_rows_ = 0;
  std::size_t dropped_meta_rows_ = 0;
};

// Rebuilds a dataset keeping only items whose total interaction count exceeds
// min_count. Users left without interactions are removed as well.
Dataset filter_rare_items(const Dataset& dataset, std::size_t min_count = 1);

// Returns a copy with every interaction weight set to 1.
Dataset binarize(const Dataset& dataset);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Uniform per-interaction split. Sizes are floor(r * n) for validation and test
// with the remainder going to train, so each part is within one interaction of
// its ratio.
Split split_dataset(const Dataset& dataset, const std::array<double, 3>& ratios,
                    std::uint64_t seed);

// Keeps only interactions issued by users in `users`.
Split restrict_split(const Dataset& dataset, const Split& split,
                     const std::vector<UserIndex>& users);

struct ProviderPartition {
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<UserIndex> interaction_providers;  // sorted
  std::vector<UserIndex> attribute_providers;    // sorted
  std::vector<UserIndex> target_users;           // sorted, complement of attribute_providers
};

ProviderPartition partition_providers(const Dataset& dataset, double alpha, double beta,
                                      std::uint64_t seed);

struct ItemPartition {
  std::vector<ItemIndex> related;    // touched by an interaction provider
  std::vector<ItemIndex> unrelated;  // everything else
};

ItemPartition derive_item_partition(const Dataset& dataset, const ProviderPartition& partition);

}  // namespace rapi
