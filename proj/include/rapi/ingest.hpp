#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rapi/dataset.hpp"
#include "rapi/embedding.hpp"

namespace rapi {

// Column layout of the input files. `Delimited` splits on `separator`;
// `MovieLens` uses the "::"-separated .dat layout (ratings, users, movies).
struct InputFormat {
  enum class Kind { Delimited, MovieLens };
  Kind kind = Kind::Delimited;
  std::string separator = "\t";

  // Accepts "tsv", "csv", "delimited:<sep>" and "movielens".
  static InputFormat parse(const std::string& tag);
};

// Interactions only: columns user, item[, weight[, timestamp]]. Missing
// weights default to 1. Duplicate pairs collapse to the max weight.
Dataset parse_interactions(const std::string& path, const InputFormat& format = {});

// attribute name -> user id -> label, with the label set kept in first-seen order.
struct AttributeRecords {
  std::map<std::string, std::vector<std::string>> labels;
  std::map<std::string, std::map<std::string, std::string>> values;

  std::size_t num_labels(const std::string& name) const;
};

// Delimited: rows (user_id, attribute_name, value). MovieLens: users.dat rows
// UserID::Gender::Age::Occupation::Zip, mapped to gender/age/occupation.
AttributeRecords parse_attributes(const std::string& path, const InputFormat& format = {});

// Delimited: rows (item_id, title, category). MovieLens: movies.dat rows
// MovieID::Title::Genre1|Genre2, category = first genre.
std::map<std::string, ItemMeta> parse_item_meta(const std::string& path,
                                                const InputFormat& format = {});

// Merges side information into an interaction fragment. Rows naming ids not
// seen in the interactions are dropped.
Dataset assemble_dataset(const Dataset& interactions, const AttributeRecords& attributes,
                         const std::map<std::string, ItemMeta>& meta);

// Writes the dataset in the delimited (tab) layout accepted by the parsers.
void write_dataset(const std::string& dir, const Dataset& dataset);
Dataset read_dataset(const std::string& dir);

// Deterministic stand-in for a sentence encoder: each lowercased title is
// split into character 3-grams (padded with one space on each side), each gram
// is hashed to one of `dim` slots, and the count vector is L2-normalized.
// Empty titles map to the zero vector.
EmbeddingTable hash_embed_titles(const std::vector<ItemMeta>& item_meta, Eigen::Index dim,
                                 std::uint64_t seed, std::size_t* empty_titles = nullptr);

struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 200;
  std::size_t n_clusters = 2;
  std::string attribute_name = "gender";
  double cluster_affinity = 0.9;
  std::size_t interactions_per_user = 30;
  // Fraction of users whose label is replaced by a different cluster's label.
  double label_noise = 0.0;

  void validate() const;
};

struct SyntheticData {
  Dataset dataset;
  std::vector<int> user_cluster;  // ground truth, indexed by dense user index
  std::vector<int> item_cluster;  // indexed by dense item index
};

// Planted-attribute data: every user belongs to a cluster, draws each
// interaction from its own cluster's items with probability cluster_affinity
// (uniformly from the other clusters otherwise), and carries the cluster as its
// attribute label. Titles and categories are drawn from per-cluster vocabularies.
SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace rapi
