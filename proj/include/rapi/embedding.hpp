#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rapi/common.hpp"

namespace rapi {

// Id-indexed dense vectors of one fixed dimension, stored row-wise.
template <typename Scalar>
class BasicEmbeddingTable {
 public:
  using Key = std::int64_t;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstRow = typename RowMatrix::ConstRowXpr;

  BasicEmbeddingTable() = default;
  explicit BasicEmbeddingTable(Eigen::Index dim) : dim_(dim), rows_(0, dim) {}

  // Builds a table from a row matrix; ids[r] names row r.
  BasicEmbeddingTable(std::vector<Key> ids, RowMatrix rows)
      : dim_(rows.cols()), ids_(std::move(ids)), rows_(std::move(rows)) {
    if (static_cast<Eigen::Index>(ids_.size()) != rows_.rows()) {
      throw Error("embedding table: id count does not match row count");
    }
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      if (!index_.emplace(ids_[r], static_cast<Eigen::Index>(r)).second) {
        throw Error("embedding table: duplicate id " + std::to_string(ids_[r]));
      }
    }
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<Key>& ids() const { return ids_; }
  const RowMatrix& matrix() const { return rows_; }

  bool contains(Key id) const { return index_.count(id) != 0; }

  std::optional<Eigen::Index> row_of(Key id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ConstRow operator[](Key id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("embedding table: unknown id " + std::to_string(id));
    return rows_.row(it->second);
  }

  template <typename Derived>
  void insert(Key id, const Eigen::MatrixBase<Derived>& v) {
    if (v.size() != dim_) {
      throw Error("embedding table: vector for id " + std::to_string(id) + " has " +
                  std::to_string(v.size()) + " components, expected " + std::to_string(dim_));
    }
    if (!index_.emplace(id, rows_.rows()).second) {
      throw Error("embedding table: duplicate id " + std::to_string(id));
    }
    ids_.push_back(id);
    rows_.conservativeResize(rows_.rows() + 1, Eigen::NoChange);
    rows_.row(rows_.rows() - 1) = v.transpose();
  }

  bool all_finite() const { return rows_.allFinite(); }

  // Subset in the order given by `keep`.
  BasicEmbeddingTable select(const std::vector<Key>& keep) const {
    RowMatrix out(static_cast<Eigen::Index>(keep.size()), dim_);
    for (std::size_t r = 0; r < keep.size(); ++r) out.row(r) = (*this)[keep[r]];
    return BasicEmbeddingTable(keep, std::move(out));
  }

 private:
  Eigen::Index dim_ = 0;
  std::vector<Key> ids_;
  RowMatrix rows_;
  std::unordered_map<Key, Eigen::Index> index_;
};

using EmbeddingTable = BasicEmbeddingTable<double>;

// Maps an id token from a file to a table key; returning nullopt drops the row.
using IdResolver = std::function<std::optional<std::int64_t>(const std::string&)>;

// Text format: header "count dim", then count rows "id v1 ... v_dim".
EmbeddingTable load_embedding_table(const std::string& path, const IdResolver& resolve = {});
void write_embedding_table(const std::string& path, const EmbeddingTable& table,
                           const std::function<std::string(std::int64_t)>& label = {});

// Same as above for a bare matrix with row indices as ids.
Matrix load_matrix(const std::string& path);
void write_matrix(const std::string& path, const Matrix& m);

}  // namespace rapi
