#include "rapi/embedding.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "text.hpp"

namespace rapi {

namespace {

double parse_value(std::string_view token, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error(where + ": cannot parse '" + std::string(token) + "' as a number");
  }
  if (!std::isfinite(v)) throw Error(where + ": non-finite value '" + std::string(token) + "'");
  return v;
}

std::optional<std::int64_t> default_resolve(const std::string& token) {
  std::int64_t id = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
  if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
  return id;
}

struct Header {
  long count = 0;
  long dim = 0;
};

Header read_header(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": missing header line");
  auto fields = detail::split_whitespace(line);
  if (fields.size() != 2) throw Error(path + ":1: header must be 'count dim'");
  Header h;
  h.count = static_cast<long>(parse_value(fields[0], path + ":1"));
  h.dim = static_cast<long>(parse_value(fields[1], path + ":1"));
  if (h.count < 0 || h.dim <= 0) throw Error(path + ":1: invalid header values");
  return h;
}

}  // namespace

EmbeddingTable load_embedding_table(const std::string& path, const IdResolver& resolve) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path);
  const Header h = read_header(in, path);

  std::vector<std::int64_t> ids;
  std::vector<double> values;
  ids.reserve(h.count);
  values.reserve(static_cast<std::size_t>(h.count * h.dim));
  std::string line;
  long line_no = 1;
  long rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (static_cast<long>(fields.size()) != h.dim + 1) {
      throw Error(where + ": row has " + std::to_string(fields.size() - 1) +
                  " values, expected " + std::to_string(h.dim));
    }
    ++rows;
    const std::string token(fields[0]);
    auto id = resolve ? resolve(token) : default_resolve(token);
    if (!resolve && !id) throw Error(where + ": item id '" + token + "' is not an integer");
    std::vector<double> row(h.dim);
    for (long d = 0; d < h.dim; ++d) row[d] = parse_value(fields[d + 1], where);
    if (!id) continue;
    ids.push_back(*id);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (rows != h.count) {
    throw Error(path + ": header declares " + std::to_string(h.count) + " rows, found " +
                std::to_string(rows));
  }
  Matrix m = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(ids.size()), h.dim);
  return EmbeddingTable(std::move(ids), std::move(m));
}

void write_embedding_table(const std::string& path, const EmbeddingTable& table,
                           const std::function<std::string(std::int64_t)>& label) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding file " + path);
  out << table.size() << ' ' << table.dim() << '\n';
  const Matrix& m = table.matrix();
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto id = table.ids()[r];
    out << (label ? label(id) : std::to_string(id));
    for (Eigen::Index d = 0; d < m.cols(); ++d) out << ' ' << detail::format_double(m(r, d));
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path);
}

Matrix load_matrix(const std::string& path) {
  EmbeddingTable t = load_embedding_table(path);
  Matrix m(static_cast<Eigen::Index>(t.size()), t.dim());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto id = t.ids()[r];
    if (id < 0 || id >= static_cast<std::int64_t>(t.size())) {
      throw Error(path + ": matrix row id " + std::to_string(id) + " out of range");
    }
    m.row(id) = t.matrix().row(r);
  }
  return m;
}

void write_matrix(const std::string& path, const Matrix& m) {
  std::vector<std::int64_t> ids(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) ids[r] = r;
  write_embedding_table(path, EmbeddingTable(std::move(ids), m), {});
}

}  // namespace rapi
