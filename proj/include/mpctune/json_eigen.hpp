#pragma once

// Eigen <-> nlohmann::json helpers. Matrices are row-major nested arrays.

#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "mpctune/errors.hpp"

namespace mpctune::jsonio {

template <class Derived>
nlohmann::json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Derived>
nlohmann::json vector_to_json(const Eigen::MatrixBase<Derived>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw DomainError(what + ": expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DomainError(what + ": ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DomainError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

/// Reads a fixed-size matrix, checking its shape.
template <class Fixed>
void read_fixed(const nlohmann::json& parent, const char* key, Fixed& out) {
  if (!parent.contains(key)) return;
  const Eigen::MatrixXd m = (Fixed::ColsAtCompileTime == 1) ? Eigen::MatrixXd(vector_from_json(parent[key], key))
                                                            : matrix_from_json(parent[key], key);
  if (m.rows() != out.rows() || m.cols() != out.cols())
    throw DomainError(std::string(key) + ": wrong shape");
  out = m;
}

}  // namespace mpctune::jsonio
