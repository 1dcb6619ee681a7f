#pragma once

// Dense row-major kernels: products, a pseudo-inverse built on Eigen's SVD and a
// least-squares solver. Every reduction runs in a fixed left-to-right order
// so results are bit-reproducible across runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "ppa/error.hpp"

namespace ppa {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  // Takes ownership of row-major storage; rejects wrong lengths and non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("matrix storage holds " + std::to_string(data_.size()) + " values, expected " +
                            std::to_string(rows_ * cols_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw ValidationError("matrix entry is not finite");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                          std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

// a * bᵀ without materializing the transpose; each entry is a row·row dot product.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("matmul_transposed: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ValidationError("matvec: dimension mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("subtract: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return max_abs(subtract(a, b)); }

inline double trace(const Matrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
  return t;
}

// Thin SVD a = U diag(s) Vᵀ with U m×r, V n×r, r = min(m, n).
struct Svd {
  Matrix u;
  Vector singular;
  Matrix v;
};

inline Svd svd(const Matrix& a) {
  using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const EigenMatrix> view(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                                           static_cast<Eigen::Index>(a.cols()));
  const Eigen::JacobiSVD<Eigen::MatrixXd> dec(view, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& u = dec.matrixU();
  const auto& v = dec.matrixV();
  const auto& sv = dec.singularValues();
  Svd out{Matrix(a.rows(), static_cast<std::size_t>(sv.size())), Vector(static_cast<std::size_t>(sv.size())),
          Matrix(a.cols(), static_cast<std::size_t>(sv.size()))};
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out.singular[kk] = sv[k];
    for (Eigen::Index i = 0; i < u.rows(); ++i) out.u(static_cast<std::size_t>(i), kk) = u(i, k);
    for (Eigen::Index i = 0; i < v.rows(); ++i) out.v(static_cast<std::size_t>(i), kk) = v(i, k);
  }
  return out;
}

// Number of singular values above tol × largest.
inline std::size_t numerical_rank(const Matrix& a, double tol = 1e-10) {
  if (a.empty()) return 0;
  const Svd d = svd(a);
  const double smax = d.singular.empty() ? 0.0 : *std::max_element(d.singular.begin(), d.singular.end());
  if (smax == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(d.singular.begin(), d.singular.end(), [&](double s) { return s > tol * smax; }));
}

// Moore–Penrose inverse; singular values at or below tol × σ_max are treated as zero.
inline Matrix pseudo_inverse(const Matrix& a, double tol = 1e-10) {
  if (a.empty()) throw ValidationError("pseudo_inverse: empty matrix");
  const Svd d = svd(a);
  const double smax = *std::max_element(d.singular.begin(), d.singular.end());
  const std::size_t r = d.singular.size();
  Matrix out(a.cols(), a.rows());
  if (smax == 0.0) return out;
  for (std::size_t k = 0; k < r; ++k) {
    const double s = d.singular[k];
    if (s <= tol * smax) continue;
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double vik = d.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += vik * d.u(j, k);
    }
  }
  return out;
}

// argmin_b ‖y − Xb‖²; the minimum-norm solution when X is rank deficient.
inline Vector ols_fit(const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) throw ValidationError("ols_fit: design has " + std::to_string(x.rows()) +
                                                  " rows but target has " + std::to_string(y.size()));
  if (x.rows() < x.cols()) throw ValidationError("ols_fit: fewer observations than regressors");
  return matvec(pseudo_inverse(x), y);
}

}  // namespace ppa
