#pragma once

// Small fixtures shared by the unit tests.

#include <cstdint>
#include <vector>

#include "ppa/dataset.hpp"
#include "ppa/linalg.hpp"
#include "ppa/random.hpp"

namespace ppa::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, sigma);
  return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double sigma = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.normal(0.0, sigma);
  return v;
}

// Textbook triple loop, kept separate from the library kernel.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Small generator draw that trains in milliseconds.
inline SyntheticSpec tiny_spec(std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.train = {{300, 100}, 0.9};
  s.val = {{200, 200}, 0.5};
  s.test = {{400, 400}, 0.9};
  s.seed = seed;
  return s;
}

}  // namespace ppa::testing
