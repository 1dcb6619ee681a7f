#pragma once

#include <cstddef>

#include "ppa/dataset.hpp"
#include "ppa/linalg.hpp"

namespace ppa {

// Orthogonal projector onto the nullspace of the class-proxy rows.
struct ProjectionOperator {
  Matrix pi;                    // d×d
  std::size_t source_rank = 0;  // effective rank of the proxy matrix

  std::size_t dim() const noexcept { return pi.rows(); }
};

// Π = I − Zᵀ(ZZᵀ)⁺Z over L2-normalized proxy rows. Linearly dependent proxies
// are absorbed by the pseudo-inverse and show up as source_rank < K.
inline ProjectionOperator build_projection(const Matrix& z, double tol = 1e-10) {
  if (z.empty()) throw ValidationError("build_projection: empty proxy matrix");
  Matrix zn = z;
  for (std::size_t k = 0; k < zn.rows(); ++k) {
    auto r = zn.row(k);
    const double n = norm2(r);
    if (n == 0.0) throw ValidationError("build_projection: proxy row " + std::to_string(k) + " has zero norm");
    for (double& v : r) v /= n;
  }
  const Matrix gram = matmul_transposed(zn, zn);  // K×K
  const Matrix gram_pinv = pseudo_inverse(gram, tol);
  const Matrix zt = transpose(zn);
  const Matrix p = matmul(matmul(zt, gram_pinv), zn);  // projector onto row space
  Matrix pi = subtract(Matrix::identity(zn.cols()), p);
  // Exact symmetry; the two triangles differ only by rounding.
  for (std::size_t i = 0; i < pi.rows(); ++i)
    for (std::size_t j = i + 1; j < pi.cols(); ++j) {
      const double m = 0.5 * (pi(i, j) + pi(j, i));
      pi(i, j) = m;
      pi(j, i) = m;
    }
  return {std::move(pi), numerical_rank(gram, tol)};
}

inline ProjectionOperator build_projection(const ClassProxyMatrix& z, double tol = 1e-10) {
  return build_projection(z.proxies, tol);
}

// Row-wise Πx, i.e. X·Πᵀ (= X·Π since Π is symmetric).
inline Matrix project_features(const ProjectionOperator& op, const Matrix& x) {
  if (op.pi.cols() != x.cols())
    throw ValidationError("project_features: operator is " + std::to_string(op.pi.cols()) + "-dimensional, features are " +
                          std::to_string(x.cols()) + "-dimensional");
  return matmul_transposed(x, op.pi);
}

inline Matrix project_features(const ProjectionOperator& op, const FeatureDataset& ds) {
  return project_features(op, ds.features());
}

}  // namespace ppa
