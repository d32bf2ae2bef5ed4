#pragma once

/// Cone machinery: small symmetric eigendecomposition, PSD/box/half-space
/// projections, moment-matrix assembly and the adjoint pullback that turns a
/// moment-space dual into lifted linear costs.

#include "tinysdp/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinysdp {

using MomentMatrix = Matrix;

namespace detail {

/// One Jacobi rotation annihilating A(p,q); V accumulates eigenvectors.
inline void jacobi_rotate(Matrix& A, Matrix& V, Index p, Index q)
{
  const double apq = A(p, q);
  if (apq == 0.0) return;
  const double tau = (A(q, q) - A(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const Index n = A.rows();
  for (Index k = 0; k < n; ++k) {
    const double akp = A(k, p);
    const double akq = A(k, q);
    A(k, p) = c * akp - s * akq;
    A(k, q) = s * akp + c * akq;
  }
  for (Index k = 0; k < n; ++k) {
    const double apk = A(p, k);
    const double aqk = A(q, k);
    A(p, k) = c * apk - s * aqk;
    A(q, k) = s * apk + c * aqk;
  }
  for (Index k = 0; k < n; ++k) {
    const double vkp = V(k, p);
    const double vkq = V(k, q);
    V(k, p) = c * vkp - s * vkq;
    V(k, q) = s * vkp + c * vkq;
  }
}

/// Cyclic Jacobi sweeps until the off-diagonal mass is negligible.
inline void eig_jacobi(const Matrix& A, Vector& lambda, Matrix& V)
{
  const Index n = A.rows();
  Matrix W = A;
  V = Matrix::Identity(n, n);
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        off = std::max(off, std::abs(W(p, q)));
      }
    }
    if (off <= 1e-14 * scale) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(W(p, q)) > 1e-16 * scale) {
          jacobi_rotate(W, V, p, q);
        }
      }
    }
  }
  lambda = W.diagonal();
}

/// Closed-form 2x2 symmetric eigendecomposition via a single rotation.
inline void eig_2x2(const Matrix& A, Vector& lambda, Matrix& V)
{
  lambda.resize(2);
  V.resize(2, 2);
  const double a = A(0, 0);
  const double b = A(0, 1);
  const double c = A(1, 1);
  if (std::abs(b) <= 1e-300) {
    lambda << a, c;
    V = Matrix::Identity(2, 2);
    return;
  }
  const double tau = (c - a) / (2.0 * b);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double cs = 1.0 / std::sqrt(1.0 + t * t);
  const double sn = t * cs;
  lambda << a - t * b, c + t * b;
  V << cs, sn, -sn, cs;
}

/// Robust unit eigenvector of a 3x3 symmetric matrix for eigenvalue lam,
/// assuming lam has a one-dimensional, well-separated eigenspace: the two
/// largest-norm cross products of rows of (A - lam I) agree up to sign.
inline Vector eigvec_3x3(const Matrix& A, double lam)
{
  Matrix R = A - lam * Matrix::Identity(3, 3);
  Eigen::Vector3d r0 = R.row(0), r1 = R.row(1), r2 = R.row(2);
  Eigen::Vector3d c01 = r0.cross(r1);
  Eigen::Vector3d c02 = r0.cross(r2);
  Eigen::Vector3d c12 = r1.cross(r2);
  double n01 = c01.squaredNorm(), n02 = c02.squaredNorm(), n12 = c12.squaredNorm();
  Eigen::Vector3d best = c01;
  double nb = n01;
  if (n02 > nb) { best = c02; nb = n02; }
  if (n12 > nb) { best = c12; nb = n12; }
  if (nb <= 0.0) {
    // rank deficiency beyond one: any unit vector in the nullspace works;
    // fall back to the column of the identity least aligned with R's range
    return Eigen::Vector3d::Unit(0);
  }
  return best / std::sqrt(nb);
}

/// Closed-form 3x3 symmetric eigendecomposition: trigonometric eigenvalues,
/// cross-product eigenvector for the most isolated eigenvalue, then a 2x2
/// solve on the orthogonal complement.
inline void eig_3x3(const Matrix& A, Vector& lambda, Matrix& V)
{
  lambda.resize(3);
  V.resize(3, 3);

  const double q = A.trace() / 3.0;
  Matrix B = A - q * Matrix::Identity(3, 3);
  const double p2 = (B * B).trace() / 6.0;
  const double p = std::sqrt(std::max(p2, 0.0));
  if (p <= 1e-14 * std::max(1.0, std::abs(q))) {
    lambda.setConstant(q);
    V = Matrix::Identity(3, 3);
    return;
  }
  const double detb = (B / p).determinant() / 2.0;
  const double phi = std::acos(std::clamp(detb, -1.0, 1.0)) / 3.0;
  const double l0 = q + 2.0 * p * std::cos(phi);                       // largest
  const double l2 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);    // smallest
  const double l1 = 3.0 * q - l0 - l2;

  // work on the eigenvalue farthest from the other two
  const bool use_max = (l0 - l1) >= (l1 - l2);
  const double iso = use_max ? l0 : l2;
  Eigen::Vector3d v0 = eigvec_3x3(A, iso);

  // orthonormal complement basis
  Eigen::Vector3d seed = std::abs(v0.x()) < 0.7 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  Eigen::Vector3d w1 = v0.cross(seed).normalized();
  Eigen::Vector3d w2 = v0.cross(w1);

  Matrix W(3, 2);
  W.col(0) = w1;
  W.col(1) = w2;
  Matrix A2 = W.transpose() * A * W;
  Vector lam2;
  Matrix V2;
  eig_2x2(A2, lam2, V2);

  Eigen::Vector3d u1 = W * V2.col(0);
  Eigen::Vector3d u2 = W * V2.col(1);

  if (use_max) {
    lambda << l0, lam2(0), lam2(1);
    V.col(0) = v0;
    V.col(1) = u1;
    V.col(2) = u2;
  } else {
    lambda << lam2(0), lam2(1), l2;
    V.col(0) = u1;
    V.col(1) = u2;
    V.col(2) = v0;
  }
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix: closed form up to 3x3, cyclic
/// Jacobi beyond. Columns of V are unit eigenvectors for lambda's entries.
inline void eig_sym(const Matrix& A, Vector& lambda, Matrix& V)
{
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("eig_sym: matrix must be square");
  }
  if (!A.allFinite()) {
    throw std::invalid_argument("eig_sym: non-finite input");
  }
  const Index n = A.rows();
  switch (n) {
    case 1:
      lambda = A.diagonal();
      V = Matrix::Identity(1, 1);
      break;
    case 2:
      detail::eig_2x2(A, lambda, V);
      break;
    case 3:
      detail::eig_3x3(A, lambda, V);
      break;
    default:
      detail::eig_jacobi(A, lambda, V);
      break;
  }
}

/// Nearest PSD matrix in Frobenius norm: clamp negative eigenvalues to zero.
inline Matrix project_psd(const Matrix& Y)
{
  Matrix S = 0.5 * (Y + Y.transpose());
  Vector lambda;
  Matrix V;
  eig_sym(S, lambda, V);
  bool clamped = false;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0) {
      lambda[i] = 0.0;
      clamped = true;
    }
  }
  if (!clamped) return S;
  Matrix P = V * lambda.asDiagonal() * V.transpose();
  return 0.5 * (P + P.transpose());
}

/// PSD projection on svec-stored data.
inline Vector project_psd_svec(const Vector& s)
{
  return svec(project_psd(smat(s)));
}

/// Elementwise clamp to [lo, hi].
inline Vector project_box(const Vector& v, const Vector& lo, const Vector& hi)
{
  if (v.size() != lo.size() || v.size() != hi.size()) {
    throw std::invalid_argument("project_box: dimension mismatch");
  }
  return v.cwiseMax(lo).cwiseMin(hi);
}

/// Slack for a scalar inequality g >= 0.
inline double project_obstacle_slack(double g)
{
  return std::max(g, 0.0);
}

/// Moment matrix of one stage. Full block [1 x' u'; x X XU; u UX UU] or the
/// position block [1 p'; p Xp]; symmetrized on assembly.
inline MomentMatrix assemble_moment(const Vector& xb, const Vector& ub, const LiftedSystem& L,
                                    MomentBlock block = MomentBlock::full)
{
  const Index n = L.nx;
  const Index m = L.nu;
  if (xb.size() != L.nbar_x() || ub.size() != L.nbar_u()) {
    throw std::invalid_argument("assemble_moment: dimension mismatch");
  }
  if (block == MomentBlock::full) {
    const Index p = 1 + n + m;
    Matrix M(p, p);
    M(0, 0) = 1.0;
    M.block(1, 0, n, 1) = xb.head(n);
    M.block(1 + n, 0, m, 1) = ub.head(m);
    M.block(0, 1, 1, n) = xb.head(n).transpose();
    M.block(0, 1 + n, 1, m) = ub.head(m).transpose();
    M.block(1, 1, n, n) = unvec(xb.tail(n * n), n, n);
    M.block(1, 1 + n, n, m) = unvec(ub.segment(m, n * m), n, m);
    M.block(1 + n, 1, m, n) = unvec(ub.segment(m + n * m, m * n), m, n);
    M.block(1 + n, 1 + n, m, m) = unvec(ub.tail(m * m), m, m);
    return 0.5 * (M + M.transpose());
  }

  const Index d = L.dim();
  Matrix M(1 + d, 1 + d);
  M(0, 0) = 1.0;
  const Matrix X = unvec(xb.tail(n * n), n, n);
  for (Index i = 0; i < d; ++i) {
    const Index a = L.pos_rows[static_cast<std::size_t>(i)];
    M(1 + i, 0) = M(0, 1 + i) = xb[a];
    for (Index j = 0; j < d; ++j) {
      const Index b = L.pos_rows[static_cast<std::size_t>(j)];
      M(1 + i, 1 + j) = X(a, b);
    }
  }
  return 0.5 * (M + M.transpose());
}

/// Pullback of a moment-space dual T into lifted linear costs: dq, dr are
/// the coefficients of -rho <T, M(xb, ub)>. Physical entries occupy two
/// slots of M, lifted entries one.
inline void adjoint_moment(const Matrix& T, const LiftedSystem& L, double rho,
                           MomentBlock block, Vector& dq, Vector& dr)
{
  const Index n = L.nx;
  const Index m = L.nu;
  dq = Vector::Zero(L.nbar_x());
  dr = Vector::Zero(L.nbar_u());
  const Matrix Ts = 0.5 * (T + T.transpose());

  if (block == MomentBlock::full) {
    if (Ts.rows() != 1 + n + m) {
      throw std::invalid_argument("adjoint_moment: dual dimension mismatch");
    }
    for (Index i = 0; i < n; ++i) {
      dq[i] = -2.0 * rho * Ts(1 + i, 0);
    }
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        dq[n + i + j * n] = -rho * Ts(1 + i, 1 + j);
      }
    }
    for (Index i = 0; i < m; ++i) {
      dr[i] = -2.0 * rho * Ts(1 + n + i, 0);
    }
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        dr[m + i + j * n] = -rho * Ts(1 + i, 1 + n + j);
      }
    }
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < m; ++i) {
        dr[m + n * m + i + j * m] = -rho * Ts(1 + n + i, 1 + j);
      }
    }
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < m; ++i) {
        dr[m + 2 * n * m + i + j * m] = -rho * Ts(1 + n + i, 1 + n + j);
      }
    }
    return;
  }

  const Index d = L.dim();
  if (Ts.rows() != 1 + d) {
    throw std::invalid_argument("adjoint_moment: dual dimension mismatch");
  }
  for (Index i = 0; i < d; ++i) {
    const Index a = L.pos_rows[static_cast<std::size_t>(i)];
    dq[a] = -2.0 * rho * Ts(1 + i, 0);
    for (Index j = 0; j < d; ++j) {
      const Index b = L.pos_rows[static_cast<std::size_t>(j)];
      dq[n + a + b * n] = -rho * Ts(1 + i, 1 + j);
    }
  }
}

}  // namespace tinysdp
