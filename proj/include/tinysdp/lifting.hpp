#pragma once

/// Second-order lifting of a linear system: Kronecker algebra, symmetric
/// vectorization, lifted dynamics and the diagonal moment-penalty weights.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace tinysdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Kronecker product A (x) B.
inline Matrix kron(const Matrix& A, const Matrix& B)
{
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    }
  }
  return K;
}

/// Column-major stacking, vec(A).
inline Vector vec(const Matrix& A)
{
  return Eigen::Map<const Vector>(A.data(), A.size());
}

/// Inverse of vec for a rows x cols matrix.
inline Matrix unvec(const Vector& v, Index rows, Index cols)
{
  if (v.size() != rows * cols) {
    throw std::invalid_argument("unvec: size mismatch");
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

/// Triangular size p(p+1)/2 for a p x p symmetric matrix.
inline Index svec_size(Index p) { return p * (p + 1) / 2; }

/// Recover p from a triangular size; throws if n is not triangular.
inline Index smat_dim(Index n)
{
  const Index p = static_cast<Index>((std::sqrt(8.0 * static_cast<double>(n) + 1.0) - 1.0) / 2.0 + 0.5);
  if (svec_size(p) != n) {
    throw std::invalid_argument("smat: length is not a triangular number");
  }
  return p;
}

/// Scaled half-vectorization of a symmetric matrix, lower triangle in
/// column-major order, off-diagonal entries scaled by sqrt(2) so that
/// svec(A).dot(svec(B)) equals the Frobenius inner product <A, B>.
inline Vector svec(const Matrix& S)
{
  const Index p = S.rows();
  if (S.cols() != p) {
    throw std::invalid_argument("svec: matrix must be square");
  }
  const double rt2 = std::sqrt(2.0);
  Vector out(svec_size(p));
  Index k = 0;
  for (Index j = 0; j < p; ++j) {
    out[k++] = S(j, j);
    for (Index i = j + 1; i < p; ++i) {
      out[k++] = rt2 * 0.5 * (S(i, j) + S(j, i));
    }
  }
  return out;
}

/// Inverse of svec.
inline Matrix smat(const Vector& s)
{
  const Index p = smat_dim(s.size());
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  Matrix S(p, p);
  Index k = 0;
  for (Index j = 0; j < p; ++j) {
    S(j, j) = s[k++];
    for (Index i = j + 1; i < p; ++i) {
      S(i, j) = S(j, i) = inv_rt2 * s[k++];
    }
  }
  return S;
}

/// Discrete-time linear system x+ = A x + B u with designated position rows.
struct LinearSystem {
  Matrix A;
  Matrix B;
  double dt = 0.0;
  std::vector<Index> pos_rows;

  Index nx() const { return A.rows(); }
  Index nu() const { return B.cols(); }
  Index dim() const { return static_cast<Index>(pos_rows.size()); }
};

/// Lifted system over [x; vec(X)] and [u; vec(XU); vec(UX); vec(UU)].
struct LiftedSystem {
  Matrix A;   // (nx + nx^2) square
  Matrix B;   // (nx + nx^2) x (nu + 2 nx nu + nu^2)
  Matrix Cx;  // physical state selector
  Matrix Cu;  // physical input selector
  Matrix Cp;  // position selector, Cp = P * Cx
  Index nx = 0;
  Index nu = 0;
  std::vector<Index> pos_rows;

  Index nbar_x() const { return nx + nx * nx; }
  Index nbar_u() const { return nu + 2 * nx * nu + nu * nu; }
  Index dim() const { return static_cast<Index>(pos_rows.size()); }
};

/// Build the lifted dynamics. The quadratic block evolves as
/// X+ = A X A' + A XU B' + B UX A' + B UU B', stacked column-major.
inline LiftedSystem build_lifted_system(const LinearSystem& sys)
{
  const Index n = sys.nx();
  const Index m = sys.nu();
  if (sys.A.cols() != n || sys.B.rows() != n) {
    throw std::invalid_argument("build_lifted_system: A/B dimension mismatch");
  }
  for (Index r : sys.pos_rows) {
    if (r < 0 || r >= n) {
      throw std::invalid_argument("build_lifted_system: position row out of range");
    }
  }

  LiftedSystem L;
  L.nx = n;
  L.nu = m;
  L.pos_rows = sys.pos_rows;

  const Index nbx = L.nbar_x();
  const Index nbu = L.nbar_u();

  L.A = Matrix::Zero(nbx, nbx);
  L.A.topLeftCorner(n, n) = sys.A;
  L.A.bottomRightCorner(n * n, n * n) = kron(sys.A, sys.A);

  L.B = Matrix::Zero(nbx, nbu);
  L.B.topLeftCorner(n, m) = sys.B;
  L.B.block(n, m, n * n, n * m) = kron(sys.B, sys.A);
  L.B.block(n, m + n * m, n * n, m * n) = kron(sys.A, sys.B);
  L.B.block(n, m + 2 * n * m, n * n, m * m) = kron(sys.B, sys.B);

  L.Cx = Matrix::Zero(n, nbx);
  L.Cx.leftCols(n) = Matrix::Identity(n, n);
  L.Cu = Matrix::Zero(m, nbu);
  L.Cu.leftCols(m) = Matrix::Identity(m, m);

  const Index d = L.dim();
  L.Cp = Matrix::Zero(d, nbx);
  for (Index i = 0; i < d; ++i) {
    L.Cp(i, sys.pos_rows[static_cast<std::size_t>(i)]) = 1.0;
  }
  return L;
}

/// Rank-consistent lift [x; vec(x x')].
inline Vector lift_state(const LiftedSystem& L, const Vector& x)
{
  if (x.size() != L.nx) {
    throw std::invalid_argument("lift_state: state dimension mismatch");
  }
  Vector xb(L.nbar_x());
  xb.head(L.nx) = x;
  xb.tail(L.nx * L.nx) = vec(x * x.transpose());
  return xb;
}

/// Lifted input [u; vec(x u'); vec(u x'); vec(u u')] that makes the lifted
/// dynamics commute with lifting: A_bar lift(x) + B_bar this = lift(A x + B u).
inline Vector exact_lifted_input(const LiftedSystem& L, const Vector& x, const Vector& u)
{
  if (x.size() != L.nx || u.size() != L.nu) {
    throw std::invalid_argument("exact_lifted_input: dimension mismatch");
  }
  const Index n = L.nx;
  const Index m = L.nu;
  Vector ub(L.nbar_u());
  ub.head(m) = u;
  ub.segment(m, n * m) = vec(x * u.transpose());
  ub.segment(m + n * m, m * n) = vec(u * x.transpose());
  ub.tail(m * m) = vec(u * u.transpose());
  return ub;
}

/// Which moment block the PSD constraint acts on.
enum class MomentBlock { full, position };

/// Moment side length: 1 + nx + nu for the full block, 1 + d for position.
inline Index moment_dim(const LiftedSystem& L, MomentBlock block)
{
  return block == MomentBlock::full ? 1 + L.nx + L.nu : 1 + L.dim();
}

/// Multiplicity weights of each lifted coordinate in the moment matrix:
/// ||M(xb, ub)||_F^2 = 1 + sum_i wx_i xb_i^2 + sum_i wu_i ub_i^2 for the
/// termwise assembly (physical entries appear twice, lifted entries once).
inline void moment_weights(const LiftedSystem& L, MomentBlock block, Vector& wx, Vector& wu)
{
  const Index n = L.nx;
  const Index m = L.nu;
  wx = Vector::Zero(L.nbar_x());
  wu = Vector::Zero(L.nbar_u());
  if (block == MomentBlock::full) {
    wx.head(n).setConstant(2.0);
    wx.tail(n * n).setOnes();
    wu.setOnes();
    wu.head(m).setConstant(2.0);
  } else {
    for (Index a : L.pos_rows) {
      wx[a] = 2.0;
      for (Index b : L.pos_rows) {
        wx[n + a + b * n] = 1.0;
      }
    }
  }
}

/// Extra penalty quadratics folded into the lifted cost.
struct CostOptions {
  double rho_box = 0.0;                  // box-consensus weight on physical inputs
  MomentBlock block = MomentBlock::full; // which moment block the PSD penalty covers
  double lift_ridge = 1e-8;              // determinacy ridge on the lifted coordinates
  double trace_gap_weight = 0.0;         // weight of the trace-gap drain on the
                                         // position moments (see build_lifted_cost)
};

/// Stage costs for the lifted problem. Qhat/Rhat are the recursion-ready
/// quadratic weights of the stage objective 0.5 z'Qhat z + q'z, i.e. the
/// physical tracking cost plus the folded moment and box penalty quadratics.
struct LiftedCost {
  Matrix Qbar;   // Cx' Q Cx
  Matrix Rbar;   // Cu' R Cu
  Matrix Qfbar;  // Cx' Qf Cx
  Vector wx;     // moment multiplicities, state part
  Vector wu;     // moment multiplicities, input part
  Matrix Qhat;   // 2 Qbar + rho_psd diag(wx) + ridge - 2 lambda on position rows
  Matrix Rhat;   // 2 Rbar + rho_psd diag(wu) + rho_box E_u + ridge
  Matrix Qfhat;  // 2 Qfbar - 2 lambda on position rows
  Vector q_ref;  // stage linear term tracking the goal, plus the drain constant
  Vector r_ref;  // stage input linear term (zero for pure goal tracking)
  Vector gap_x;  // +lambda on the lifted position diagonal (linear half of the drain)
  Vector qf_gap; // terminal drain gradient, referenced for the recentred terminal
};

/// Linear stage term steering the physical state toward a goal. The terminal
/// term is assembled by the solver, which recentres the cached steady-state
/// quadratic at the latest plan so the effective terminal cost is Qfhat.
inline Vector goal_linear_term(const LiftedSystem& L, const LiftedCost& cost, const Vector& x_goal)
{
  return -2.0 * (cost.Qbar * lift_state(L, x_goal));
}

/// Fold physical costs and penalty quadratics into recursion-ready weights.
/// Every lifted coordinate gets a small ridge: it keeps the input cost
/// strictly positive definite where the moment penalty leaves coordinates
/// uncovered (position-only block), and it makes the otherwise cost-free
/// lifted coordinates determinate, selecting the rank-consistent moments
/// among the optima instead of leaving them to drift.
///
/// trace_gap_weight adds lambda * (trace(Xp) - |p|^2) to every stage and the
/// terminal. The term is identically zero on exact lifts, so it never moves
/// the physical optimum; off the rank-1 manifold it is the restoring force
/// that the otherwise gap-blind tracking cost lacks. Without it the set of
/// fixed points is a continuum parametrized by whatever trace inflation the
/// transient injected; with it the tight (rank-consistent) point is the
/// unique optimum and the gap decays geometrically instead of freezing.
/// Convexity needs lambda < lambda_min(Q_pos) + rho_psd, which is checked.
inline LiftedCost build_lifted_cost(const LiftedSystem& L, const Matrix& Q, const Matrix& R,
                                    const Matrix& Qf, const Vector& x_goal, double rho_psd,
                                    const CostOptions& opts = {})
{
  if (Q.rows() != L.nx || Q.cols() != L.nx || R.rows() != L.nu || R.cols() != L.nu ||
      Qf.rows() != L.nx || Qf.cols() != L.nx) {
    throw std::invalid_argument("build_lifted_cost: cost dimension mismatch");
  }
  if (rho_psd <= 0.0 || opts.rho_box < 0.0 || opts.lift_ridge < 0.0 ||
      opts.trace_gap_weight < 0.0) {
    throw std::invalid_argument("build_lifted_cost: invalid penalty weights");
  }

  LiftedCost c;
  c.Qbar = L.Cx.transpose() * Q * L.Cx;
  c.Rbar = L.Cu.transpose() * R * L.Cu;
  c.Qfbar = L.Cx.transpose() * Qf * L.Cx;
  moment_weights(L, opts.block, c.wx, c.wu);

  Vector ridge_x = Vector::Zero(L.nbar_x());
  Vector ridge_u = Vector::Zero(L.nbar_u());
  ridge_x.tail(L.nbar_x() - L.nx).setConstant(opts.lift_ridge);
  ridge_u.tail(L.nbar_u() - L.nu).setConstant(opts.lift_ridge);

  Vector eu = Vector::Zero(L.nbar_u());
  eu.head(L.nu).setOnes();

  c.Qhat = 2.0 * c.Qbar;
  c.Qhat.diagonal() += rho_psd * c.wx + ridge_x;
  c.Rhat = 2.0 * c.Rbar;
  c.Rhat.diagonal() += rho_psd * c.wu + opts.rho_box * eu + ridge_u;
  c.Qfhat = 2.0 * c.Qfbar;

  c.gap_x = Vector::Zero(L.nbar_x());
  c.qf_gap = Vector::Zero(L.nbar_x());
  if (opts.trace_gap_weight > 0.0) {
    const double lam = opts.trace_gap_weight;
    for (Index a : L.pos_rows) {
      c.Qhat(a, a) -= 2.0 * lam;
      c.Qfhat(a, a) -= 2.0 * lam;
      c.gap_x[L.nx + a + a * L.nx] = lam;
      // the terminal linear term is recentred through Qfhat*(x - goal), but
      // the drain carries no goal reference; this constant removes the
      // spurious -2 lam goal term that folding lam into Qfhat introduces
      c.qf_gap[a] = -2.0 * lam * x_goal[a];
    }
    c.qf_gap += c.gap_x;
  }

  if (opts.trace_gap_weight > 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(c.Qhat, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument(
          "build_lifted_cost: trace-gap drain exceeds the state cost curvature");
    }
  }
  Eigen::LLT<Matrix> llt(c.Rhat);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("build_lifted_cost: input cost is not positive definite");
  }
  c.q_ref = goal_linear_term(L, c, x_goal) + c.gap_x;
  c.r_ref = Vector::Zero(L.nbar_u());
  return c;
}

}  // namespace tinysdp
