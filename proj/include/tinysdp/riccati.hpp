#pragma once

/// Steady-state Riccati cache (offline) and the cached backward/forward
/// sweeps (online). Operates on plain dense matrices so the same machinery
/// serves the lifted problem and the unlifted baseline.

#include "tinysdp/errors.hpp"
#include "tinysdp/lifting.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

namespace tinysdp {

/// Frozen quantities of the infinite-horizon problem. C1 and C2 are the
/// factor pair that makes the online sweeps matrix-multiply only:
/// C1 = (R + B'P B)^-1, C2 = (A - B K)'.
struct RiccatiCache {
  Matrix A;
  Matrix B;
  Matrix K;   // steady-state gain
  Matrix P;   // steady-state cost-to-go
  Matrix C1;
  Matrix C2;
  Index N = 0;
  double residual = 0.0;     // fixed-point residual achieved
  std::uint64_t config_hash = 0;

  Index nx() const { return A.rows(); }
  Index nu() const { return B.cols(); }
};

/// Per-stage linear costs with the derived feedforward and cost-to-go terms.
struct LinearCostSweep {
  std::vector<Vector> q;  // N+1 state linear costs
  std::vector<Vector> r;  // N input linear costs
  std::vector<Vector> d;  // N feedforward terms
  std::vector<Vector> p;  // N+1 linear cost-to-go terms
};

/// One step of the quadratic cost-to-go recursion.
inline Matrix riccati_step(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                           const Matrix& P)
{
  const Matrix BtP = B.transpose() * P;
  const Matrix G = R + BtP * B;
  const Matrix K = G.llt().solve(BtP * A);
  Matrix Pn = Q + A.transpose() * P * (A - B * K);
  return 0.5 * (Pn + Pn.transpose());
}

/// Iterate the cost-to-go recursion from Qf until the relative change drops
/// below tol. Throws NonConvergenceError when the cap is hit, which signals
/// an unstabilizable pair or an indefinite cost.
inline RiccatiCache compute_cache(const Matrix& A, const Matrix& B, const Matrix& Q,
                                  const Matrix& R, const Matrix& Qf, Index N,
                                  double tol = 1e-10, int max_iter = 10000)
{
  const Index n = A.rows();
  const Index m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || R.rows() != m || Qf.rows() != n) {
    throw std::invalid_argument("compute_cache: dimension mismatch");
  }

  Matrix P = 0.5 * (Qf + Qf.transpose());
  double rel = 0.0;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Matrix Pn = riccati_step(A, B, Q, R, P);
    if (!Pn.allFinite()) {
      throw NonFiniteError("compute_cache: diverging cost-to-go iterate");
    }
    rel = (Pn - P).norm() / std::max(1.0, Pn.norm());
    P = Pn;
    if (rel <= tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NonConvergenceError("compute_cache: no fixed point after max_iter iterations");
  }

  RiccatiCache cache;
  cache.A = A;
  cache.B = B;
  cache.P = P;
  const Matrix BtP = B.transpose() * P;
  const Matrix G = R + BtP * B;
  cache.C1 = G.llt().solve(Matrix::Identity(m, m));
  cache.K = cache.C1 * (BtP * A);
  cache.C2 = (A - B * cache.K).transpose();
  cache.N = N;
  cache.residual = rel;
  return cache;
}

/// Cache for a lifted problem with recursion-ready costs.
inline RiccatiCache compute_cache(const LiftedSystem& L, const LiftedCost& cost, Index N,
                                  double tol = 1e-10, int max_iter = 10000)
{
  return compute_cache(L.A, L.B, cost.Qhat, cost.Rhat, cost.Qfhat, N, tol, max_iter);
}

/// Backward sweep for the linear terms: p_N = q_N, then
/// d_k = C1 (B'p_{k+1} + r_k), p_k = q_k + C2 p_{k+1} - K' r_k.
inline LinearCostSweep backward_pass(const RiccatiCache& cache, std::vector<Vector> q,
                                     std::vector<Vector> r)
{
  const Index N = cache.N;
  if (static_cast<Index>(q.size()) != N + 1 || static_cast<Index>(r.size()) != N) {
    throw std::invalid_argument("backward_pass: need N+1 state and N input cost stages");
  }
  LinearCostSweep sweep;
  sweep.q = std::move(q);
  sweep.r = std::move(r);
  sweep.d.assign(static_cast<std::size_t>(N), Vector());
  sweep.p.assign(static_cast<std::size_t>(N) + 1, Vector());

  sweep.p[static_cast<std::size_t>(N)] = sweep.q[static_cast<std::size_t>(N)];
  for (Index k = N - 1; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vector& pn = sweep.p[ks + 1];
    sweep.d[ks] = cache.C1 * (cache.B.transpose() * pn + sweep.r[ks]);
    sweep.p[ks] = sweep.q[ks] + cache.C2 * pn - cache.K.transpose() * sweep.r[ks];
  }
  return sweep;
}

/// Forward rollout under the cached gain: u_k = -K x_k - d_k.
inline void forward_rollout(const RiccatiCache& cache, const LinearCostSweep& sweep,
                            const Vector& x0, std::vector<Vector>& xs, std::vector<Vector>& us)
{
  const Index N = cache.N;
  xs.assign(static_cast<std::size_t>(N) + 1, Vector());
  us.assign(static_cast<std::size_t>(N), Vector());
  xs[0] = x0;
  for (Index k = 0; k < N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    us[ks] = -(cache.K * xs[ks]) - sweep.d[ks];
    xs[ks + 1] = cache.A * xs[ks] + cache.B * us[ks];
  }
}

namespace detail {

inline void write_matrix(std::ostream& out, const Matrix& M)
{
  const std::int64_t rows = M.rows();
  const std::int64_t cols = M.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(M.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(M.size())));
}

inline Matrix read_matrix(std::istream& in)
{
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || rows < 0 || cols < 0 || rows * cols > (1 << 26)) {
    throw std::runtime_error("cache file: corrupt matrix header");
  }
  Matrix M(rows, cols);
  in.read(reinterpret_cast<char*>(M.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(M.size())));
  if (!in) {
    throw std::runtime_error("cache file: truncated matrix payload");
  }
  return M;
}

}  // namespace detail

inline constexpr std::uint32_t kCacheFormatVersion = 1;

/// Serialize the cache with a format version and the builder's config hash.
inline void save_cache(const RiccatiCache& cache, const std::string& path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("save_cache: cannot open " + path);
  }
  const char magic[8] = {'T', 'S', 'D', 'P', 'C', 'A', 'C', 'H'};
  out.write(magic, sizeof magic);
  const std::uint32_t version = kCacheFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&cache.config_hash), sizeof cache.config_hash);
  const std::int64_t N = cache.N;
  out.write(reinterpret_cast<const char*>(&N), sizeof N);
  out.write(reinterpret_cast<const char*>(&cache.residual), sizeof cache.residual);
  detail::write_matrix(out, cache.A);
  detail::write_matrix(out, cache.B);
  detail::write_matrix(out, cache.K);
  detail::write_matrix(out, cache.P);
  detail::write_matrix(out, cache.C1);
  detail::write_matrix(out, cache.C2);
  if (!out) {
    throw std::runtime_error("save_cache: write failed for " + path);
  }
}

/// Load a serialized cache; rejects wrong magic or format version. The
/// caller compares config_hash against the current configuration and
/// rebuilds on mismatch.
inline RiccatiCache load_cache(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_cache: cannot open " + path);
  }
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::string(magic, 8) != "TSDPCACH") {
    throw std::runtime_error("load_cache: not a cache file");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCacheFormatVersion) {
    throw std::runtime_error("load_cache: unsupported format version");
  }
  RiccatiCache cache;
  in.read(reinterpret_cast<char*>(&cache.config_hash), sizeof cache.config_hash);
  std::int64_t N = 0;
  in.read(reinterpret_cast<char*>(&N), sizeof N);
  in.read(reinterpret_cast<char*>(&cache.residual), sizeof cache.residual);
  cache.N = N;
  cache.A = detail::read_matrix(in);
  cache.B = detail::read_matrix(in);
  cache.K = detail::read_matrix(in);
  cache.P = detail::read_matrix(in);
  cache.C1 = detail::read_matrix(in);
  cache.C2 = detail::read_matrix(in);
  return cache;
}

}  // namespace tinysdp
