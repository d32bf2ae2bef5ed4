#pragma once

/// PSD-relaxed lifted MPC: ADMM loop alternating a cached Riccati primal
/// step with closed-form projections for the box, obstacle half-space and
/// PSD consensus families, plus scaled dual updates.

#include "tinysdp/certificate.hpp"
#include "tinysdp/cones.hpp"
#include "tinysdp/errors.hpp"
#include "tinysdp/riccati.hpp"

#include <utility>
#include <vector>

namespace tinysdp {

struct SolverConfig {
  double rho_psd = 1.0;
  double rho_box = 1.0;
  double rho_obs = 1.0;
  double gamma_psd = 1.0;   // under-relaxation of the PSD dual step
  double eps_primal = 1e-3;
  double eps_dual = 1e-3;
  int max_iter = 100;
  Index N = 20;
  MomentBlock psd_block = MomentBlock::full;
  double lift_ridge = 1e-8;
  double obstacle_pad = 0.0;  // keep-out radii enlarged by this much inside the
                              // solver only; covers the finite penalty-equilibrium
                              // standoff and the per-step sampling resolution
  double trace_gap_weight = 0.0;  // optional drain pulling the position moments
                                  // onto the rank-1 manifold; zero on exact lifts,
                                  // so the physical optimum is untouched. Off by
                                  // default: with active box or obstacle families
                                  // the drain churns against the moving plan
  Vector u_lo;              // empty = unbounded inputs
  Vector u_hi;

  bool has_box() const { return u_lo.size() > 0; }

  void validate() const
  {
    if (rho_psd <= 0.0 || rho_box <= 0.0 || rho_obs <= 0.0) {
      throw std::invalid_argument("SolverConfig: penalties must be positive");
    }
    if (gamma_psd <= 0.0 || gamma_psd > 1.0) {
      throw std::invalid_argument("SolverConfig: gamma_psd must lie in (0,1]");
    }
    if (max_iter < 1 || N < 1) {
      throw std::invalid_argument("SolverConfig: max_iter and N must be at least 1");
    }
    if (obstacle_pad < 0.0) {
      throw std::invalid_argument("SolverConfig: obstacle_pad must be nonnegative");
    }
    if (trace_gap_weight < 0.0) {
      throw std::invalid_argument("SolverConfig: trace_gap_weight must be nonnegative");
    }
    if (u_lo.size() != u_hi.size()) {
      throw std::invalid_argument("SolverConfig: bound dimensions differ");
    }
    if (has_box() && ((u_hi - u_lo).minCoeff() < 0.0)) {
      throw std::invalid_argument("SolverConfig: lower bound exceeds upper bound");
    }
  }
};

/// Folds the penalty quadratics the config implies into the lifted cost.
/// The box weight enters only when bounds are present; an uncompensated
/// quadratic would bias the unconstrained solution.
inline LiftedCost build_solver_cost(const LiftedSystem& L, const Matrix& Q, const Matrix& R,
                                    const Matrix& Qf, const Vector& x_goal, const SolverConfig& cfg)
{
  CostOptions opts;
  opts.rho_box = cfg.has_box() ? cfg.rho_box : 0.0;
  opts.block = cfg.psd_block;
  opts.lift_ridge = cfg.lift_ridge;
  opts.trace_gap_weight = cfg.trace_gap_weight;
  return build_lifted_cost(L, Q, R, Qf, x_goal, cfg.rho_psd, opts);
}

struct Solution {
  std::vector<Vector> x;     // physical states, N+1
  std::vector<Vector> u;     // physical inputs, N
  std::vector<Vector> xbar;  // lifted states, N+1
  std::vector<Matrix> M;     // assembled moment matrix per stage, N
  std::vector<Matrix> Xp;    // position moment block per stage, N+1
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
};

struct SolverWorkspace {
  LiftedSystem lifted;
  LiftedCost cost;
  Vector x_goal;
  RiccatiCache phys;         // true-weight physical cache for the cold start

  std::vector<Vector> xbar;  // N+1 lifted states (latest primal)
  std::vector<Vector> ubar;  // N lifted inputs
  std::vector<Vector> zu;    // N box slacks (physical inputs)
  std::vector<Vector> yu;    // N box duals
  std::vector<std::vector<double>> s_obs;  // (N+1) x J obstacle slacks
  std::vector<std::vector<double>> y_obs;  // (N+1) x J obstacle duals
  std::vector<Vector> S;     // N svec PSD slacks
  std::vector<Vector> H;     // N svec PSD duals

  std::vector<Vector> q;     // N+1 assembled state linear costs
  std::vector<Vector> r;     // N assembled input linear costs

  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
  bool has_plan = false;

  void init(const LiftedSystem& L, const LiftedCost& c, const SolverConfig& cfg, const Vector& goal)
  {
    cfg.validate();
    if (cfg.has_box() && cfg.u_lo.size() != L.nu) {
      throw std::invalid_argument("SolverWorkspace: bound dimension mismatch");
    }
    lifted = L;
    cost = c;
    x_goal = goal;
    // the cold start rolls out the physical problem under its true weights;
    // the augmented lifted gains would seed the weakly-penalized lifted
    // coordinates O(1) away from the fixed point
    phys = compute_cache(Matrix(L.Cx * L.A * L.Cx.transpose()),
                         Matrix(L.Cx * L.B * L.Cu.transpose()),
                         Matrix(L.Cx * c.Qbar * L.Cx.transpose()),
                         Matrix(L.Cu * c.Rbar * L.Cu.transpose()),
                         Matrix(L.Cx * c.Qfbar * L.Cx.transpose()), cfg.N);
    const auto N = static_cast<std::size_t>(cfg.N);
    const Index sdim = svec_size(moment_dim(L, cfg.psd_block));
    xbar.assign(N + 1, Vector::Zero(L.nbar_x()));
    ubar.assign(N, Vector::Zero(L.nbar_u()));
    zu.assign(N, Vector::Zero(L.nu));
    yu.assign(N, Vector::Zero(L.nu));
    s_obs.assign(N + 1, {});
    y_obs.assign(N + 1, {});
    S.assign(N, Vector::Zero(sdim));
    H.assign(N, Vector::Zero(sdim));
    q.assign(N + 1, Vector::Zero(L.nbar_x()));
    r.assign(N, Vector::Zero(L.nbar_u()));
    primal_res = dual_res = 0.0;
    iterations = 0;
    has_plan = false;
  }

  void resize_obstacles(std::size_t count)
  {
    for (auto& row : s_obs) row.assign(count, 0.0);
    for (auto& row : y_obs) row.assign(count, 0.0);
  }
};

namespace detail {

/// Lifted obstacle margin g = trace(Xp) - 2 c'p + |c|^2 - r^2 read off a
/// lifted state vector.
inline double lifted_obstacle_margin(const Vector& xb, const LiftedSystem& L, const Ball& ob,
                                     double pad)
{
  const Index n = L.nx;
  const double rr = ob.radius + pad;
  double g = ob.center.squaredNorm() - rr * rr;
  for (Index i = 0; i < L.dim(); ++i) {
    const Index a = L.pos_rows[static_cast<std::size_t>(i)];
    g += xb[n + a + a * n];          // diagonal of the lifted position block
    g -= 2.0 * ob.center[i] * xb[a];
  }
  return g;
}

/// Accumulate scale * (gradient of the margin pulled back through the exact
/// lift) into a linear cost. On the rank-1 manifold the margin reads
/// |p - c|^2 - r^2, so the pullback lands 2(p_prev - c) on the physical
/// position coordinates and nothing on the moment coordinates; pushing the
/// raw lifted gradient instead would let the trace of the position block
/// absorb the whole force and would tie the mean force to the coordinate
/// origin through the -2c term.
inline void add_obstacle_gradient(Vector& q, const Vector& xb_prev, const LiftedSystem& L,
                                  const Ball& ob, double scale)
{
  for (Index i = 0; i < L.dim(); ++i) {
    const Index a = L.pos_rows[static_cast<std::size_t>(i)];
    q[a] += scale * 2.0 * (xb_prev[a] - ob.center[i]);
  }
}

}  // namespace detail

/// Assemble linear costs from goal terms, the PSD adjoint and the box and
/// obstacle dual forces, then run the cached sweeps from the pinned lift of
/// the measured state.
inline void primal_update(SolverWorkspace& ws, const RiccatiCache& cache, const SolverConfig& cfg,
                          const std::vector<std::vector<Ball>>& obstacles, const Vector& xbar0)
{
  const Index N = cfg.N;
  const LiftedSystem& L = ws.lifted;

  Vector dq(L.nbar_x()), dr(L.nbar_u());
  for (Index k = 0; k < N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    ws.q[ks] = ws.cost.q_ref;
    ws.r[ks] = ws.cost.r_ref;

    const Matrix T = smat(ws.S[ks] - ws.H[ks]);
    adjoint_moment(T, L, cfg.rho_psd, cfg.psd_block, dq, dr);
    ws.q[ks] += dq;
    ws.r[ks] += dr;

    if (cfg.has_box()) {
      ws.r[ks].head(L.nu) += -cfg.rho_box * (ws.zu[ks] - ws.yu[ks]);
    }
  }
  // Terminal linear cost: the cached sweep closes the horizon with the
  // steady-state quadratic P, and -P*lift(goal) is its consistent tracking
  // pair, so the goal is an exact rollout fixed point. Recentering this term
  // at the previous iterate would honor a different entered terminal weight,
  // but it feeds the iterate back into the objective with a gain that grows
  // with the moment magnitudes and diverges from far starts.
  ws.q[static_cast<std::size_t>(N)] = -(cache.P * lift_state(L, ws.x_goal));

  // augmented-Lagrangian gradient of each obstacle term at the latest plan
  for (Index k = 1; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < obstacles[ks].size(); ++j) {
      const Ball& ob = obstacles[ks][j];
      const double g = detail::lifted_obstacle_margin(ws.xbar[ks], L, ob, cfg.obstacle_pad);
      const double scale = cfg.rho_obs * (g - ws.s_obs[ks][j] + ws.y_obs[ks][j]);
      detail::add_obstacle_gradient(ws.q[ks], ws.xbar[ks], L, ob, scale);
    }
  }

  LinearCostSweep sweep = backward_pass(cache, ws.q, ws.r);
  forward_rollout(cache, sweep, xbar0, ws.xbar, ws.ubar);
}

/// Project each consensus family and take the scaled dual steps. Returns
/// the residual pair (primal consensus gap, rho-scaled slack change).
inline std::pair<double, double> slack_dual_update(SolverWorkspace& ws, const SolverConfig& cfg,
                                                   const std::vector<std::vector<Ball>>& obstacles)
{
  const Index N = cfg.N;
  const LiftedSystem& L = ws.lifted;
  double primal = 0.0;
  double dual = 0.0;

  for (Index k = 0; k < N; ++k) {
    const auto ks = static_cast<std::size_t>(k);

    if (cfg.has_box()) {
      const Vector u = ws.ubar[ks].head(L.nu);
      const Vector z_new = project_box(u + ws.yu[ks], cfg.u_lo, cfg.u_hi);
      dual = std::max(dual, cfg.rho_box * (z_new - ws.zu[ks]).cwiseAbs().maxCoeff());
      ws.yu[ks] += u - z_new;
      ws.zu[ks] = z_new;
      primal = std::max(primal, (u - z_new).cwiseAbs().maxCoeff());
    }

    const Matrix M = assemble_moment(ws.xbar[ks], ws.ubar[ks], L, cfg.psd_block);
    const Vector m = svec(M);
    const Vector S_new = project_psd_svec(m + ws.H[ks]);
    dual = std::max(dual, cfg.rho_psd * (S_new - ws.S[ks]).norm());
    ws.H[ks] += cfg.gamma_psd * (m - S_new);
    ws.S[ks] = S_new;
    primal = std::max(primal, (m - S_new).norm());
  }

  for (Index k = 1; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < obstacles[ks].size(); ++j) {
      const double g = detail::lifted_obstacle_margin(ws.xbar[ks], L, obstacles[ks][j], cfg.obstacle_pad);
      const double s_new = project_obstacle_slack(g + ws.y_obs[ks][j]);
      dual = std::max(dual, cfg.rho_obs * std::abs(s_new - ws.s_obs[ks][j]));
      ws.y_obs[ks][j] += g - s_new;
      ws.s_obs[ks][j] = s_new;
      primal = std::max(primal, std::abs(g - s_new));
    }
  }

  return {primal, dual};
}

/// Residuals of the last iteration.
inline std::pair<double, double> residuals(const SolverWorkspace& ws)
{
  return {ws.primal_res, ws.dual_res};
}

/// Shift slacks, duals and the plan forward one stage for the next MPC step;
/// the final stage is duplicated.
inline void warm_start_shift(SolverWorkspace& ws)
{
  if (!ws.has_plan) return;
  auto shift = [](auto& seq) {
    if (seq.size() < 2) return;
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
      seq[k] = seq[k + 1];
    }
  };
  shift(ws.xbar);
  shift(ws.ubar);
  shift(ws.zu);
  shift(ws.yu);
  shift(ws.S);
  shift(ws.H);
  shift(ws.s_obs);
  shift(ws.y_obs);
}

/// Extract the physical trajectories and per-stage position moment blocks.
inline Solution extract_solution(const SolverWorkspace& ws, const SolverConfig& cfg)
{
  const LiftedSystem& L = ws.lifted;
  Solution sol;
  sol.xbar = ws.xbar;
  sol.x.reserve(ws.xbar.size());
  sol.Xp.reserve(ws.xbar.size());
  for (const Vector& xb : ws.xbar) {
    sol.x.push_back(xb.head(L.nx));
    const Matrix X = unvec(xb.tail(L.nx * L.nx), L.nx, L.nx);
    Matrix Xp(L.dim(), L.dim());
    for (Index i = 0; i < L.dim(); ++i) {
      for (Index j = 0; j < L.dim(); ++j) {
        Xp(i, j) = X(L.pos_rows[static_cast<std::size_t>(i)], L.pos_rows[static_cast<std::size_t>(j)]);
      }
    }
    sol.Xp.push_back(0.5 * (Xp + Xp.transpose()));
  }
  sol.M.reserve(ws.ubar.size());
  for (std::size_t k = 0; k < ws.ubar.size(); ++k) {
    sol.u.push_back(ws.ubar[k].head(L.nu));
    sol.M.push_back(assemble_moment(ws.xbar[k], ws.ubar[k], L, cfg.psd_block));
  }
  sol.iterations = ws.iterations;
  sol.primal_residual = ws.primal_res;
  sol.dual_residual = ws.dual_res;
  sol.converged = ws.primal_res <= cfg.eps_primal && ws.dual_res <= cfg.eps_dual;
  return sol;
}

/// One MPC solve. `obstacles` holds the predicted keep-out set per stage
/// (N+1 entries, equal obstacle count per stage; constraints act on stages
/// 1..N). The lifted initial state is re-pinned to the rank-consistent lift
/// of x_meas on every iteration through the forward rollout.
inline Solution solve(const Vector& x_meas, const std::vector<std::vector<Ball>>& obstacles,
                      const RiccatiCache& cache, const SolverConfig& cfg, SolverWorkspace& ws)
{
  cfg.validate();
  const Index N = cfg.N;
  const LiftedSystem& L = ws.lifted;
  if (x_meas.size() != L.nx) {
    throw std::invalid_argument("solve: state dimension mismatch");
  }
  if (cache.N != N || cache.nx() != L.nbar_x() || cache.nu() != L.nbar_u()) {
    throw std::invalid_argument("solve: cache does not match this problem");
  }
  if (static_cast<Index>(obstacles.size()) != N + 1) {
    throw std::invalid_argument("solve: obstacle prediction must cover N+1 stages");
  }
  if (ws.xbar.size() != static_cast<std::size_t>(N) + 1 || ws.s_obs.empty() ||
      ws.S.front().size() != svec_size(moment_dim(L, cfg.psd_block))) {
    throw std::invalid_argument("solve: workspace not initialized for this config");
  }
  const std::size_t J = obstacles.front().size();
  for (const auto& row : obstacles) {
    if (row.size() != J) {
      throw std::invalid_argument("solve: obstacle count must not vary across stages");
    }
  }
  if (ws.s_obs.front().size() != J) {
    ws.resize_obstacles(J);
    if (ws.has_plan) {
      // fresh obstacles start from a consistent slack, not a zero one that
      // would exert a spurious attracting force for an iteration
      for (Index k = 1; k <= N; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        for (std::size_t j = 0; j < J; ++j) {
          ws.s_obs[ks][j] =
              project_obstacle_slack(
                detail::lifted_obstacle_margin(ws.xbar[ks], L, obstacles[ks][j], cfg.obstacle_pad));
        }
      }
    }
  }

  const Vector xbar0 = lift_state(L, x_meas);

  if (!ws.has_plan) {
    // cold start: goal-tracking rollout of the physical problem under its
    // true weights, lifted exactly. The rank-1 moments of that plan sit
    // ridge-close to the solver's fixed point, so the weakly-penalized
    // lifted coordinates never have to crawl there through the penalty prox.
    const Matrix Qp = L.Cx * ws.cost.Qbar * L.Cx.transpose();
    std::vector<Vector> qp(static_cast<std::size_t>(N) + 1, Vector(-(Qp * ws.x_goal)));
    qp[static_cast<std::size_t>(N)] = -(ws.phys.P * ws.x_goal);
    std::vector<Vector> rp(static_cast<std::size_t>(N), Vector::Zero(L.nu));
    const LinearCostSweep sweep = backward_pass(ws.phys, std::move(qp), std::move(rp));
    std::vector<Vector> xs, us;
    forward_rollout(ws.phys, sweep, x_meas, xs, us);
    for (Index k = 0; k < N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      ws.ubar[ks] = exact_lifted_input(L, xs[ks], us[ks]);
      ws.xbar[ks] = lift_state(L, xs[ks]);
    }
    ws.xbar.back() = lift_state(L, xs.back());
    for (Index k = 0; k < N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      if (cfg.has_box()) {
        ws.zu[ks] = project_box(ws.ubar[ks].head(L.nu), cfg.u_lo, cfg.u_hi);
      }
      ws.S[ks] = project_psd_svec(svec(assemble_moment(ws.xbar[ks], ws.ubar[ks], L, cfg.psd_block)));
    }
    for (Index k = 1; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < J; ++j) {
        ws.s_obs[ks][j] =
            project_obstacle_slack(
                detail::lifted_obstacle_margin(ws.xbar[ks], L, obstacles[ks][j], cfg.obstacle_pad));
      }
    }
  }

  ws.iterations = 0;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    primal_update(ws, cache, cfg, obstacles, xbar0);
    auto [primal, dual] = slack_dual_update(ws, cfg, obstacles);
    ws.primal_res = primal;
    ws.dual_res = dual;
    ws.iterations = it;
    if (!std::isfinite(primal) || !std::isfinite(dual) || !ws.xbar.back().allFinite()) {
      throw NonFiniteError("solve: diverging iterate; penalty weights are unsuitable");
    }
    if (primal <= cfg.eps_primal && dual <= cfg.eps_dual) {
      break;
    }
  }

  ws.has_plan = true;
  return extract_solution(ws, cfg);
}

/// Certificate of stage k of a solution (stage 0 is the applied state; later
/// stages are logged for offline horizon-wide analysis).
inline CertificateReport report_stage(const Solution& sol, const std::vector<Ball>& obstacles_k,
                                      const LiftedSystem& L, std::size_t k, double tol = 1e-2)
{
  Vector p(L.dim());
  for (Index i = 0; i < L.dim(); ++i) {
    p[i] = sol.x[k][L.pos_rows[static_cast<std::size_t>(i)]];
  }
  return certify(p, sol.Xp[k], obstacles_k, tol);
}

/// Online safety monitor: apply the first optimized control only when the
/// stage-0 state is certified, otherwise fall back.
inline std::pair<Vector, CertificateReport> safe_step(const Solution& sol,
                                                      const std::vector<Ball>& obstacles_now,
                                                      const LiftedSystem& L, const Vector& u_fallback,
                                                      double tol = 1e-2)
{
  CertificateReport rep = report_stage(sol, obstacles_now, L, 0, tol);
  return {rep.certified ? sol.u.front() : u_fallback, rep};
}

}  // namespace tinysdp
