#pragma once

/// Baseline controllers for the closed-loop benchmarks: a linearized
/// keep-out MPC sharing the ADMM machinery (no lifting, no PSD family) and a
/// second-order barrier-function input filter.

#include "tinysdp/scenario.hpp"

namespace tinysdp {

/// Plan and bookkeeping for the linearized-obstacle MPC. Keep-out disks are
/// replaced per stage by the tangent half-space a'(p - c) >= r + margin with
/// a the unit normal at the previous plan, so the constraint set is convex
/// but ignores curvature behind the tangent point.
struct LinWorkspace {
  LinearSystem sys;
  Matrix Qhat;               // 2 Q
  Vector q_goal;             // -Qhat * goal
  Vector qf_goal;            // -P * goal (stationary terminal)
  RiccatiCache cache;        // stationary sweep for (Qhat, 2R + rho_box I)
  Vector p_goal;

  std::vector<Vector> xs;    // N+1 plan states
  std::vector<Vector> us;    // N plan inputs
  std::vector<Vector> zu;    // box slacks
  std::vector<Vector> yu;    // box duals
  std::vector<std::vector<double>> s_obs;  // (N+1) x J half-space slacks
  std::vector<std::vector<double>> y_obs;
  bool warm = false;
  int degenerate_skips = 0;  // stages whose normal was undefined (p == c)

  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;

  void init(const LinearSystem& system, const Matrix& Q, const Matrix& R, const Vector& goal,
            const SolverConfig& cfg)
  {
    sys = system;
    const Index nu = sys.B.cols();
    Qhat = 2.0 * Q;
    Matrix Rhat = 2.0 * R;
    if (cfg.has_box()) Rhat += cfg.rho_box * Matrix::Identity(nu, nu);
    cache = compute_cache(sys.A, sys.B, Qhat, Rhat, Qhat, cfg.N);
    q_goal = -(Qhat * goal);
    qf_goal = -(cache.P * goal);
    p_goal = Vector(static_cast<Index>(sys.pos_rows.size()));
    for (std::size_t i = 0; i < sys.pos_rows.size(); ++i) p_goal[static_cast<Index>(i)] = goal[sys.pos_rows[i]];

    const auto N = static_cast<std::size_t>(cfg.N);
    xs.assign(N + 1, Vector::Zero(sys.A.rows()));
    us.assign(N, Vector::Zero(nu));
    zu.assign(N, Vector::Zero(nu));
    yu.assign(N, Vector::Zero(nu));
    warm = false;
  }
};

namespace detail {

inline Vector position_of(const Vector& x, const std::vector<Index>& pos_rows)
{
  Vector p(static_cast<Index>(pos_rows.size()));
  for (std::size_t i = 0; i < pos_rows.size(); ++i) p[static_cast<Index>(i)] = x[pos_rows[i]];
  return p;
}

}  // namespace detail

/// One MPC solve of the linearized problem. Normals are frozen at the
/// previous plan for the whole call (cold start: straight-line interpolation
/// from the measured position to the goal), then the same scaled ADMM
/// iteration as the lifted solver runs on the box and half-space families.
inline void solve_lin(const Vector& x_meas, const std::vector<std::vector<Ball>>& obstacles,
                      LinWorkspace& ws, const SolverConfig& cfg, double margin)
{
  const Index N = cfg.N;
  const std::size_t J = obstacles.front().size();
  const Index d = static_cast<Index>(ws.sys.pos_rows.size());

  if (ws.s_obs.size() != static_cast<std::size_t>(N) + 1 ||
      (!ws.s_obs.empty() && ws.s_obs.front().size() != J)) {
    ws.s_obs.assign(static_cast<std::size_t>(N) + 1, std::vector<double>(J, 0.0));
    ws.y_obs.assign(static_cast<std::size_t>(N) + 1, std::vector<double>(J, 0.0));
  }

  // linearization points: previous plan shifted one stage, or the straight
  // start-goal interpolation on the first call
  std::vector<Vector> pbar(static_cast<std::size_t>(N) + 1);
  if (ws.warm) {
    for (Index k = 0; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      pbar[ks] = detail::position_of(ws.xs[std::min(ks + 1, static_cast<std::size_t>(N))], ws.sys.pos_rows);
    }
  } else {
    const Vector p0 = detail::position_of(x_meas, ws.sys.pos_rows);
    for (Index k = 0; k <= N; ++k) {
      const double w = static_cast<double>(k) / static_cast<double>(N);
      pbar[static_cast<std::size_t>(k)] = (1.0 - w) * p0 + w * ws.p_goal;
    }
  }

  // frozen tangent data per (stage, obstacle): unit normal and offset
  std::vector<std::vector<Vector>> normal(static_cast<std::size_t>(N) + 1, std::vector<Vector>(J));
  std::vector<std::vector<bool>> active(static_cast<std::size_t>(N) + 1, std::vector<bool>(J, false));
  for (Index k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < J; ++j) {
      const Vector dir = pbar[ks] - obstacles[ks][j].center;
      const double len = dir.norm();
      if (len < 1e-9) {
        ++ws.degenerate_skips;  // undefined normal; constraint dropped this call
        ws.y_obs[ks][j] = 0.0;
        continue;
      }
      normal[ks][j] = dir / len;
      active[ks][j] = true;
    }
  }

  const auto gap = [&](Index k, std::size_t j) {
    const auto ks = static_cast<std::size_t>(k);
    const Vector p = detail::position_of(ws.xs[ks], ws.sys.pos_rows);
    return normal[ks][j].dot(p - obstacles[ks][j].center) - obstacles[ks][j].radius - margin;
  };

  std::vector<Vector> q(static_cast<std::size_t>(N) + 1);
  std::vector<Vector> r(static_cast<std::size_t>(N));

  if (!ws.warm) {
    ws.xs.assign(static_cast<std::size_t>(N) + 1, x_meas);
    for (auto& u : ws.us) u.setZero();
  }

  ws.converged = false;
  ws.iterations = 0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    ws.iterations = it + 1;
    for (Index k = 0; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      q[ks] = (k == N) ? ws.qf_goal : ws.q_goal;
      for (std::size_t j = 0; j < J; ++j) {
        if (!active[ks][j]) continue;
        const double force = cfg.rho_obs * (gap(k, j) - ws.s_obs[ks][j] + ws.y_obs[ks][j]);
        for (Index i = 0; i < d; ++i) {
          q[ks][ws.sys.pos_rows[static_cast<std::size_t>(i)]] += force * normal[ks][j][i];
        }
      }
      if (k < N) {
        r[ks] = cfg.has_box() ? Vector(cfg.rho_box * (ws.yu[ks] - ws.zu[ks])) : Vector(Vector::Zero(ws.us[ks].size()));
      }
    }
    const LinearCostSweep sweep = backward_pass(ws.cache, q, r);
    forward_rollout(ws.cache, sweep, x_meas, ws.xs, ws.us);

    double primal = 0.0;
    double dual = 0.0;
    for (Index k = 0; k < N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      if (cfg.has_box()) {
        const Vector z_new = project_box(ws.us[ks] + ws.yu[ks], cfg.u_lo, cfg.u_hi);
        dual = std::max(dual, cfg.rho_box * (z_new - ws.zu[ks]).lpNorm<Eigen::Infinity>());
        ws.zu[ks] = z_new;
        ws.yu[ks] += ws.us[ks] - ws.zu[ks];
        primal = std::max(primal, (ws.us[ks] - ws.zu[ks]).lpNorm<Eigen::Infinity>());
      }
    }
    for (Index k = 1; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < J; ++j) {
        if (!active[ks][j]) continue;
        const double g = gap(k, j);
        const double s_new = std::max(g + ws.y_obs[ks][j], 0.0);
        dual = std::max(dual, cfg.rho_obs * std::abs(s_new - ws.s_obs[ks][j]));
        ws.s_obs[ks][j] = s_new;
        ws.y_obs[ks][j] += g - ws.s_obs[ks][j];
        primal = std::max(primal, std::abs(g - ws.s_obs[ks][j]));
      }
    }
    ws.primal_residual = primal;
    ws.dual_residual = dual;
    if (!std::isfinite(primal) || !std::isfinite(ws.xs.back().lpNorm<Eigen::Infinity>())) {
      throw NonFiniteError("solve_lin: diverging iterate");
    }
    if (primal <= cfg.eps_primal && dual <= cfg.eps_dual) {
      ws.converged = true;
      break;
    }
  }
  ws.warm = true;
}

/// Second-order barrier filter: h = |p - c|^2 - (r + margin)^2 per obstacle,
/// and the input must satisfy h'' + (a1 + a2) h' + a1 a2 h >= 0 along the
/// model, a per-step linear constraint 2 (p - c)' u >= b. The filter keeps
/// the input closest to the nominal tracking law inside those half-spaces
/// and the actuation box; when the intersection is empty it applies the
/// nominal input and reports infeasibility.
struct HocbfResult {
  Vector u;
  bool infeasible = false;
};

inline HocbfResult hocbf_step(const Vector& x, const Vector& goal, const Matrix& K,
                              const std::vector<Ball>& obstacles,
                              const std::vector<Vector>& obstacle_vel,
                              const std::vector<Index>& pos_rows, const SolverConfig& cfg,
                              const MethodSpec& spec)
{
  const Index d = static_cast<Index>(pos_rows.size());
  const Index nx = x.size();
  Vector p(d), v(d);
  for (Index i = 0; i < d; ++i) {
    p[i] = x[pos_rows[static_cast<std::size_t>(i)]];
    v[i] = x[pos_rows[static_cast<std::size_t>(i)] + nx / 2];
  }

  Vector u_nom = -(K * (x - goal));
  if (cfg.has_box()) u_nom = project_box(u_nom, cfg.u_lo, cfg.u_hi);

  const std::size_t J = obstacles.size();
  std::vector<Vector> a(J);
  std::vector<double> b(J);
  for (std::size_t j = 0; j < J; ++j) {
    const Vector e = p - obstacles[j].center;
    const Vector ev = v - obstacle_vel[j];
    const double rr = obstacles[j].radius + spec.margin;
    const double h = e.squaredNorm() - rr * rr;
    const double hd = 2.0 * e.dot(ev);
    a[j] = 2.0 * e;
    b[j] = -2.0 * ev.squaredNorm() - (spec.alpha1 + spec.alpha2) * hd -
           spec.alpha1 * spec.alpha2 * h;
  }

  // alternating projections onto the half-spaces and the box; the iterate
  // stays near the nominal input whenever the intersection is nonempty
  Vector u = u_nom;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double worst = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double sq = a[j].squaredNorm();
      if (sq < 1e-12) continue;
      const double viol = b[j] - a[j].dot(u);
      if (viol > 0.0) u += (viol / sq) * a[j];
      worst = std::max(worst, viol);
    }
    if (cfg.has_box()) u = project_box(u, cfg.u_lo, cfg.u_hi);
    bool ok = true;
    for (std::size_t j = 0; j < J; ++j) {
      if (a[j].squaredNorm() >= 1e-12 && b[j] - a[j].dot(u) > 1e-7) ok = false;
    }
    if (ok) return {u, false};
    (void)worst;
  }
  return {u_nom, true};
}

}  // namespace tinysdp
