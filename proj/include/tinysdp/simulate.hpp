#pragma once

/// Closed-loop benchmark harness: runs a scenario under one of the three
/// controllers, records per-step logs and certificate traces, and reduces
/// them to run metrics and deterministic report tables.

#include "tinysdp/baselines.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <sstream>

namespace tinysdp {

enum class RunOutcome { reached_goal, budget_exhausted, aborted };
enum class SafetyStatus { safe, collided, unknown };

struct StepLog {
  double t = 0.0;
  Vector x;             // state before the step
  Vector u;             // applied input
  double delta = 0.0;   // certificate trace gap (primary method only)
  double eta_min = 0.0; // smallest lifted margin (primary method only)
  bool certified = false;
  bool fallback = false;
  int iterations = 0;
  double solve_ms = 0.0;
};

struct TrajectoryLog {
  Index dim = 2;
  std::vector<StepLog> steps;
  Vector final_x;
  double final_t = 0.0;
  RunOutcome outcome = RunOutcome::budget_exhausted;
  std::string note;     // abort reason when outcome == aborted
};

struct RunMetrics {
  double path_length = 0.0;
  double final_goal_distance = 0.0;
  SafetyStatus status = SafetyStatus::unknown;
  bool collided = false;        // status == collided; aborted runs stay unknown
  double min_clearance = 0.0;   // true clearance, no margins or pads
  double certified_fraction = 0.0;
  int fallback_steps = 0;
  double mean_iterations = 0.0;
  int max_iterations = 0;
  double mean_solve_ms = 0.0;
  bool reached_goal = false;
  int steps = 0;
  int degenerate_skips = 0;     // lin only: dropped tangent constraints
};

namespace detail {

inline double clearance_at(const Scenario& s, const Vector& x, double t)
{
  double best = std::numeric_limits<double>::infinity();
  for (const MovingObstacle& ob : s.obstacles) {
    best = std::min(best, (x.head(s.dim) - ob.center_at(t)).norm() - ob.radius);
  }
  return best;
}

}  // namespace detail

/// Reduce a finished run to its scoreboard numbers. A run is collided iff
/// the smallest sampled true clearance is strictly negative; an aborted run
/// with no observed incursion stays unknown rather than safe.
inline RunMetrics compute_metrics(const Scenario& s, const TrajectoryLog& log)
{
  RunMetrics m;
  m.steps = static_cast<int>(log.steps.size());
  m.min_clearance = detail::clearance_at(s, log.final_x, log.final_t);

  Vector prev = log.steps.empty() ? log.final_x : log.steps.front().x;
  int certified = 0;
  double iter_sum = 0.0;
  double ms_sum = 0.0;
  for (const StepLog& st : log.steps) {
    m.min_clearance = std::min(m.min_clearance, detail::clearance_at(s, st.x, st.t));
    m.path_length += (st.x.head(s.dim) - prev.head(s.dim)).norm();
    prev = st.x;
    certified += st.certified ? 1 : 0;
    m.fallback_steps += st.fallback ? 1 : 0;
    iter_sum += st.iterations;
    ms_sum += st.solve_ms;
    m.max_iterations = std::max(m.max_iterations, st.iterations);
  }
  m.path_length += (log.final_x.head(s.dim) - prev.head(s.dim)).norm();
  m.final_goal_distance = (log.final_x.head(s.dim) - s.goal.head(s.dim)).norm();
  m.reached_goal = log.outcome == RunOutcome::reached_goal;
  if (m.steps > 0) {
    m.certified_fraction = static_cast<double>(certified) / m.steps;
    m.mean_iterations = iter_sum / m.steps;
    m.mean_solve_ms = ms_sum / m.steps;
  }
  if (m.min_clearance < 0.0) {
    m.status = SafetyStatus::collided;
  } else {
    m.status = log.outcome == RunOutcome::aborted ? SafetyStatus::unknown : SafetyStatus::safe;
  }
  m.collided = m.status == SafetyStatus::collided;
  return m;
}

struct RunResult {
  TrajectoryLog log;
  RunMetrics metrics;
};

/// Run one scenario to the goal or the step budget. The plant saturates the
/// applied input at the actuation box for every method; a solver breakdown
/// aborts the run and leaves its safety outcome unknown.
inline RunResult simulate_closed_loop(Scenario s)
{
  s.validate();
  s.solver.N = s.N;
  const LinearSystem sys = double_integrator(s.dim, s.dt);
  const Matrix Q = s.Q();
  const Matrix R = s.R();

  // stationary weight of the true-cost recursion: entering it as the
  // terminal removes the in-call horizon transient, so near steady state a
  // warm-started solve is already at its fixed point
  const RiccatiCache plain =
      compute_cache(sys.A, sys.B, Matrix(2.0 * Q), Matrix(2.0 * R), Matrix(2.0 * Q), s.N);
  const Matrix Qf = 0.5 * plain.P;

  TrajectoryLog log;
  log.dim = s.dim;

  // primary-method state
  LiftedSystem L;
  LiftedCost cost;
  RiccatiCache cache;
  SolverWorkspace ws;
  LinWorkspace lin;
  if (s.method.method == Method::tinysdp) {
    L = build_lifted_system(sys);
    cost = build_solver_cost(L, Q, R, Qf, s.goal, s.solver);
    cache = compute_cache(L, cost, s.N, 1e-10, 20000);
    ws.init(L, cost, s.solver, s.goal);
  } else if (s.method.method == Method::lin) {
    lin.init(sys, Q, R, s.goal, s.solver);
  }

  Vector x = s.start;
  double t = 0.0;
  const auto clamp_u = [&](const Vector& u) {
    return s.solver.has_box() ? Vector(project_box(u, s.solver.u_lo, s.solver.u_hi)) : u;
  };

  for (int step = 0; step < s.max_steps; ++step) {
    if ((x.head(s.dim) - s.goal.head(s.dim)).norm() < s.goal_threshold) {
      log.outcome = RunOutcome::reached_goal;
      break;
    }
    StepLog st;
    st.t = t;
    st.x = x;
    const auto obs = predict_obstacles(s.obstacles, t, s.N, s.dt);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (s.method.method == Method::tinysdp) {
        const Solution sol = solve(x, obs, cache, s.solver, ws);
        Vector u_fb(s.dim);
        for (Index i = 0; i < s.dim; ++i) u_fb[i] = -x[s.dim + i] / s.dt;
        u_fb = clamp_u(u_fb);
        const auto [u, rep] = safe_step(sol, obs.front(), L, u_fb, s.tol_cert);
        st.u = u;
        st.delta = rep.delta;
        st.eta_min = rep.eta_min;
        st.certified = rep.certified;
        st.fallback = !rep.certified;
        st.iterations = sol.iterations;
      } else if (s.method.method == Method::lin) {
        solve_lin(x, obs, lin, s.solver, s.method.margin);
        st.u = lin.us.front();
        st.iterations = lin.iterations;
      } else {
        std::vector<Vector> cvel(s.obstacles.size());
        std::vector<Ball> now(s.obstacles.size());
        for (std::size_t j = 0; j < s.obstacles.size(); ++j) {
          const Vector c = s.obstacles[j].center_at(t);
          now[j] = Ball{c, s.obstacles[j].radius};
          cvel[j] = (s.obstacles[j].center_at(t + s.dt) - c) / s.dt;
        }
        const HocbfResult res =
            hocbf_step(x, s.goal, plain.K, now, cvel, sys.pos_rows, s.solver, s.method);
        st.u = res.u;
        st.fallback = res.infeasible;
        st.iterations = 1;
      }
    } catch (const NonFiniteError& e) {
      log.outcome = RunOutcome::aborted;
      log.note = e.what();
      break;
    }
    st.solve_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    st.u = clamp_u(st.u);
    log.steps.push_back(st);
    x = sys.A * x + sys.B * st.u;
    t += s.dt;
  }
  if (log.outcome == RunOutcome::budget_exhausted &&
      (x.head(s.dim) - s.goal.head(s.dim)).norm() < s.goal_threshold) {
    log.outcome = RunOutcome::reached_goal;
  }
  log.final_x = x;
  log.final_t = t;

  RunResult out;
  out.log = std::move(log);
  out.metrics = compute_metrics(s, out.log);
  if (s.method.method == Method::lin) out.metrics.degenerate_skips = lin.degenerate_skips;
  return out;
}

/// Fixed-format float: full round-trip precision, locale-free.
inline std::string fmt_full(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// Per-step log as delimited text, one row per control period.
inline std::string format_log_csv(const TrajectoryLog& log)
{
  std::ostringstream os;
  const char* axes[] = {"x", "y", "z"};
  os << "t";
  for (Index i = 0; i < log.dim; ++i) os << ",p" << axes[i];
  for (Index i = 0; i < log.dim; ++i) os << ",v" << axes[i];
  for (Index i = 0; i < log.dim; ++i) os << ",u" << axes[i];
  os << ",delta,eta_min,certified,fallback_active,iterations,solve_time_ms\n";
  for (const StepLog& st : log.steps) {
    os << fmt_full(st.t);
    for (Index i = 0; i < 2 * log.dim; ++i) os << ',' << fmt_full(st.x[i]);
    for (Index i = 0; i < log.dim; ++i) os << ',' << fmt_full(st.u[i]);
    os << ',' << fmt_full(st.delta) << ',' << fmt_full(st.eta_min) << ','
       << (st.certified ? 1 : 0) << ',' << (st.fallback ? 1 : 0) << ',' << st.iterations << ','
       << fmt_full(st.solve_ms) << '\n';
  }
  return os.str();
}

inline const char* to_string(SafetyStatus s)
{
  switch (s) {
    case SafetyStatus::safe: return "yes";
    case SafetyStatus::collided: return "NO";
    case SafetyStatus::unknown: return "unknown";
  }
  return "?";
}

inline const char* to_string(RunOutcome o)
{
  switch (o) {
    case RunOutcome::reached_goal: return "reached_goal";
    case RunOutcome::budget_exhausted: return "budget_exhausted";
    case RunOutcome::aborted: return "aborted";
  }
  return "?";
}

/// Key-value metrics block written next to each log.
inline std::string format_metrics(const RunMetrics& m, const TrajectoryLog& log)
{
  std::ostringstream os;
  os << "outcome=" << to_string(log.outcome) << '\n'
     << "safe=" << to_string(m.status) << '\n'
     << "path_length=" << fmt_full(m.path_length) << '\n'
     << "final_goal_distance=" << fmt_full(m.final_goal_distance) << '\n'
     << "min_clearance=" << fmt_full(m.min_clearance) << '\n'
     << "certified_fraction=" << fmt_full(m.certified_fraction) << '\n'
     << "fallback_steps=" << m.fallback_steps << '\n'
     << "mean_iterations=" << fmt_full(m.mean_iterations) << '\n'
     << "max_iterations=" << m.max_iterations << '\n'
     << "mean_solve_ms=" << fmt_full(m.mean_solve_ms) << '\n'
     << "steps=" << m.steps << '\n';
  if (m.degenerate_skips > 0) os << "degenerate_skips=" << m.degenerate_skips << '\n';
  if (!log.note.empty()) os << "note=" << log.note << '\n';
  return os.str();
}

struct BenchRow {
  std::string scenario;
  std::string method;
  RunMetrics metrics;
};

inline std::string method_label(const MethodSpec& spec)
{
  switch (spec.method) {
    case Method::tinysdp: return "tinysdp";
    case Method::lin: return "lin(m=" + fmt_short(spec.margin) + ")";
    case Method::hocbf: return "hocbf(m=" + fmt_short(spec.margin) + ")";
  }
  return "?";
}

inline BenchRow run_bench_row(Scenario s, const MethodSpec& spec)
{
  s.method = spec;
  const RunResult res = simulate_closed_loop(s);
  return BenchRow{s.name, method_label(spec), res.metrics};
}

/// Scoreboard as delimited text. Wall times are excluded on purpose: every
/// other column is a deterministic function of the scenario, so repeated
/// invocations must agree byte for byte.
inline std::string format_bench_table(const std::vector<BenchRow>& rows)
{
  std::ostringstream os;
  os << "scenario|method|path_len|goal_dist|safe|min_clearance|certified_fraction|fallback_steps|"
        "mean_iters\n";
  for (const BenchRow& r : rows) {
    const RunMetrics& m = r.metrics;
    os << r.scenario << '|' << r.method << '|' << fmt_short(m.path_length) << '|'
       << fmt_short(m.final_goal_distance) << '|' << to_string(m.status) << '|'
       << fmt_short(m.min_clearance) << '|' << fmt_short(m.certified_fraction) << '|'
       << m.fallback_steps << '|' << fmt_short(m.mean_iterations) << '\n';
  }
  return os.str();
}

/// The three method entries every suite compares.
inline std::vector<MethodSpec> bench_methods()
{
  return {MethodSpec{Method::tinysdp, 0.0, 0.0, 0.0}, MethodSpec{Method::lin, 0.0, 0.0, 0.0},
          MethodSpec{Method::hocbf, 0.0, 4.0, 4.0}};
}

inline std::vector<BenchRow> bench_suite(const std::string& which)
{
  std::vector<Scenario> scenes;
  if (which == "ushape" || which == "all") {
    for (UshapeStart v : {UshapeStart::inside, UshapeStart::outside_center, UshapeStart::edge_up,
                          UshapeStart::edge_down}) {
      scenes.push_back(build_ushape(v));
    }
  }
  if (which == "dynamic" || which == "all") scenes.push_back(build_moving_gap());
  if (which == "3d" || which == "all") {
    scenes.push_back(build_sweeping_barrier());
    scenes.push_back(build_vertical_gate());
  }
  if (scenes.empty()) {
    throw std::invalid_argument("bench_suite: unknown suite '" + which + "'");
  }
  std::vector<BenchRow> rows;
  for (const Scenario& s : scenes) {
    for (const MethodSpec& spec : bench_methods()) rows.push_back(run_bench_row(s, spec));
  }
  return rows;
}

/// A suite passes when every primary-method row is collision-free and at
/// the goal.
inline bool bench_primary_ok(const std::vector<BenchRow>& rows)
{
  for (const BenchRow& r : rows) {
    if (r.method == "tinysdp" &&
        (r.metrics.status != SafetyStatus::safe || !r.metrics.reached_goal)) {
      return false;
    }
  }
  return true;
}

}  // namespace tinysdp
