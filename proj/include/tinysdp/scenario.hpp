#pragma once

/// Benchmark scenarios: obstacle motion models, horizon prediction, and the
/// canonical scene constructions (U-shape, moving gap, 3D barrier and gate).

#include "tinysdp/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tinysdp {

using Json = nlohmann::json;

/// 2D or 3D double integrator discretized exactly at dt.
inline LinearSystem double_integrator(Index d, double dt)
{
  if (d < 1 || dt <= 0.0) {
    throw std::invalid_argument("double_integrator: invalid dimension or step");
  }
  const Index n = 2 * d;
  Matrix A = Matrix::Identity(n, n);
  Matrix B = Matrix::Zero(n, d);
  std::vector<Index> pos(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) {
    A(i, d + i) = dt;
    B(i, i) = 0.5 * dt * dt;
    B(d + i, i) = dt;
    pos[static_cast<std::size_t>(i)] = i;
  }
  return LinearSystem{A, B, dt, pos};
}

enum class MotionType { fixed, linear, scripted };

/// Disk/sphere keep-out region with a deterministic motion model.
struct MovingObstacle {
  Vector center;                  // position at t = 0
  double radius = 0.0;
  MotionType motion = MotionType::fixed;
  Vector velocity;                // linear model only
  std::vector<double> times;      // scripted model: sorted waypoint times
  std::vector<Vector> waypoints;  // scripted model: positions at those times

  Vector center_at(double t) const
  {
    switch (motion) {
      case MotionType::fixed:
        return center;
      case MotionType::linear:
        return center + t * velocity;
      case MotionType::scripted: {
        if (t <= times.front()) return waypoints.front();
        if (t >= times.back()) return waypoints.back();  // hold last waypoint
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - times.begin());
        const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
        return (1.0 - w) * waypoints[j - 1] + w * waypoints[j];
      }
    }
    return center;
  }

  void validate(Index dim) const
  {
    if (radius <= 0.0) {
      throw std::invalid_argument("MovingObstacle: radius must be positive");
    }
    if (center.size() != dim) {
      throw std::invalid_argument("MovingObstacle: center dimension mismatch");
    }
    if (motion == MotionType::linear && velocity.size() != dim) {
      throw std::invalid_argument("MovingObstacle: velocity dimension mismatch");
    }
    if (motion == MotionType::scripted) {
      if (times.size() < 2 || times.size() != waypoints.size()) {
        throw std::invalid_argument("MovingObstacle: scripted path needs matched times/waypoints");
      }
      if (!std::is_sorted(times.begin(), times.end())) {
        throw std::invalid_argument("MovingObstacle: scripted times must be sorted");
      }
      for (const Vector& w : waypoints) {
        if (w.size() != dim) {
          throw std::invalid_argument("MovingObstacle: waypoint dimension mismatch");
        }
      }
    }
  }
};

/// Extrapolate every obstacle over stages 0..N from time t_now. Row k feeds
/// the solver's stage-k keep-out constraint.
inline std::vector<std::vector<Ball>> predict_obstacles(const std::vector<MovingObstacle>& obstacles,
                                                        double t_now, Index N, double dt)
{
  std::vector<std::vector<Ball>> out(static_cast<std::size_t>(N) + 1);
  for (Index k = 0; k <= N; ++k) {
    auto& row = out[static_cast<std::size_t>(k)];
    row.reserve(obstacles.size());
    for (const MovingObstacle& ob : obstacles) {
      row.push_back(Ball{ob.center_at(t_now + static_cast<double>(k) * dt), ob.radius});
    }
  }
  return out;
}

enum class Method { tinysdp, lin, hocbf };

struct MethodSpec {
  Method method = Method::tinysdp;
  double margin = 0.0;   // lin / hocbf keep-out enlargement
  double alpha1 = 4.0;   // hocbf barrier gains (1/s)
  double alpha2 = 4.0;
};

/// A complete closed-loop experiment: dynamics, scene, method and solver
/// profile. Geometry lives in versioned config files; the builders below
/// construct the canonical scenes those files mirror.
struct Scenario {
  std::string name;
  Index dim = 2;          // position dimension (2 or 3)
  double dt = 0.04;
  Index N = 20;
  int max_steps = 400;
  double goal_threshold = 0.05;
  double tol_cert = 1e-2;
  Vector start;           // full state, size 2*dim
  Vector goal;
  std::vector<MovingObstacle> obstacles;
  MethodSpec method;
  SolverConfig solver;
  double q_pos = 5.0;     // tracking weights; Q = diag(q_pos.., q_vel..)
  double q_vel = 0.5;
  double r_in = 0.1;

  Matrix Q() const
  {
    Matrix q = Matrix::Zero(2 * dim, 2 * dim);
    q.diagonal().head(dim).setConstant(q_pos);
    q.diagonal().tail(dim).setConstant(q_vel);
    return q;
  }
  Matrix R() const { return r_in * Matrix::Identity(dim, dim); }

  void validate() const
  {
    if (dim != 2 && dim != 3) {
      throw std::invalid_argument("Scenario: dimension must be 2 or 3");
    }
    if (start.size() != 2 * dim || goal.size() != 2 * dim) {
      throw std::invalid_argument("Scenario: start/goal must be full states");
    }
    if (dt <= 0.0 || N < 1 || max_steps < 1) {
      throw std::invalid_argument("Scenario: invalid discretization");
    }
    for (const MovingObstacle& ob : obstacles) {
      ob.validate(dim);
      for (const Vector* p : {&start, &goal}) {
        if ((p->head(dim) - ob.center_at(0.0)).norm() <= ob.radius) {
          throw std::invalid_argument("Scenario: start/goal inside an obstacle at t=0");
        }
      }
    }
  }
};

/// Simulation-rate solver profile shared by the planar benchmarks: strong
/// obstacle family, ten iterations per 40 ms period, solver-side pad
/// covering the penalty standoff and per-step sampling resolution.
inline SolverConfig benchmark_profile(Index dim)
{
  SolverConfig cfg;
  cfg.rho_psd = 1.0;
  cfg.rho_box = 1.0;
  cfg.rho_obs = 100.0;
  cfg.eps_primal = cfg.eps_dual = 1e-3;
  cfg.max_iter = 10;
  cfg.N = 20;
  cfg.obstacle_pad = 0.15;
  cfg.u_lo = Vector::Constant(dim, -6.0);
  cfg.u_hi = Vector::Constant(dim, 6.0);
  return cfg;
}

/// Hardware-rate profile: five iterations, position-only moment block.
inline SolverConfig hardware_profile(Index dim)
{
  SolverConfig cfg = benchmark_profile(dim);
  cfg.max_iter = 5;
  cfg.psd_block = MomentBlock::position;
  return cfg;
}

namespace detail {

inline Vector state2(double px, double py, double vx = 0.0, double vy = 0.0)
{
  Vector x(4);
  x << px, py, vx, vy;
  return x;
}

inline Vector state3(double px, double py, double pz)
{
  Vector x(6);
  x << px, py, pz, 0.0, 0.0, 0.0;
  return x;
}

inline Vector pos2(double x, double y)
{
  Vector p(2);
  p << x, y;
  return p;
}

inline Vector pos3(double x, double y, double z)
{
  Vector p(3);
  p << x, y, z;
  return p;
}

/// Overlapping-disk wall from a to b, spaced so consecutive centers are
/// closer than a radius sum.
inline void add_wall(std::vector<MovingObstacle>& out, const Vector& a, const Vector& b,
                     double radius, double spacing)
{
  const double len = (b - a).norm();
  const int count = std::max(1, static_cast<int>(std::ceil(len / spacing)));
  for (int i = 0; i <= count; ++i) {
    const double w = static_cast<double>(i) / static_cast<double>(count);
    out.push_back(MovingObstacle{a + w * (b - a), radius});
  }
}

/// Periodic zig-zag between lo and hi over the whole simulation window,
/// expressed as a scripted waypoint list (the motion model holds the last
/// waypoint afterwards).
inline MovingObstacle oscillating(const Vector& lo, const Vector& hi, double radius,
                                  double period, double t_end)
{
  MovingObstacle ob;
  ob.center = lo;
  ob.radius = radius;
  ob.motion = MotionType::scripted;
  double t = 0.0;
  bool up = true;
  while (t <= t_end + period) {
    ob.times.push_back(t);
    ob.waypoints.push_back(up ? lo : hi);
    up = !up;
    t += 0.5 * period;
  }
  return ob;
}

}  // namespace detail

enum class UshapeStart { inside, outside_center, edge_up, edge_down };

inline const char* to_string(UshapeStart s)
{
  switch (s) {
    case UshapeStart::inside: return "inside";
    case UshapeStart::outside_center: return "outside-center";
    case UshapeStart::edge_up: return "edge-up";
    case UshapeStart::edge_down: return "edge-down";
  }
  return "?";
}

/// Static concave U of overlapping disks opening toward the start side (-x),
/// goal beyond the obstacle. The whole U sits 0.05 m below the start-goal
/// axis: an exactly symmetric scene is a stable standoff (the solver brakes
/// and never commits to a side), so the geometry itself breaks the tie.
inline Scenario build_ushape(UshapeStart variant)
{
  Scenario s;
  s.name = std::string("ushape_") + to_string(variant);
  s.dim = 2;
  s.max_steps = 400;
  s.solver = benchmark_profile(2);

  const double r = 0.35;
  const double cy = -0.05;  // lateral offset of the whole U
  const double top = 0.8 + cy;
  const double bot = -0.8 + cy;
  detail::add_wall(s.obstacles, detail::pos2(-0.8, top), detail::pos2(0.8, top), r, 0.4);
  detail::add_wall(s.obstacles, detail::pos2(0.8, top), detail::pos2(0.8, bot), r, 0.4);
  detail::add_wall(s.obstacles, detail::pos2(0.8, bot), detail::pos2(-0.8, bot), r, 0.4);

  s.goal = detail::state2(3.0, 0.0);
  switch (variant) {
    case UshapeStart::inside: s.start = detail::state2(0.0, 0.0); break;
    case UshapeStart::outside_center: s.start = detail::state2(-2.0, 0.0); break;
    case UshapeStart::edge_up: s.start = detail::state2(-1.0, 1.4); break;
    case UshapeStart::edge_down: s.start = detail::state2(-1.0, -1.5); break;
  }
  s.validate();
  return s;
}

/// One static disk near the start lane plus two scripted disks that
/// periodically pinch a passage shut at x = 2: when closed the passage is
/// narrower than twice the needed clearance, so the controller must time
/// its crossing rather than hold a straight line.
inline Scenario build_moving_gap()
{
  Scenario s;
  s.name = "moving_gap";
  s.dim = 2;
  s.max_steps = 500;
  s.solver = benchmark_profile(2);

  s.obstacles.push_back(MovingObstacle{detail::pos2(1.0, 0.35), 0.3});

  const double t_end = static_cast<double>(s.max_steps) * s.dt;
  const double period = 2.0;
  s.obstacles.push_back(detail::oscillating(detail::pos2(2.0, 0.9), detail::pos2(2.0, 0.35),
                                            0.3, period, t_end));
  s.obstacles.push_back(detail::oscillating(detail::pos2(2.0, -0.9), detail::pos2(2.0, -0.35),
                                            0.3, period, t_end));

  s.start = detail::state2(0.0, 0.0);
  s.goal = detail::state2(4.0, 0.0);
  s.validate();
  return s;
}

/// 3D: one static sphere on the lane, then two spheres sweeping laterally in
/// opposite phases across the corridor; a planar sidestep at obstacle height
/// meets one of them for some phase, so the dodge must use all three axes.
inline Scenario build_sweeping_barrier()
{
  Scenario s;
  s.name = "sweeping_barrier";
  s.dim = 3;
  s.max_steps = 500;
  s.solver = benchmark_profile(3);

  s.obstacles.push_back(MovingObstacle{detail::pos3(1.2, 0.0, 1.0), 0.35});

  const double t_end = static_cast<double>(s.max_steps) * s.dt;
  const double period = 2.4;
  s.obstacles.push_back(detail::oscillating(detail::pos3(2.5, -1.0, 1.0),
                                            detail::pos3(2.5, 1.0, 1.0), 0.4, period, t_end));
  s.obstacles.push_back(detail::oscillating(detail::pos3(2.5, 1.0, 1.0),
                                            detail::pos3(2.5, -1.0, 1.0), 0.4, period, t_end));

  s.start = detail::state3(0.0, 0.0, 1.0);
  s.goal = detail::state3(4.0, 0.0, 1.0);
  s.validate();
  return s;
}

/// 3D: two static side spheres leave a narrow central slot; a third sphere
/// oscillates vertically through that slot, so the straight start-goal line
/// meets the obstacle field at every time.
inline Scenario build_vertical_gate()
{
  Scenario s;
  s.name = "vertical_gate";
  s.dim = 3;
  s.max_steps = 500;
  s.solver = benchmark_profile(3);

  s.obstacles.push_back(MovingObstacle{detail::pos3(2.0, 0.75, 1.0), 0.4});
  s.obstacles.push_back(MovingObstacle{detail::pos3(2.0, -0.75, 1.0), 0.4});

  const double t_end = static_cast<double>(s.max_steps) * s.dt;
  s.obstacles.push_back(detail::oscillating(detail::pos3(2.0, 0.0, 0.2),
                                            detail::pos3(2.0, 0.0, 1.8), 0.35, 2.0, t_end));

  s.start = detail::state3(0.0, 0.0, 1.0);
  s.goal = detail::state3(4.0, 0.0, 1.0);
  s.validate();
  return s;
}

/// JSON serialization. Round-trips every field so shipped config files stay
/// the single source of geometry truth.
inline Json to_json(const MovingObstacle& ob)
{
  Json j;
  j["center"] = std::vector<double>(ob.center.data(), ob.center.data() + ob.center.size());
  j["radius"] = ob.radius;
  switch (ob.motion) {
    case MotionType::fixed: j["motion"] = "static"; break;
    case MotionType::linear:
      j["motion"] = "linear";
      j["velocity"] = std::vector<double>(ob.velocity.data(), ob.velocity.data() + ob.velocity.size());
      break;
    case MotionType::scripted:
      j["motion"] = "scripted";
      j["times"] = ob.times;
      for (const Vector& w : ob.waypoints) {
        j["waypoints"].push_back(std::vector<double>(w.data(), w.data() + w.size()));
      }
      break;
  }
  return j;
}

inline Vector vector_from_json(const Json& j)
{
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline MovingObstacle obstacle_from_json(const Json& j)
{
  MovingObstacle ob;
  ob.center = vector_from_json(j.at("center"));
  ob.radius = j.at("radius").get<double>();
  const std::string m = j.value("motion", "static");
  if (m == "static") {
    ob.motion = MotionType::fixed;
  } else if (m == "linear") {
    ob.motion = MotionType::linear;
    ob.velocity = vector_from_json(j.at("velocity"));
  } else if (m == "scripted") {
    ob.motion = MotionType::scripted;
    ob.times = j.at("times").get<std::vector<double>>();
    for (const Json& w : j.at("waypoints")) {
      ob.waypoints.push_back(vector_from_json(w));
    }
  } else {
    throw std::invalid_argument("obstacle_from_json: unknown motion model '" + m + "'");
  }
  return ob;
}

inline Json to_json(const Scenario& s)
{
  Json j;
  j["name"] = s.name;
  j["dim"] = s.dim;
  j["dt"] = s.dt;
  j["horizon"] = s.N;
  j["max_steps"] = s.max_steps;
  j["goal_threshold"] = s.goal_threshold;
  j["tol_cert"] = s.tol_cert;
  j["start"] = std::vector<double>(s.start.data(), s.start.data() + s.start.size());
  j["goal"] = std::vector<double>(s.goal.data(), s.goal.data() + s.goal.size());
  for (const MovingObstacle& ob : s.obstacles) j["obstacles"].push_back(to_json(ob));
  j["weights"] = {{"q_pos", s.q_pos}, {"q_vel", s.q_vel}, {"r", s.r_in}};
  j["solver"] = {{"rho_psd", s.solver.rho_psd},
                 {"rho_box", s.solver.rho_box},
                 {"rho_obs", s.solver.rho_obs},
                 {"eps", s.solver.eps_primal},
                 {"max_iter", s.solver.max_iter},
                 {"obstacle_pad", s.solver.obstacle_pad},
                 {"trace_gap_weight", s.solver.trace_gap_weight},
                 {"lift", s.solver.psd_block == MomentBlock::full ? "full" : "position"},
                 {"u_bound", s.solver.u_hi.size() ? s.solver.u_hi[0] : 0.0}};
  return j;
}

inline Scenario scenario_from_json(const Json& j)
{
  Scenario s;
  s.name = j.at("name").get<std::string>();
  s.dim = j.at("dim").get<Index>();
  s.dt = j.at("dt").get<double>();
  s.N = j.at("horizon").get<Index>();
  s.max_steps = j.at("max_steps").get<int>();
  s.goal_threshold = j.value("goal_threshold", 0.05);
  s.tol_cert = j.value("tol_cert", 1e-2);
  s.start = vector_from_json(j.at("start"));
  s.goal = vector_from_json(j.at("goal"));
  if (j.contains("obstacles")) {
    for (const Json& o : j.at("obstacles")) s.obstacles.push_back(obstacle_from_json(o));
  }
  if (j.contains("weights")) {
    s.q_pos = j["weights"].value("q_pos", 5.0);
    s.q_vel = j["weights"].value("q_vel", 0.5);
    s.r_in = j["weights"].value("r", 0.1);
  }
  s.solver = benchmark_profile(s.dim);
  s.solver.N = s.N;
  if (j.contains("solver")) {
    const Json& c = j["solver"];
    s.solver.rho_psd = c.value("rho_psd", s.solver.rho_psd);
    s.solver.rho_box = c.value("rho_box", s.solver.rho_box);
    s.solver.rho_obs = c.value("rho_obs", s.solver.rho_obs);
    s.solver.eps_primal = s.solver.eps_dual = c.value("eps", s.solver.eps_primal);
    s.solver.max_iter = c.value("max_iter", s.solver.max_iter);
    s.solver.obstacle_pad = c.value("obstacle_pad", s.solver.obstacle_pad);
    s.solver.trace_gap_weight = c.value("trace_gap_weight", s.solver.trace_gap_weight);
    if (c.value("lift", "full") == std::string("position")) {
      s.solver.psd_block = MomentBlock::position;
    }
    const double ub = c.value("u_bound", 6.0);
    s.solver.u_lo = Vector::Constant(s.dim, -ub);
    s.solver.u_hi = Vector::Constant(s.dim, ub);
  }
  s.validate();
  return s;
}

}  // namespace tinysdp
