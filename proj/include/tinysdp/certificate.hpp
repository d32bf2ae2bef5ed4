#pragma once

/// A-posteriori rank-1 safety certificate: trace gap, lifted margins and the
/// certification test applied to the stage the controller is about to act on.

#include "tinysdp/lifting.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace tinysdp {

/// A spherical keep-out region at one instant.
struct Ball {
  Vector center;
  double radius = 0.0;
};

/// Outcome of certifying one state against a set of keep-out balls.
struct CertificateReport {
  double delta = 0.0;     // trace gap, squared-length units
  double eta_min = 0.0;   // smallest lifted margin over obstacles
  std::vector<double> eta;
  bool certified = false;
  double tol = 0.0;
};

/// Excess of the moment block over the rank-1 lift: trace(Xp) - |p|^2.
inline double trace_gap(const Vector& p, const Matrix& Xp)
{
  return Xp.trace() - p.squaredNorm();
}

/// Lifted clearance of one ball: trace(Xp) - 2 c'p + |c|^2 - r^2.
inline double lifted_margin(const Vector& p, const Matrix& Xp, const Vector& c, double r)
{
  return Xp.trace() - 2.0 * c.dot(p) + c.squaredNorm() - r * r;
}

/// Certified iff eta_min >= -tol and |delta| <= eta_min + tol. The margin
/// over an empty obstacle set is +infinity, so certification then only
/// requires a finite trace gap.
inline CertificateReport certify(const Vector& p, const Matrix& Xp, const std::vector<Ball>& obstacles,
                                 double tol = 1e-2)
{
  CertificateReport rep;
  rep.tol = tol;
  rep.delta = trace_gap(p, Xp);
  rep.eta_min = std::numeric_limits<double>::infinity();
  rep.eta.reserve(obstacles.size());
  for (const Ball& ob : obstacles) {
    const double eta = lifted_margin(p, Xp, ob.center, ob.radius);
    rep.eta.push_back(eta);
    rep.eta_min = std::min(rep.eta_min, eta);
  }
  rep.certified = std::isfinite(rep.delta) && rep.eta_min >= -tol &&
                  std::abs(rep.delta) <= rep.eta_min + tol;
  return rep;
}

/// Monitor for the applied stage: the optimized input when certified, the
/// fallback otherwise.
inline std::pair<Vector, CertificateReport> safe_step(const Vector& p0, const Matrix& Xp0,
                                                      const Vector& u0,
                                                      const std::vector<Ball>& obstacles,
                                                      const Vector& u_fallback, double tol = 1e-2)
{
  CertificateReport rep = certify(p0, Xp0, obstacles, tol);
  return {rep.certified ? u0 : u_fallback, rep};
}

}  // namespace tinysdp
