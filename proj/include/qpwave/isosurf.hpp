#ifndef QPWAVE_ISOSURF_HPP
#define QPWAVE_ISOSURF_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qpwave/checks.hpp"
#include "qpwave/fixpoint.hpp"
#include "qpwave/nonres.hpp"
#include "qpwave/root.hpp"
#include "qpwave/sampling.hpp"

namespace qpwave {

/// Parameters of the run at carrier vector kappa * nu: t from the cell
/// decomposition, k = kappa. Throws Resonant when the decomposition fails the
/// separation test.
inline ProblemParams carrier_params(const ProblemParams& params, double kappa, std::span<const double> nu) {
  const Decomposition d = direction_decompose(params, kappa, nu);
  ProblemParams p = params;
  p.t = d.t;
  p.k = kappa;
  return p;
}

/// Nonlinear eigenvalue of the solution with carrier vector kappa * nu.
inline double lambda_of_kappa(double kappa, std::span<const double> nu, const FourierField& V,
                              const ProblemParams& params, const SolveOptions& opts = {}) {
  SolveOptions inner = opts;
  inner.retain_psi = false;
  return solve_nonlinear(V, carrier_params(params, kappa, nu), inner).record.lambda;
}

/// (lambda - sigma|A|^2)^{1/2l}.
inline double shifted_radius(double lambda, const ProblemParams& params) {
  const double e = lambda - params.coupling();
  if (!(e > 0.0)) throw Error(ErrorKind::Validation, "lambda - sigma|A|^2 must be positive");
  return std::pow(e, 1.0 / (2 * params.l));
}

/// Half-width k^{-2l+1+gamma0} of the search interval around k = lambda^{1/2l}.
inline double iso_half_width(double k, const ProblemParams& params) {
  return std::pow(k, -2.0 * params.l + 1.0 + params.gamma0());
}

/// |h| bound c (1 + |sigma||A|^2) k^{-2l+1-gamma0+delta}.
inline double iso_h_bound(double k, const ProblemParams& params) {
  return params.iso_c * (1.0 + std::abs(params.coupling())) *
         std::pow(k, -2.0 * params.l + 1.0 - params.gamma0() + params.delta);
}

/// |grad_nu h| bound c (1 + |sigma||A|^2) k^{-2l+n-gamma0+2 delta}.
inline double iso_grad_bound(double k, const ProblemParams& params) {
  return params.iso_c * (1.0 + std::abs(params.coupling())) *
         std::pow(k, -2.0 * params.l + params.n - params.gamma0() + 2.0 * params.delta);
}

struct IsoPoint {
  std::size_t index = 0;  // position in the sampled stream
  std::vector<double> nu;
  double kappa = 0.0;
  double h = 0.0;  // kappa - k~
  int iterations = 0;
  double resid = 0.0;  // |lambda(kappa nu, A) - lambda|
  std::string status = "ok";
  LatticeIndex j;
  double k_tilde = 0.0;
  double best_c = 0.0;  // |h| / ((1 + |sigma||A|^2) k^{-2l+1-gamma0+delta})
  std::vector<BoundCheck> checks;
};

/// Solves lambda(kappa nu, A) = lambda for kappa on
/// I = [k - k^{-2l+1+gamma0}, k + k^{-2l+1+gamma0}], k = lambda^{1/2l}.
inline IsoPoint kappa_solve(double lambda, std::span<const double> nu, const FourierField& V,
                            const ProblemParams& params, const SolveOptions& opts = {}) {
  params.validate();
  const double k = std::pow(lambda, 1.0 / (2 * params.l));
  if (!in_B(params, k, nu))
    throw Error(ErrorKind::Resonant, "direction is not in B(lambda) at k = " + format_number(k));

  IsoPoint pt;
  pt.nu.assign(nu.begin(), nu.end());
  pt.k_tilde = shifted_radius(lambda, params);
  const double w = iso_half_width(k, params);
  const double lo = k - w;
  const double hi = k + w;
  const int two_l = 2 * params.l;

  int evals = 0;
  auto f = [&](double kappa) {
    ++evals;
    return lambda_of_kappa(kappa, nu, V, params, opts) - lambda;
  };
  auto deriv = [&](double kappa) { return two_l * std::pow(kappa, two_l - 1); };
  const double flo = f(lo);
  const double fhi = f(hi);
  if (!(flo < 0.0 && fhi > 0.0))
    throw Error(ErrorKind::NoRootInInterval, "lambda(kappa nu) - lambda has no sign change on I: f(lo) = " +
                                                 format_number(flo) + ", f(hi) = " + format_number(fhi));
  const RootResult r =
      safeguarded_newton(f, deriv, lo, hi, flo, fhi, pt.k_tilde, params.tol_root * lambda, 1e-15 * k);
  pt.kappa = r.x;
  pt.h = r.x - pt.k_tilde;
  pt.iterations = evals;
  pt.resid = std::abs(r.fx);
  pt.j = direction_decompose(params, pt.kappa, nu).j;

  const double k1 = k1_threshold(star_norm(V), params);
  const bool hard = is_hard(opts.bounds, k, k1);
  const double base = iso_h_bound(k, params) / params.iso_c;
  pt.best_c = std::abs(pt.h) / base;
  pt.checks.push_back(make_check("|lambda(kappa nu) - lambda| <= tol_root lambda", pt.resid, params.tol_root * lambda,
                                 true));
  pt.checks.push_back(make_check("kappa in I", std::abs(pt.kappa - k), w, true));
  pt.checks.push_back(make_check("|kappa - k~| <= c(1+|sigma||A|^2) k^{-2l+1-gamma0+delta}", std::abs(pt.h),
                                 iso_h_bound(k, params), hard));
  if (hard) enforce(pt.checks);
  return pt;
}

struct SurfaceHole {
  std::size_t index = 0;
  std::vector<double> nu;
  std::string reason;
};

struct SurfaceSample {
  double lambda = 0.0;
  double k = 0.0;
  std::size_t requested = 0;
  std::size_t in_B = 0;
  std::vector<IsoPoint> points;
  std::vector<SurfaceHole> holes;
};

/// Solves kappa along `samples` seeded uniform directions; directions outside
/// B(lambda) and failed solves are recorded as holes.
inline SurfaceSample surface_sample(double lambda, const FourierField& V, const ProblemParams& params,
                                    std::size_t samples, std::uint64_t seed, const SolveOptions& opts = {}) {
  if (samples < 1) throw Error(ErrorKind::Validation, "surface_sample needs at least one sample");
  SurfaceSample out;
  out.lambda = lambda;
  out.k = std::pow(lambda, 1.0 / (2 * params.l));
  out.requested = samples;
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<double> nu = sample_direction(params.n, seed, i);
    if (!in_B(params, out.k, nu)) {
      out.holes.push_back({i, std::move(nu), "not in B(lambda)"});
      continue;
    }
    ++out.in_B;
    try {
      out.points.push_back(kappa_solve(lambda, nu, V, params, opts));
      out.points.back().index = i;
    } catch (const Error& e) {
      out.holes.push_back({i, std::move(nu), std::string(to_string(e.kind())) + ": " + e.what()});
    }
  }
  return out;
}

/// Tangential finite-difference gradient of h along geodesics
/// cos(theta) nu + sin(theta) tau.
struct HGradient {
  std::vector<std::vector<double>> tangents;
  std::vector<double> grad;       // step theta
  std::vector<double> grad_half;  // step theta / 2
  double magnitude = 0.0;         // Richardson-extrapolated
  double richardson_rel = 0.0;
  std::vector<BoundCheck> checks;
};

/// n - 1 orthonormal tangents at nu: Gram-Schmidt of the standard basis with
/// the axis of largest |nu_s| dropped (smallest index on ties).
inline std::vector<std::vector<double>> tangent_frame(std::span<const double> nu) {
  const std::size_t n = nu.size();
  std::size_t drop = 0;
  for (std::size_t s = 1; s < n; ++s)
    if (std::abs(nu[s]) > std::abs(nu[drop])) drop = s;
  std::vector<std::vector<double>> frame{std::vector<double>(nu.begin(), nu.end())};
  for (std::size_t s = 0; s < n; ++s) {
    if (s == drop) continue;
    std::vector<double> v(n, 0.0);
    v[s] = 1.0;
    for (const auto& u : frame) {
      double d = 0.0;
      for (std::size_t c = 0; c < n; ++c) d += u[c] * v[c];
      for (std::size_t c = 0; c < n; ++c) v[c] -= d * u[c];
    }
    const double nv = std::sqrt(norm2_sq(v));
    for (double& x : v) x /= nv;
    frame.push_back(std::move(v));
  }
  frame.erase(frame.begin());
  return frame;
}

inline HGradient grad_h_fd(const IsoPoint& point, double lambda, const FourierField& V, const ProblemParams& params,
                           double step, const SolveOptions& opts = {}) {
  HGradient out;
  out.tangents = tangent_frame(point.nu);
  const double k = std::pow(lambda, 1.0 / (2 * params.l));
  auto h_at = [&](const std::vector<double>& tau, double theta) {
    std::vector<double> nu(point.nu.size());
    for (std::size_t c = 0; c < nu.size(); ++c) nu[c] = std::cos(theta) * point.nu[c] + std::sin(theta) * tau[c];
    const double norm = std::sqrt(norm2_sq(nu));
    for (double& x : nu) x /= norm;
    try {
      return kappa_solve(lambda, nu, V, params, opts).h;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Resonant || e.kind() == ErrorKind::NoRootInInterval)
        throw Error(ErrorKind::NeighborhoodExit, std::string("gradient stencil left B(lambda): ") + e.what());
      throw;
    }
  };
  double num = 0.0, den = 0.0, mag = 0.0;
  for (const auto& tau : out.tangents) {
    const double g = (h_at(tau, step) - h_at(tau, -step)) / (2.0 * step);
    const double gh = (h_at(tau, 0.5 * step) - h_at(tau, -0.5 * step)) / step;
    out.grad.push_back(g);
    out.grad_half.push_back(gh);
    const double ex = (4.0 * gh - g) / 3.0;
    mag += ex * ex;
    num += (gh - g) * (gh - g);
    den += gh * gh;
  }
  out.magnitude = std::sqrt(mag);
  out.richardson_rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  const bool hard = is_hard(opts.bounds, k, k1_threshold(star_norm(V), params));
  out.checks.push_back(make_check("|grad_nu h| < c(1+|sigma||A|^2) k^{-2l+n-gamma0+2delta}", out.magnitude,
                                  iso_grad_bound(k, params), hard, true));
  if (hard) enforce(out.checks);
  return out;
}

struct SurfaceMeasure {
  double k = 0.0;
  std::size_t samples = 0;
  std::size_t solved = 0;
  double fraction = 0.0;  // solved / samples
  double stderr_ = 0.0;
  double mean_jacobian = 1.0;  // mean (kappa / k)^{n-1} over solved points
  double ratio = 0.0;          // fraction * mean_jacobian
  double sphere_measure = 0.0; // omega_{n-1} k^{n-1}
  double measure = 0.0;        // sphere_measure * ratio
};

inline SurfaceMeasure surface_measure_report(const SurfaceSample& s, const ProblemParams& params) {
  SurfaceMeasure m;
  m.k = s.k;
  m.samples = s.requested;
  m.solved = s.points.size();
  m.fraction = static_cast<double>(m.solved) / static_cast<double>(m.samples);
  m.stderr_ = std::sqrt(m.fraction * (1.0 - m.fraction) / static_cast<double>(m.samples));
  if (m.solved > 0) {
    double acc = 0.0;
    for (const auto& p : s.points) acc += std::pow(p.kappa / s.k, params.n - 1);
    m.mean_jacobian = acc / static_cast<double>(m.solved);
  }
  m.ratio = m.fraction * m.mean_jacobian;
  m.sphere_measure = sphere_area(params.n) * std::pow(s.k, params.n - 1);
  m.measure = m.sphere_measure * m.ratio;
  return m;
}

}  // namespace qpwave

#endif  // QPWAVE_ISOSURF_HPP
