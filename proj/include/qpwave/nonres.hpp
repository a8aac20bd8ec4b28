#ifndef QPWAVE_NONRES_HPP
#define QPWAVE_NONRES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qpwave/error.hpp"
#include "qpwave/lattice.hpp"
#include "qpwave/params.hpp"
#include "qpwave/sampling.hpp"

namespace qpwave {

/// Outcome of the separation test at (t, k).
struct NonResonanceReport {
  bool pass = false;
  LatticeIndex j;        // window member when window_count == 1, else the closest level
  int window_count = 0;  // #{q : p_q^{2l}(t) in (k^{2l} - rho, k^{2l} + rho)}
  double margin = 0.0;   // min_{q != j} |p_q^{2l}(t) - k^{2l}| - 2 rho
};

namespace detail {

inline double ipow(double x, int e) {
  double r = 1.0;
  while (e > 0) {
    if (e & 1) r *= x;
    x *= x;
    e >>= 1;
  }
  return r;
}

}  // namespace detail

/// Throws BoxTooSmall unless every q with p_q^{2l}(t) <= k^{2l} + 4 rho lies
/// in the scan box ||q||_inf <= R.
inline void check_scan_box(const ProblemParams& params, std::span<const double> t, double k) {
  double tmax = 0.0;
  for (double x : t) tmax = std::max(tmax, std::abs(x));
  const double outside = two_pi * (params.R + 1) - tmax;
  const double rho = std::pow(k, params.rho_exponent());
  const double reach = std::pow(std::pow(k, 2 * params.l) + 4.0 * rho, 1.0 / (2 * params.l));
  if (!(outside > reach))
    throw Error(ErrorKind::BoxTooSmall, "truncation radius R = " + std::to_string(params.R) +
                                            " does not cover |p| <= " + std::to_string(reach) +
                                            "; need 2*pi*(R+1) - max|t_s| > reach");
}

/// Scans the lattice box for levels near k^{2l} and reports separation.
inline NonResonanceReport is_nonresonant(const ProblemParams& params, std::span<const double> t, double k) {
  if (static_cast<int>(t.size()) != params.n) throw Error(ErrorKind::Validation, "is_nonresonant: bad t dimension");
  check_scan_box(params, t, k);
  const int l = params.l;
  const double target = std::pow(k, 2 * l);
  const double rho = std::pow(k, params.rho_exponent());
  const BoxIndexer box(params.n, params.R);

  NonResonanceReport rep;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  std::vector<double> p(t.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    const LatticeIndex q = box.at(i);
    double s = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double x = t[c] + two_pi * q.q[c];
      s += x * x;
    }
    const double dev = std::abs(detail::ipow(s, l) - target);
    if (dev < rho) ++rep.window_count;
    if (dev < best) {
      second = best;
      best = dev;
      best_idx = i;
    } else if (dev < second) {
      second = dev;
    }
  }
  rep.j = box.at(best_idx);
  rep.margin = second - 2.0 * rho;
  rep.pass = rep.window_count == 1 && rep.margin > 0.0;
  return rep;
}

/// Splitting of a carrier vector k*nu = t + 2*pi*j with t in [0, 2*pi)^n.
struct Decomposition {
  std::vector<double> t;
  LatticeIndex j;
};

inline Decomposition decompose_vector(std::span<const double> kvec) {
  Decomposition d;
  d.t.resize(kvec.size());
  d.j = LatticeIndex::zero(static_cast<int>(kvec.size()));
  for (std::size_t s = 0; s < kvec.size(); ++s) {
    double js = std::floor(kvec[s] / two_pi);
    double ts = kvec[s] - two_pi * js;
    if (ts >= two_pi) {
      ts -= two_pi;
      js += 1.0;
    } else if (ts < 0.0) {
      ts += two_pi;
      js -= 1.0;
    }
    d.t[s] = ts;
    d.j.q[s] = static_cast<int>(js);
  }
  return d;
}

inline Decomposition direction_decompose(const ProblemParams& params, double k, std::span<const double> nu) {
  if (static_cast<int>(nu.size()) != params.n)
    throw Error(ErrorKind::Validation, "direction_decompose: bad direction dimension");
  if (std::abs(std::sqrt(norm2_sq(nu)) - 1.0) > 1e-12)
    throw Error(ErrorKind::Validation, "direction_decompose: direction is not a unit vector");
  std::vector<double> kv(nu.begin(), nu.end());
  for (double& x : kv) x *= k;
  return decompose_vector(kv);
}

/// Non-resonance test at the decomposition of k*nu; the report's j is the
/// absolute index found by the scan.
inline NonResonanceReport direction_report(const ProblemParams& params, double k, std::span<const double> nu) {
  const Decomposition d = direction_decompose(params, k, nu);
  return is_nonresonant(params, d.t, k);
}

inline bool in_B(const ProblemParams& params, double k, std::span<const double> nu) {
  return direction_report(params, k, nu).pass;
}

struct DirectionSample {
  std::vector<double> nu;
  NonResonanceReport report;
};

/// Draws sample `index` of the seeded stream and tests it.
inline DirectionSample sample_B(const ProblemParams& params, double k, std::uint64_t seed, std::uint64_t index) {
  DirectionSample s;
  s.nu = sample_direction(params.n, seed, index);
  s.report = direction_report(params, k, s.nu);
  return s;
}

struct MeasureEstimate {
  double k = 0.0;
  double fraction = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  std::size_t passes = 0;
};

/// Monte Carlo estimate of |B(k^{2l})| / omega_{n-1}.
inline MeasureEstimate estimate_B_measure(const ProblemParams& params, double k, std::size_t samples,
                                          std::uint64_t seed) {
  if (samples < 1000) throw Error(ErrorKind::Validation, "estimate_B_measure needs at least 1000 samples");
  MeasureEstimate est;
  est.k = k;
  est.samples = samples;
  for (std::size_t i = 0; i < samples; ++i)
    if (sample_B(params, k, seed, i).report.pass) ++est.passes;
  est.fraction = static_cast<double>(est.passes) / static_cast<double>(samples);
  est.stderr_ = std::sqrt(est.fraction * (1.0 - est.fraction) / static_cast<double>(samples));
  return est;
}

}  // namespace qpwave

#endif  // QPWAVE_NONRES_HPP
