#ifndef QPWAVE_PARAMS_HPP
#define QPWAVE_PARAMS_HPP

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "qpwave/error.hpp"

namespace qpwave {

using cd = std::complex<double>;

/// Every scalar knob of a run. Defaults follow the desk-scale reference
/// setup; `n`, `l` and the potential have no sensible default.
struct ProblemParams {
  int n = 2;
  int l = 2;
  double delta = 0.9;
  double sigma = 0.0;
  cd A{1.0, 0.0};
  std::vector<double> t;  // quasimomentum, cell convention [0, 2*pi)^n
  double k = 30.0;
  int R = 12;
  int r_max = 12;
  int n_quad = 64;
  double tol_fix = 1e-10;
  double tol_root = 1e-10;
  double k0_override = 1.0;
  double gamma1 = -1.0;  // < 0 selects gamma0 / 2
  double gamma = -1.0;   // < 0 selects (2l - n) / (4l)
  double prune_tol = 1e-18;
  double iso_c = 10.0;

  double gamma0() const { return 2.0 * l - n - 2.0 * delta; }
  /// Exponent 2l - n - delta of the contour radius.
  double rho_exponent() const { return 2.0 * l - n - delta; }
  double energy() const { return std::pow(k, 2 * l); }
  /// Radius k^{2l-n-delta} of the contour and half-width of the energy window.
  double contour_radius() const { return std::pow(k, rho_exponent()); }
  double coupling() const { return sigma * std::norm(A); }
  double gamma1_value() const { return gamma1 < 0.0 ? 0.5 * gamma0() : gamma1; }
  double gamma_value() const { return gamma < 0.0 ? (2.0 * l - n) / (4.0 * l) : gamma; }

  /// Structural invariants; does not look at amplitude admissibility.
  void validate() const {
    if (n < 2) throw Error(ErrorKind::Validation, "n must be >= 2");
    if (2 * l <= n) throw Error(ErrorKind::Validation, "2l > n is required");
    if (!(delta > 0.0) || !(2.0 * delta < 2.0 * l - n))
      throw Error(ErrorKind::Validation, "delta constraint 0 < 2*delta < 2l - n violated");
    if (static_cast<int>(t.size()) != n)
      throw Error(ErrorKind::Validation, "quasimomentum t must have n components");
    if (!(k > 0.0)) throw Error(ErrorKind::Validation, "k must be positive");
    if (R < 1) throw Error(ErrorKind::Validation, "truncation radius R must be >= 1");
    if (r_max < 2) throw Error(ErrorKind::Validation, "r_max must be >= 2");
    if (n_quad < 8) throw Error(ErrorKind::Validation, "n_quad must be >= 8");
    if (!(tol_fix > 0.0) || !(tol_root > 0.0)) throw Error(ErrorKind::Validation, "tolerances must be positive");
    if (gamma1 >= 0.0 && !(gamma1 < gamma0()))
      throw Error(ErrorKind::Validation, "gamma1 must satisfy gamma1 < gamma0");
    if (gamma >= 0.0 && !(gamma > 0.0 && gamma < (2.0 * l - n) / (2.0 * l)))
      throw Error(ErrorKind::Validation, "gamma must satisfy 0 < gamma < (2l - n)/(2l)");
    if (!(prune_tol >= 0.0)) throw Error(ErrorKind::Validation, "prune_tol must be >= 0");
  }

  /// |sigma||A|^2 < k^{gamma1} and sigma|A|^2 < lambda^gamma with lambda = k^{2l}.
  void validate_amplitude() const {
    const double c = coupling();
    if (!(std::abs(c) < std::pow(k, gamma1_value())))
      throw Error(ErrorKind::Validation, "amplitude admissibility |sigma||A|^2 < k^gamma1 violated");
    if (!(c < std::pow(energy(), gamma_value())))
      throw Error(ErrorKind::Validation, "amplitude admissibility sigma|A|^2 < lambda^gamma violated");
  }
};

}  // namespace qpwave

#endif  // QPWAVE_PARAMS_HPP
