#ifndef QPWAVE_ROOT_HPP
#define QPWAVE_ROOT_HPP

#include <cmath>

#include "qpwave/error.hpp"

namespace qpwave {

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
  int newton_steps = 0;
  int bisections = 0;
};

/// Newton iteration with a model derivative, kept inside a sign-change bracket
/// [a, b] (f(a) < 0 < f(b)) by falling back to bisection. Stops once
/// |f| <= abs_tol, then takes up to `polish` further Newton steps while the
/// step exceeds x_tol.
template <class F, class D>
RootResult safeguarded_newton(F&& f, D&& deriv, double a, double b, double fa, double fb, double x0, double abs_tol,
                              double x_tol, int max_eval = 100, int polish = 3) {
  if (!(fa < 0.0 && fb > 0.0)) throw Error(ErrorKind::NoRootInInterval, "no sign change across the bracket");
  RootResult r;
  double x = (x0 > a && x0 < b) ? x0 : 0.5 * (a + b);
  double fx = f(x);
  ++r.evaluations;
  int polished = 0;
  while (true) {
    const bool small = std::abs(fx) <= abs_tol;
    if (fx < 0.0) a = x; else if (fx > 0.0) b = x;
    double next = x - fx / deriv(x);
    if (small && (polished >= polish || std::abs(next - x) <= x_tol || fx == 0.0)) break;
    if (r.evaluations >= max_eval) {
      if (small) break;
      throw Error(ErrorKind::NoConvergence, "root iteration exceeded the evaluation budget");
    }
    if (!(next > a && next < b)) {
      next = 0.5 * (a + b);
      ++r.bisections;
    } else {
      ++r.newton_steps;
    }
    if (next == x) break;
    if (small) ++polished;
    x = next;
    fx = f(x);
    ++r.evaluations;
  }
  r.x = x;
  r.fx = fx;
  return r;
}

}  // namespace qpwave

#endif  // QPWAVE_ROOT_HPP
