// Shared setups: the desk-scale reference point and a few potentials.
#pragma once

#include <cmath>
#include <vector>

#include "qpwave/field.hpp"
#include "qpwave/lattice.hpp"
#include "qpwave/params.hpp"

namespace fixture {

using qpwave::cd;
using qpwave::FourierField;
using qpwave::LatticeIndex;

/// amp * (2 cos x1 + 2 cos x2).
inline FourierField two_cos(double amp, int radius) {
  FourierField::Coefficients c;
  c[{1, 0}] = amp;
  c[{-1, 0}] = amp;
  c[{0, 1}] = amp;
  c[{0, -1}] = amp;
  return FourierField(2, radius, std::move(c), true);
}

/// amp * 2 cos x1 only.
inline FourierField single_mode(double amp, int radius) {
  FourierField::Coefficients c;
  c[{1, 0}] = amp;
  c[{-1, 0}] = amp;
  return FourierField(2, radius, std::move(c), true);
}

/// Real potential with modes e1, e2 and e1 + e2, so closed paths of odd
/// length exist (e1 + e2 - (e1 + e2) = 0 in three steps).
inline FourierField triangle(double amp, int radius) {
  FourierField::Coefficients c;
  c[{1, 0}] = amp;
  c[{-1, 0}] = amp;
  c[{0, 1}] = cd(0.6 * amp, 0.3 * amp);
  c[{0, -1}] = cd(0.6 * amp, -0.3 * amp);
  c[{1, 1}] = cd(0.4 * amp, -0.2 * amp);
  c[{-1, -1}] = cd(0.4 * amp, 0.2 * amp);
  return FourierField(2, radius, std::move(c), true);
}

inline const LatticeIndex& ref_j() {
  static const LatticeIndex j{4, 2};
  return j;
}

/// n = 2, l = 2, delta = 0.9, t = (1.5, 1.2), k = |p_(4,2)(t)|.
inline qpwave::ProblemParams reference(int R = 12) {
  qpwave::ProblemParams p;
  p.n = 2;
  p.l = 2;
  p.delta = 0.9;
  p.sigma = 0.1;
  p.A = 1.0;
  p.t = {1.5, 1.2};
  p.k = std::sqrt(qpwave::norm2_sq(qpwave::p_vec(p.t, ref_j())));
  p.R = R;
  p.r_max = 12;
  p.n_quad = 64;
  p.tol_fix = 1e-10;
  p.tol_root = 1e-10;
  return p;
}

}  // namespace fixture
