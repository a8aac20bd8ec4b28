#ifndef QPWAVE_FIELD_HPP
#define QPWAVE_FIELD_HPP

#include <cmath>
#include <complex>
#include <map>
#include <span>
#include <vector>

#include "qpwave/error.hpp"
#include "qpwave/lattice.hpp"
#include "qpwave/params.hpp"

namespace qpwave {

/// Accumulates star-norm mass lost to box clipping and coefficient pruning.
struct TruncationBudget {
  double clipped = 0.0;
  double pruned = 0.0;

  double total() const { return clipped + pruned; }
  TruncationBudget& operator+=(const TruncationBudget& o) {
    clipped += o.clipped;
    pruned += o.pruned;
    return *this;
  }
};

/// Periodic function on the cell [0, 2*pi)^n stored by its nonzero Fourier
/// coefficients c_q, ||q||_inf <= R, with f(x) = sum_q c_q exp(i <q, x>).
class FourierField {
 public:
  using Coefficients = std::map<LatticeIndex, cd>;

  FourierField() = default;
  FourierField(int n, int radius, bool hermitian = true) : n_(n), radius_(radius), hermitian_(hermitian) {
    if (n < 1 || radius < 0) throw Error(ErrorKind::Validation, "FourierField: bad dimension or radius");
  }

  /// Validates dimensions, box membership and (when flagged) conjugate
  /// symmetry. Exact zeros are dropped.
  FourierField(int n, int radius, Coefficients coeffs, bool hermitian) : FourierField(n, radius, hermitian) {
    for (auto& [q, c] : coeffs) {
      if (q.dim() != n) throw Error(ErrorKind::Validation, "FourierField: index " + q.str() + " has wrong dimension");
      if (q.max_abs() > radius)
        throw Error(ErrorKind::Validation, "FourierField: index " + q.str() + " outside truncation box");
      if (c != cd(0.0, 0.0)) coeffs_.emplace(q, c);
    }
    if (hermitian_) {
      double scale = 0.0;
      for (const auto& [q, c] : coeffs_) scale += std::abs(c);
      for (const auto& [q, c] : coeffs_) {
        const cd mirror = at(-q);
        if (std::abs(mirror - std::conj(c)) > 1e-14 * scale)
          throw Error(ErrorKind::Validation, "FourierField: hermitian flag set but c[-q] != conj(c[q]) at q = " + q.str());
      }
    }
  }

  static FourierField constant(int n, int radius, cd value) {
    Coefficients c;
    c.emplace(LatticeIndex::zero(n), value);
    return FourierField(n, radius, std::move(c), value.imag() == 0.0);
  }

  int dim() const { return n_; }
  int radius() const { return radius_; }
  bool hermitian() const { return hermitian_; }
  const Coefficients& coefficients() const { return coeffs_; }
  std::size_t support_size() const { return coeffs_.size(); }
  bool is_zero() const { return coeffs_.empty(); }

  cd at(const LatticeIndex& q) const {
    auto it = coeffs_.find(q);
    return it == coeffs_.end() ? cd(0.0, 0.0) : it->second;
  }
  cd mean() const { return at(LatticeIndex::zero(n_)); }

 private:
  int n_ = 0;
  int radius_ = 0;
  bool hermitian_ = true;
  Coefficients coeffs_;
};

inline double star_norm(const FourierField& f) {
  double s = 0.0;
  for (const auto& [q, c] : f.coefficients()) s += std::abs(c);
  return s;
}

/// Exact scan of c[-q] == conj(c[q]).
inline bool is_conjugate_symmetric(const FourierField& f, double tol = 0.0) {
  for (const auto& [q, c] : f.coefficients())
    if (std::abs(f.at(-q) - std::conj(c)) > tol) return false;
  return true;
}

namespace detail {

inline void require_compatible(const FourierField& a, const FourierField& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::Validation, "FourierField: dimension mismatch");
}

inline FourierField combine(const FourierField& a, const FourierField& b, cd alpha, cd beta) {
  require_compatible(a, b);
  FourierField::Coefficients out;
  for (const auto& [q, c] : a.coefficients()) out[q] += alpha * c;
  for (const auto& [q, c] : b.coefficients()) out[q] += beta * c;
  const bool herm = a.hermitian() && b.hermitian() && alpha.imag() == 0.0 && beta.imag() == 0.0;
  return FourierField(a.dim(), std::max(a.radius(), b.radius()), std::move(out), herm);
}

}  // namespace detail

inline FourierField operator+(const FourierField& a, const FourierField& b) { return detail::combine(a, b, 1.0, 1.0); }
inline FourierField operator-(const FourierField& a, const FourierField& b) { return detail::combine(a, b, 1.0, -1.0); }

inline FourierField scale(const FourierField& f, cd alpha) {
  FourierField::Coefficients out;
  for (const auto& [q, c] : f.coefficients()) out.emplace(q, alpha * c);
  return FourierField(f.dim(), f.radius(), std::move(out), f.hermitian() && alpha.imag() == 0.0);
}

/// Coefficients of the complex conjugate function: conj(c[-q]).
inline FourierField conj(const FourierField& f) {
  FourierField::Coefficients out;
  for (const auto& [q, c] : f.coefficients()) out.emplace(-q, std::conj(c));
  return FourierField(f.dim(), f.radius(), std::move(out), f.hermitian());
}

inline FourierField with_radius(const FourierField& f, int radius, TruncationBudget* budget = nullptr) {
  FourierField::Coefficients out;
  double lost = 0.0;
  for (const auto& [q, c] : f.coefficients()) {
    if (q.max_abs() <= radius)
      out.emplace(q, c);
    else
      lost += std::abs(c);
  }
  if (budget) budget->clipped += lost;
  return FourierField(f.dim(), radius, std::move(out), f.hermitian());
}

/// Zeroes the q = 0 coefficient.
inline FourierField remove_mean(const FourierField& f) {
  FourierField::Coefficients out = f.coefficients();
  out.erase(LatticeIndex::zero(f.dim()));
  return FourierField(f.dim(), f.radius(), std::move(out), f.hermitian());
}

inline FourierField add_constant(const FourierField& f, cd value) {
  return f + FourierField::constant(f.dim(), f.radius(), value);
}

/// Drops coefficients with |c| <= rel_tol * ||f||_*; dropped mass goes to
/// budget->pruned. Conjugate pairs have equal modulus so symmetry survives.
inline FourierField prune(const FourierField& f, double rel_tol, TruncationBudget* budget = nullptr) {
  if (rel_tol <= 0.0) return f;
  const double cut = rel_tol * star_norm(f);
  FourierField::Coefficients out;
  double lost = 0.0;
  for (const auto& [q, c] : f.coefficients()) {
    if (std::abs(c) > cut)
      out.emplace(q, c);
    else
      lost += std::abs(c);
  }
  if (budget) budget->pruned += lost;
  return FourierField(f.dim(), f.radius(), std::move(out), f.hermitian());
}

/// Coefficients of the pointwise product f*g (a lattice convolution), kept
/// on the box of radius out_radius; mass outside goes to budget->clipped.
inline FourierField convolve(const FourierField& f, const FourierField& g, int out_radius,
                             TruncationBudget* budget = nullptr) {
  detail::require_compatible(f, g);
  const int n = f.dim();
  const int full = f.radius() + g.radius();
  const BoxIndexer box(n, full);
  std::vector<cd> acc(box.size(), cd(0.0, 0.0));
  std::vector<char> touched(box.size(), 0);
  for (const auto& [p, a] : f.coefficients())
    for (const auto& [q, b] : g.coefficients()) {
      const std::size_t idx = box.linear(p + q);
      acc[idx] += a * b;
      touched[idx] = 1;
    }
  FourierField::Coefficients out;
  double lost = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (!touched[i]) continue;
    const LatticeIndex q = box.at(i);
    if (q.max_abs() <= out_radius)
      out.emplace(q, acc[i]);
    else
      lost += std::abs(acc[i]);
  }
  if (budget) budget->clipped += lost;
  // Products of two hermitian fields are hermitian only up to summation
  // order; callers that need the exact symmetry use squared_modulus.
  return FourierField(n, out_radius, std::move(out), false);
}

/// Coefficients of |f|^2: out[q] = sum_p c[q+p] conj(c[p]). The result is
/// conjugate symmetric to the last bit (the lower half is mirrored) and is
/// clipped to the radius of f.
inline FourierField squared_modulus(const FourierField& f, TruncationBudget* budget = nullptr) {
  const int n = f.dim();
  const int full = 2 * f.radius();
  const BoxIndexer box(n, full);
  std::vector<cd> acc(box.size(), cd(0.0, 0.0));
  std::vector<char> touched(box.size(), 0);
  const auto& cs = f.coefficients();
  for (const auto& [a, ca] : cs)
    for (const auto& [b, cb] : cs) {
      const std::size_t idx = box.linear(a - b);
      acc[idx] += ca * std::conj(cb);
      touched[idx] = 1;
    }
  // Linear order of the symmetric box maps q to size-1-idx for -q.
  const std::size_t last = box.size() - 1;
  FourierField::Coefficients out;
  double lost = 0.0;
  for (std::size_t i = 0; i <= last / 2; ++i) {
    if (!touched[i]) continue;
    const LatticeIndex q = box.at(i);
    cd v = acc[i];
    if (i == last - i) v = cd(v.real(), 0.0);
    if (q.max_abs() <= f.radius()) {
      if (v != cd(0.0, 0.0)) {
        out.emplace(q, v);
        if (i != last - i) out.emplace(-q, std::conj(v));
      }
    } else {
      lost += (i == last - i ? 1.0 : 2.0) * std::abs(v);
    }
  }
  if (budget) budget->clipped += lost;
  return FourierField(n, f.radius(), std::move(out), true);
}

/// sum_q c_q exp(i <q, x>).
inline cd point_eval(const FourierField& f, std::span<const double> x) {
  if (static_cast<int>(x.size()) != f.dim()) throw Error(ErrorKind::Validation, "point_eval: dimension mismatch");
  cd s(0.0, 0.0);
  for (const auto& [q, c] : f.coefficients()) {
    double phase = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) phase += q.q[i] * x[i];
    s += c * std::polar(1.0, phase);
  }
  return s;
}

}  // namespace qpwave

#endif  // QPWAVE_FIELD_HPP
