#ifndef QPWAVE_LATTICE_HPP
#define QPWAVE_LATTICE_HPP

#include <cmath>
#include <compare>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qpwave/error.hpp"

namespace qpwave {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Integer point of Z^n. Used both for absolute Bloch indices j and for
/// Fourier offsets q relative to the carrier.
struct LatticeIndex {
  std::vector<int> q;

  LatticeIndex() = default;
  explicit LatticeIndex(std::vector<int> components) : q(std::move(components)) {}
  LatticeIndex(std::initializer_list<int> components) : q(components) {}

  static LatticeIndex zero(int n) { return LatticeIndex(std::vector<int>(static_cast<std::size_t>(n), 0)); }

  int dim() const { return static_cast<int>(q.size()); }
  int operator[](std::size_t s) const { return q[s]; }
  int& operator[](std::size_t s) { return q[s]; }

  int max_abs() const {
    int m = 0;
    for (int c : q) m = std::max(m, std::abs(c));
    return m;
  }
  bool is_zero() const {
    for (int c : q)
      if (c != 0) return false;
    return true;
  }

  friend LatticeIndex operator+(const LatticeIndex& a, const LatticeIndex& b) {
    LatticeIndex r = a;
    for (std::size_t s = 0; s < r.q.size(); ++s) r.q[s] += b.q[s];
    return r;
  }
  friend LatticeIndex operator-(const LatticeIndex& a, const LatticeIndex& b) {
    LatticeIndex r = a;
    for (std::size_t s = 0; s < r.q.size(); ++s) r.q[s] -= b.q[s];
    return r;
  }
  friend LatticeIndex operator-(const LatticeIndex& a) {
    LatticeIndex r = a;
    for (int& c : r.q) c = -c;
    return r;
  }
  friend bool operator==(const LatticeIndex&, const LatticeIndex&) = default;
  friend auto operator<=>(const LatticeIndex&, const LatticeIndex&) = default;

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(q[i]);
    }
    return s + ")";
  }
};

/// Dense enumeration of the box ||q||_inf <= R in lexicographic order
/// (last axis fastest).
class BoxIndexer {
 public:
  BoxIndexer(int n, int radius) : n_(n), radius_(radius), side_(2 * radius + 1) {
    size_ = 1;
    for (int s = 0; s < n_; ++s) size_ *= static_cast<std::size_t>(side_);
  }

  int dim() const { return n_; }
  int radius() const { return radius_; }
  std::size_t size() const { return size_; }

  bool contains(const LatticeIndex& q) const { return q.max_abs() <= radius_; }

  std::size_t linear(const LatticeIndex& q) const {
    std::size_t idx = 0;
    for (int s = 0; s < n_; ++s) idx = idx * static_cast<std::size_t>(side_) + static_cast<std::size_t>(q.q[s] + radius_);
    return idx;
  }

  LatticeIndex at(std::size_t idx) const {
    LatticeIndex q = LatticeIndex::zero(n_);
    for (int s = n_ - 1; s >= 0; --s) {
      q.q[s] = static_cast<int>(idx % static_cast<std::size_t>(side_)) - radius_;
      idx /= static_cast<std::size_t>(side_);
    }
    return q;
  }

  /// Calls f(q) for every q in the box, in linear order.
  template <class F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < size_; ++i) f(at(i));
  }

 private:
  int n_;
  int radius_;
  int side_;
  std::size_t size_;
};

/// Dual lattice point p_j(t) = t + 2*pi*j.
inline std::vector<double> p_vec(std::span<const double> t, const LatticeIndex& j) {
  if (t.size() != j.q.size()) throw Error(ErrorKind::Validation, "p_vec: dimension mismatch");
  std::vector<double> p(t.size());
  for (std::size_t s = 0; s < t.size(); ++s) p[s] = t[s] + two_pi * j.q[s];
  return p;
}

inline double norm2_sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// |t + 2*pi*j|^{2l}, the free Bloch eigenvalue.
inline double free_symbol(std::span<const double> t, const LatticeIndex& j, int l) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double c = t[i] + two_pi * j.q[i];
    s += c * c;
  }
  return std::pow(s, l);
}

}  // namespace qpwave

#endif  // QPWAVE_LATTICE_HPP
