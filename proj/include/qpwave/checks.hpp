#ifndef QPWAVE_CHECKS_HPP
#define QPWAVE_CHECKS_HPP

#include <cstdio>
#include <string>
#include <vector>

#include "qpwave/error.hpp"

namespace qpwave {

/// How theoretical inequalities are treated. Auto is hard exactly when the
/// carrier radius exceeds the large-k threshold k1.
enum class BoundMode { Auto, Hard, Soft };

inline const char* to_string(BoundMode m) {
  switch (m) {
    case BoundMode::Auto: return "auto";
    case BoundMode::Hard: return "hard";
    case BoundMode::Soft: return "soft";
  }
  return "auto";
}

inline bool is_hard(BoundMode mode, double k, double k1) {
  return mode == BoundMode::Hard || (mode == BoundMode::Auto && k > k1);
}

/// One evaluated inequality lhs <= rhs (or lhs < rhs when strict).
struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool hard = false;
  bool pass = true;
};

inline BoundCheck make_check(std::string name, double lhs, double rhs, bool hard, bool strict = false) {
  return BoundCheck{std::move(name), lhs, rhs, hard, strict ? lhs < rhs : lhs <= rhs};
}

inline bool all_hard_pass(const std::vector<BoundCheck>& checks) {
  for (const auto& c : checks)
    if (c.hard && !c.pass) return false;
  return true;
}

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Throws BoundViolation on the first failed hard check.
inline void enforce(const std::vector<BoundCheck>& checks) {
  for (const auto& c : checks)
    if (c.hard && !c.pass)
      throw Error(ErrorKind::BoundViolation,
                  c.name + ": " + format_number(c.lhs) + " exceeds " + format_number(c.rhs));
}

}  // namespace qpwave

#endif  // QPWAVE_CHECKS_HPP
