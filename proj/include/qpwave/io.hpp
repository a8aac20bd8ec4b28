#ifndef QPWAVE_IO_HPP
#define QPWAVE_IO_HPP

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "qpwave/checks.hpp"
#include "qpwave/field.hpp"
#include "qpwave/lattice.hpp"

namespace qpwave::io {

using json = nlohmann::json;

inline json to_json(const LatticeIndex& q) { return q.q; }

/// Field literal: the same {q, re, im} records the config file accepts.
inline json to_json(const FourierField& f) {
  json arr = json::array();
  for (const auto& [q, c] : f.coefficients()) arr.push_back({{"q", q.q}, {"re", c.real()}, {"im", c.imag()}});
  return arr;
}

inline json to_json(const BoundCheck& c) {
  return {{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"mode", c.hard ? "hard" : "soft"}, {"pass", c.pass}};
}

inline json to_json(const std::vector<BoundCheck>& checks) {
  json arr = json::array();
  for (const auto& c : checks) arr.push_back(to_json(c));
  return arr;
}

inline json to_json(const TruncationBudget& b) { return {{"clipped", b.clipped}, {"pruned", b.pruned}}; }

/// %.17g, which round-trips every double.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Minimal CSV writer; fields are written verbatim, numbers via num().
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace qpwave::io

#endif  // QPWAVE_IO_HPP
