#ifndef QPWAVE_CONFIG_HPP
#define QPWAVE_CONFIG_HPP

// Run configuration: a flat `key = value` text format.
//
//   # comment to end of line
//   n = 2
//   l = 2
//   t = [1.5, 1.2]
//   A = [1, 0]                     # or a real number
//   bounds = auto                  # bare words and "quoted strings" are both strings
//   potential = [
//     {q: [1, 0], re: 1, im: 0},
//     {q: [-1, 0], re: 1, im: 0},
//   ]
//
// Values are numbers, strings, true/false, lists [..] and records {key: value}.
// Inside brackets newlines are insignificant; at top level one entry per line.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "qpwave/checks.hpp"
#include "qpwave/error.hpp"
#include "qpwave/field.hpp"
#include "qpwave/fixpoint.hpp"
#include "qpwave/params.hpp"

namespace qpwave {

namespace detail {

class ConfigParser {
 public:
  explicit ConfigParser(std::string_view text) : s_(text) {}

  /// Entries in file order with the line each key appeared on.
  std::vector<std::tuple<std::string, nlohmann::json, int>> parse() {
    std::vector<std::tuple<std::string, nlohmann::json, int>> out;
    while (true) {
      skip_blank(true);
      if (eof()) break;
      const int line = line_;
      if (!is_ident_start(peek())) fail("expected a key");
      std::string key = ident();
      skip_blank(false);
      if (peek() != '=') fail("expected '=' after key '" + key + "'");
      ++pos_;
      ++col_;
      skip_blank(false);
      nlohmann::json v = value(0);
      skip_blank(false);
      if (!eof() && peek() != '\n') fail("unexpected text after value of '" + key + "'");
      out.emplace_back(std::move(key), std::move(v), line);
    }
    return out;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  static bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line_) + ", column " + std::to_string(col_) + ": " + what);
  }

  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_blank(bool newlines) {
    while (!eof()) {
      const char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string ident() {
    std::string r;
    while (!eof() && is_ident(peek())) {
      r += peek();
      advance();
    }
    return r;
  }

  std::string quoted() {
    const char q = peek();
    advance();
    std::string r;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = peek();
      advance();
      if (c == q) break;
      if (c == '\\') {
        if (eof()) fail("unterminated string");
        r += peek();
        advance();
      } else {
        r += c;
      }
    }
    return r;
  }

  nlohmann::json number() {
    const std::size_t start = pos_;
    while (!eof()) {
      const char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-')
        advance();
      else
        break;
    }
    const std::string tok(s_.substr(start, pos_ - start));
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || tok.empty()) fail("malformed number '" + tok + "'");
    return v;
  }

  nlohmann::json value(int depth) {
    if (eof()) fail("expected a value");
    const char c = peek();
    if (c == '[') {
      advance();
      nlohmann::json arr = nlohmann::json::array();
      while (true) {
        skip_blank(true);
        if (peek() == ']') {
          advance();
          return arr;
        }
        arr.push_back(value(depth + 1));
        skip_blank(true);
        if (peek() == ',') {
          advance();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in list");
        }
      }
    }
    if (c == '{') {
      advance();
      nlohmann::json obj = nlohmann::json::object();
      while (true) {
        skip_blank(true);
        if (peek() == '}') {
          advance();
          return obj;
        }
        std::string key;
        if (peek() == '"' || peek() == '\'') key = quoted();
        else if (is_ident_start(peek())) key = ident();
        else fail("expected a record key");
        if (obj.contains(key)) fail("duplicate record key '" + key + "'");
        skip_blank(true);
        if (peek() != ':') fail("expected ':' after record key '" + key + "'");
        advance();
        skip_blank(true);
        obj[key] = value(depth + 1);
        skip_blank(true);
        if (peek() == ',') {
          advance();
        } else if (peek() != '}') {
          fail("expected ',' or '}' in record");
        }
      }
    }
    if (c == '"' || c == '\'') return quoted();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') return number();
    if (is_ident_start(c)) {
      const std::string w = ident();
      if (w == "true") return true;
      if (w == "false") return false;
      return w;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

inline double as_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw Error(ErrorKind::Validation, "key '" + key + "' expects a number");
  return v.get<double>();
}

inline int as_int(const nlohmann::json& v, const std::string& key) {
  const double d = as_number(v, key);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw Error(ErrorKind::Validation, "key '" + key + "' expects an integer");
  return static_cast<int>(d);
}

inline bool as_bool(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) throw Error(ErrorKind::Validation, "key '" + key + "' expects true or false");
  return v.get<bool>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw Error(ErrorKind::Validation, "key '" + key + "' expects a string");
  return v.get<std::string>();
}

inline std::vector<double> as_vector(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) throw Error(ErrorKind::Validation, "key '" + key + "' expects a list of numbers");
  std::vector<double> r;
  for (const auto& x : v) r.push_back(as_number(x, key));
  return r;
}

}  // namespace detail

struct RunConfig {
  ProblemParams params;
  FourierField potential;
  BoundMode bounds = BoundMode::Auto;
  bool strict = false;
  bool cross_check = true;
  bool hermitian = true;
  int max_iter = 50;
  std::uint64_t seed = 1;
  double fd_step = 1e-4;
  std::size_t samples = 1000;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // isosurface target; NaN selects k^{2l}
  std::string out;
  std::string csv;

  SolveOptions solve_options() const {
    SolveOptions o;
    o.bounds = bounds;
    o.strict = strict;
    o.cross_check = cross_check;
    o.max_iter = max_iter;
    return o;
  }
  double target_lambda() const { return std::isnan(lambda) ? params.energy() : lambda; }
};

inline BoundMode parse_bound_mode(const std::string& s) {
  if (s == "auto") return BoundMode::Auto;
  if (s == "hard") return BoundMode::Hard;
  if (s == "soft") return BoundMode::Soft;
  throw Error(ErrorKind::Validation, "bounds must be one of auto, hard, soft");
}

inline FourierField parse_potential(const nlohmann::json& v, int n, int R, bool hermitian) {
  if (!v.is_array()) throw Error(ErrorKind::Validation, "potential must be a list of {q, re, im} records");
  FourierField::Coefficients coeffs;
  for (const auto& rec : v) {
    if (!rec.is_object()) throw Error(ErrorKind::Validation, "potential entries must be {q, re, im} records");
    for (const auto& [key, _] : rec.items())
      if (key != "q" && key != "re" && key != "im")
        throw Error(ErrorKind::Validation, "unknown potential record key '" + key + "'");
    if (!rec.contains("q")) throw Error(ErrorKind::Validation, "potential record without q");
    LatticeIndex q;
    for (const double x : detail::as_vector(rec["q"], "potential.q")) {
      if (x != std::floor(x)) throw Error(ErrorKind::Validation, "potential.q must be integers");
      q.q.push_back(static_cast<int>(x));
    }
    if (q.dim() != n) throw Error(ErrorKind::Validation, "potential index " + q.str() + " must have n components");
    const double re = rec.contains("re") ? detail::as_number(rec["re"], "potential.re") : 0.0;
    const double im = rec.contains("im") ? detail::as_number(rec["im"], "potential.im") : 0.0;
    if (q.is_zero() && (re != 0.0 || im != 0.0))
      throw Error(ErrorKind::Validation,
                  "potential must have v_0 = 0 (mean-free convention; a constant only shifts lambda)");
    if (!coeffs.emplace(q, cd(re, im)).second)
      throw Error(ErrorKind::Validation, "duplicate potential index " + q.str());
  }
  return FourierField(n, R, std::move(coeffs), hermitian);
}

inline RunConfig parse_config(std::string_view text) {
  const auto entries = detail::ConfigParser(text).parse();
  std::map<std::string, nlohmann::json> kv;
  for (const auto& [key, value, line] : entries)
    if (!kv.emplace(key, value).second)
      throw Error(ErrorKind::Validation, "duplicate key '" + key + "' on line " + std::to_string(line));

  static const std::set<std::string> known = {
      "n",        "l",         "delta",  "sigma",  "A",         "t",        "k",        "R",       "r_max",
      "n_quad",   "tol_fix",   "tol_root", "k0_override", "gamma1", "gamma",  "prune_tol", "iso_c",  "hermitian",
      "strict",   "bounds",    "cross_check", "max_iter", "seed",  "fd_step", "samples",  "lambda", "out",
      "csv",      "potential"};
  for (const auto& [key, value, line] : entries)
    if (!known.count(key))
      throw Error(ErrorKind::Validation, "unknown key '" + key + "' on line " + std::to_string(line));
  for (const char* req : {"n", "l", "potential"})
    if (!kv.count(req)) throw Error(ErrorKind::Validation, std::string("missing required key '") + req + "'");

  using namespace detail;
  RunConfig cfg;
  ProblemParams& p = cfg.params;
  p.n = as_int(kv["n"], "n");
  p.l = as_int(kv["l"], "l");
  if (p.n < 1) throw Error(ErrorKind::Validation, "n must be >= 2");
  p.t.assign(static_cast<std::size_t>(p.n), 0.0);
  auto num = [&](const char* key, double& dst) {
    if (kv.count(key)) dst = as_number(kv[key], key);
  };
  auto integer = [&](const char* key, int& dst) {
    if (kv.count(key)) dst = as_int(kv[key], key);
  };
  num("delta", p.delta);
  num("sigma", p.sigma);
  num("k", p.k);
  integer("R", p.R);
  integer("r_max", p.r_max);
  integer("n_quad", p.n_quad);
  num("tol_fix", p.tol_fix);
  num("tol_root", p.tol_root);
  num("k0_override", p.k0_override);
  num("gamma1", p.gamma1);
  num("gamma", p.gamma);
  num("prune_tol", p.prune_tol);
  num("iso_c", p.iso_c);
  if (kv.count("t")) p.t = as_vector(kv["t"], "t");
  if (kv.count("A")) {
    const auto& a = kv["A"];
    if (a.is_number()) {
      p.A = cd(a.get<double>(), 0.0);
    } else {
      const auto v = as_vector(a, "A");
      if (v.size() != 2) throw Error(ErrorKind::Validation, "A must be a number or [re, im]");
      p.A = cd(v[0], v[1]);
    }
  }
  if (kv.count("hermitian")) cfg.hermitian = as_bool(kv["hermitian"], "hermitian");
  if (kv.count("strict")) cfg.strict = as_bool(kv["strict"], "strict");
  if (kv.count("cross_check")) cfg.cross_check = as_bool(kv["cross_check"], "cross_check");
  if (kv.count("bounds")) cfg.bounds = parse_bound_mode(as_string(kv["bounds"], "bounds"));
  integer("max_iter", cfg.max_iter);
  if (cfg.max_iter < 1) throw Error(ErrorKind::Validation, "max_iter must be >= 1");
  if (kv.count("seed")) {
    const double s = as_number(kv["seed"], "seed");
    if (s < 0 || s != std::floor(s) || s > 9007199254740992.0)
      throw Error(ErrorKind::Validation, "seed must be a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  num("fd_step", cfg.fd_step);
  if (!(cfg.fd_step > 0.0)) throw Error(ErrorKind::Validation, "fd_step must be positive");
  if (kv.count("samples")) {
    const int s = as_int(kv["samples"], "samples");
    if (s < 1) throw Error(ErrorKind::Validation, "samples must be >= 1");
    cfg.samples = static_cast<std::size_t>(s);
  }
  num("lambda", cfg.lambda);
  if (kv.count("out")) cfg.out = as_string(kv["out"], "out");
  if (kv.count("csv")) cfg.csv = as_string(kv["csv"], "csv");

  p.validate();
  p.validate_amplitude();
  cfg.potential = parse_potential(kv["potential"], p.n, p.R, cfg.hermitian);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace qpwave

#endif  // QPWAVE_CONFIG_HPP
