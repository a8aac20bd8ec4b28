// qpwave: command-line driver for the linear series, the nonlinear fixed
// point, the non-resonance sampler and the isoenergetic surface.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "qpwave/bloch.hpp"
#include "qpwave/checks.hpp"
#include "qpwave/config.hpp"
#include "qpwave/error.hpp"
#include "qpwave/fixpoint.hpp"
#include "qpwave/io.hpp"
#include "qpwave/isosurf.hpp"
#include "qpwave/nonres.hpp"

using namespace qpwave;
using io::json;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string csv;
  bool dry_run = false;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "run configuration file")->required();
  sub->add_option("--out", a.out, "write the JSON report here instead of stdout");
  sub->add_option("--csv", a.csv, "CSV side file");
  sub->add_flag("--dry-run", a.dry_run, "validate and print derived quantities only");
}

RunConfig load(const CommonArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (!a.out.empty()) cfg.out = a.out;
  if (!a.csv.empty()) cfg.csv = a.csv;
  return cfg;
}

void emit(const RunConfig& cfg, const json& j) {
  const std::string text = j.dump(2) + "\n";
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(cfg.out);
    if (!f) throw Error(ErrorKind::Validation, "cannot open '" + cfg.out + "' for writing");
    f << text;
  }
}

json derived(const RunConfig& cfg) {
  const ProblemParams& p = cfg.params;
  const double norm_V = star_norm(cfg.potential);
  const double k1 = k1_threshold(norm_V, p);
  const double rho = p.contour_radius();
  return {{"n", p.n},
          {"l", p.l},
          {"delta", p.delta},
          {"gamma0", p.gamma0()},
          {"k", p.k},
          {"k1", k1},
          {"k0_override", p.k0_override},
          {"norm_V", norm_V},
          {"coupling", p.coupling()},
          {"rho", rho},
          {"window", {p.energy() - rho, p.energy() + rho}},
          {"lattice_size", BoxIndexer(p.n, p.R).size()},
          {"bounds", is_hard(cfg.bounds, p.k, k1) ? "hard" : "soft"}};
}

/// Compute with enforcement off, then label each asymptotic check with the
/// mode the configuration selects.
void label(std::vector<BoundCheck>& checks, bool hard) {
  for (auto& c : checks) c.hard = hard;
}

SolveOptions soft_options(const RunConfig& cfg) {
  SolveOptions o = cfg.solve_options();
  o.bounds = BoundMode::Soft;
  return o;
}

int verdict(const std::vector<BoundCheck>& checks) { return all_hard_pass(checks) ? 0 : 5; }

json spectral_json(const SpectralPair& sp) {
  json terms = json::array();
  for (const auto& t : sp.terms)
    terms.push_back({{"r", t.r}, {"g", t.g}, {"g_imag", t.g_imag}, {"column_star", t.column_star},
                     {"g_bound", t.g_bound}, {"G_bound", t.G_bound}});
  return {{"lambda", sp.lambda},   {"free_level", sp.free_level}, {"j", io::to_json(sp.j)},
          {"orders", sp.orders},   {"capped", sp.capped},         {"imag_discarded", sp.imag_discarded},
          {"terms", terms},        {"proj_col", io::to_json(sp.proj_col)}};
}

struct LinearReport {
  json body;
  std::vector<BoundCheck> checks;
};

LinearReport linear_report(const RunConfig& cfg, bool oracle) {
  const ProblemParams& p = cfg.params;
  const double k1 = k1_threshold(star_norm(cfg.potential), p);
  const bool hard = is_hard(cfg.bounds, p.k, k1);
  const CenterIndex c = find_center_index(p, p.k);
  const BlochOperator op(p, c.j, cfg.potential);
  SeriesOptions so = SeriesOptions::from(p, false);
  const SpectralPair sp = perturbation_series(op, p.k, so);

  LinearReport rep;
  rep.checks = sp.checks;
  label(rep.checks, hard);
  const ContourNodes nodes = contour_nodes(p.energy(), p.contour_radius(), p.n_quad);
  rep.checks.push_back(make_check("||(H0 - z)^{-1}||_1 <= k^{-2l+n+delta} on C0", max_free_resolvent_norm(op, nodes),
                                  free_resolvent_bound(p), hard));
  rep.body = spectral_json(sp);
  rep.body["margin"] = c.margin;
  if (oracle) {
    const DenseSpectrum ds = dense_oracle(op, p.k);
    const double rel = std::abs(ds.pair.lambda - sp.lambda) / std::abs(sp.lambda);
    const double col = star_norm(ds.pair.proj_col - sp.proj_col);
    rep.body["oracle"] = {{"lambda", ds.pair.lambda}, {"relative_difference", rel}, {"column_star_difference", col},
                          {"eigen_residual", ds.residual}};
    rep.checks.push_back(make_check("|lambda_series - lambda_dense| / lambda <= 1e-8", rel, 1e-8, true));
    rep.checks.push_back(make_check("||column_series - column_dense||_* <= 1e-6", col, 1e-6, true));
  }
  return rep;
}

int run_linear(const CommonArgs& a, bool oracle) {
  RunConfig cfg = load(a);
  if (a.dry_run) {
    emit(cfg, derived(cfg));
    return 0;
  }
  LinearReport rep = linear_report(cfg, oracle);
  json out = derived(cfg);
  out["linear"] = rep.body;
  out["checks"] = io::to_json(rep.checks);
  emit(cfg, out);
  return verdict(rep.checks);
}

struct SolveReport {
  NonlinearSolution sol;
  std::vector<BoundCheck> checks;
};

SolveReport solve_report(const RunConfig& cfg) {
  const ProblemParams& p = cfg.params;
  SolveReport rep;
  rep.sol = solve_nonlinear(cfg.potential, p, soft_options(cfg));
  const bool hard = is_hard(cfg.bounds, p.k, rep.sol.trace.k1);
  const double budget = rep.sol.record.budget.total();

  auto add = [&](std::vector<BoundCheck> cs, bool h) {
    label(cs, h);
    rep.checks.insert(rep.checks.end(), cs.begin(), cs.end());
  };
  add(rep.sol.trace.checks, hard);
  add(cauchy_chain_check(rep.sol.trace, rep.sol.record.W_fixed), hard);
  add(psi_convergence_check(rep.sol.trace, p), hard);
  add(lambda_convergence_check(rep.sol.trace, p), hard);
  std::vector<BoundCheck> thm = rep.sol.record.checks;
  for (auto& c : thm) c.hard = hard && c.name.find("tol_fix") == std::string::npos;
  rep.checks.insert(rep.checks.end(), thm.begin(), thm.end());
  rep.checks.push_back(make_check("residual <= 10 (tol_fix + truncation budget)", rep.sol.record.residual_star,
                                  10.0 * (p.tol_fix + budget), true));
  double worst = 0.0;
  for (const auto& s : rep.sol.trace.steps)
    if (!std::isnan(s.oracle_lambda_diff)) worst = std::max(worst, s.oracle_lambda_diff / std::abs(s.lambda_m));
  if (cfg.cross_check)
    rep.checks.push_back(make_check("max_m |lambda_m - lambda_m(dense)| / lambda_m <= 1e-8", worst, 1e-8, true));
  return rep;
}

json solution_json(const RunConfig& cfg, const SolveReport& rep) {
  const SolutionRecord& r = rep.sol.record;
  const IterationTrace& tr = rep.sol.trace;
  json steps = json::array();
  for (const auto& s : tr.steps)
    steps.push_back({{"m", s.m}, {"star_delta", s.star_delta}, {"bound", s.bound}, {"lambda_m", s.lambda_m},
                     {"psi_delta", s.psi_delta}, {"fallback", s.fallback},
                     {"oracle_lambda_diff", s.oracle_lambda_diff}});
  json out = derived(cfg);
  out["solution"] = {{"lambda", r.lambda},
                     {"lambda_linear", r.lambda_linear},
                     {"lambda_mean", r.lambda_mean},
                     {"e_jj", r.e_jj},
                     {"j", io::to_json(r.j)},
                     {"t", cfg.params.t},
                     {"u_tilde_star", r.u_tilde_star},
                     {"residual_star", r.residual_star},
                     {"fixed_point_defect", r.fixed_point_defect},
                     {"truncation_budget", io::to_json(r.budget)},
                     {"u_tilde", io::to_json(r.u_tilde)},
                     {"W_fixed", io::to_json(r.W_fixed)}};
  out["iteration"] = {{"converged", tr.converged}, {"ratio", tr.ratio}, {"steps", steps}};
  out["checks"] = io::to_json(rep.checks);
  return out;
}

void write_trace_csv(const std::string& path, const IterationTrace& tr) {
  io::CsvWriter w(path);
  w.row({"m", "star_delta", "bound", "lambda_m", "psi_delta"});
  for (const auto& s : tr.steps)
    w.row({std::to_string(s.m), io::num(s.star_delta), io::num(s.bound), io::num(s.lambda_m), io::num(s.psi_delta)});
}

int run_solve(const CommonArgs& a, bool strict) {
  RunConfig cfg = load(a);
  if (strict) cfg.strict = true;
  if (a.dry_run) {
    emit(cfg, derived(cfg));
    return 0;
  }
  const SolveReport rep = solve_report(cfg);
  if (!cfg.csv.empty()) write_trace_csv(cfg.csv, rep.sol.trace);
  emit(cfg, solution_json(cfg, rep));
  return verdict(rep.checks);
}

int run_nonres(const CommonArgs& a, std::optional<std::size_t> samples, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load(a);
  if (samples) cfg.samples = *samples;
  if (seed) cfg.seed = *seed;
  if (a.dry_run) {
    emit(cfg, derived(cfg));
    return 0;
  }
  const ProblemParams& p = cfg.params;
  std::optional<io::CsvWriter> csv;
  if (!cfg.csv.empty()) {
    csv.emplace(cfg.csv);
    std::vector<std::string> head;
    for (int s = 0; s < p.n; ++s) head.push_back("nu" + std::to_string(s + 1));
    head.insert(head.end(), {"pass", "margin"});
    for (int s = 0; s < p.n; ++s) head.push_back("j" + std::to_string(s + 1));
    csv->row(head);
  }
  std::size_t passes = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const DirectionSample ds = sample_B(p, p.k, cfg.seed, i);
    if (ds.report.pass) ++passes;
    if (csv) {
      std::vector<std::string> row;
      for (double x : ds.nu) row.push_back(io::num(x));
      row.push_back(ds.report.pass ? "1" : "0");
      row.push_back(io::num(ds.report.margin));
      for (int q : ds.report.j.q) row.push_back(std::to_string(q));
      csv->row(row);
    }
  }
  const double frac = static_cast<double>(passes) / static_cast<double>(cfg.samples);
  emit(cfg, {{"k", p.k},
             {"fraction", frac},
             {"stderr", std::sqrt(frac * (1.0 - frac) / static_cast<double>(cfg.samples))},
             {"N", cfg.samples},
             {"passes", passes},
             {"seed", cfg.seed}});
  return 0;
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '"') c = ';';
  return s;
}

int run_isosurface(const CommonArgs& a, std::optional<double> lambda, std::optional<std::size_t> samples,
                   std::optional<std::uint64_t> seed, const std::string& polar) {
  RunConfig cfg = load(a);
  if (lambda) cfg.lambda = *lambda;
  if (samples) cfg.samples = *samples;
  if (seed) cfg.seed = *seed;
  const ProblemParams& p = cfg.params;
  const double lam = cfg.target_lambda();
  const double k = std::pow(lam, 1.0 / (2 * p.l));
  const double k1 = k1_threshold(star_norm(cfg.potential), p);
  const bool hard = is_hard(cfg.bounds, k, k1);
  const double w = iso_half_width(k, p);
  json head = derived(cfg);
  head["lambda"] = lam;
  head["k_lambda"] = k;
  head["k_tilde"] = shifted_radius(lam, p);
  head["interval"] = {k - w, k + w};
  if (a.dry_run) {
    emit(cfg, head);
    return 0;
  }
  SolveOptions opts = soft_options(cfg);
  opts.cross_check = false;
  const SurfaceSample s = surface_sample(lam, cfg.potential, p, cfg.samples, cfg.seed, opts);

  std::vector<BoundCheck> checks;
  double best_c = 0.0;
  for (const auto& pt : s.points) {
    std::vector<BoundCheck> cs = pt.checks;
    cs.back().hard = hard;
    checks.insert(checks.end(), cs.begin(), cs.end());
    best_c = std::max(best_c, pt.best_c);
  }
  std::size_t failed = 0;
  for (const auto& c : checks)
    if (!c.pass) ++failed;

  if (!cfg.csv.empty()) {
    io::CsvWriter csv(cfg.csv);
    std::vector<std::string> hdr;
    for (int d = 0; d < p.n; ++d) hdr.push_back("nu" + std::to_string(d + 1));
    hdr.insert(hdr.end(), {"kappa", "h", "resid", "iterations", "status"});
    csv.row(hdr);
    std::map<std::size_t, std::vector<std::string>> rows;
    for (const auto& pt : s.points) {
      std::vector<std::string> r;
      for (double x : pt.nu) r.push_back(io::num(x));
      r.insert(r.end(), {io::num(pt.kappa), io::num(pt.h), io::num(pt.resid), std::to_string(pt.iterations), "ok"});
      rows[pt.index] = r;
    }
    for (const auto& h : s.holes) {
      std::vector<std::string> r;
      for (double x : h.nu) r.push_back(io::num(x));
      r.insert(r.end(), {"nan", "nan", "nan", "0", csv_safe("hole: " + h.reason)});
      rows[h.index] = r;
    }
    for (const auto& [i, r] : rows) csv.row(r);
  }
  if (!polar.empty()) {
    if (p.n != 2) throw Error(ErrorKind::Validation, "--polar needs n = 2");
    io::CsvWriter pol(polar);
    pol.row({"theta", "kappa"});
    std::map<std::size_t, std::pair<double, double>> pts;
    for (const auto& pt : s.points) pts[pt.index] = {std::atan2(pt.nu[1], pt.nu[0]), pt.kappa};
    for (const auto& [i, tk] : pts) pol.row({io::num(tk.first), io::num(tk.second)});
  }

  const SurfaceMeasure m = surface_measure_report(s, p);
  std::map<std::string, int> reasons;
  for (const auto& h : s.holes) ++reasons[h.reason.substr(0, h.reason.find(':'))];
  head["samples"] = s.requested;
  head["in_B"] = s.in_B;
  head["solved"] = s.points.size();
  head["holes"] = reasons;
  head["measure"] = {{"fraction", m.fraction},         {"stderr", m.stderr_},
                     {"mean_jacobian", m.mean_jacobian}, {"ratio", m.ratio},
                     {"sphere_measure", m.sphere_measure}, {"measure", m.measure}};
  head["bound_checks"] = {{"evaluated", checks.size()}, {"failed", failed}, {"h_mode", hard ? "hard" : "soft"},
                          {"iso_c", p.iso_c},          {"best_c", best_c}, {"pass", all_hard_pass(checks)}};
  emit(cfg, head);
  return verdict(checks);
}

int run_verify(const CommonArgs& a) {
  RunConfig cfg = load(a);
  if (a.dry_run) {
    emit(cfg, derived(cfg));
    return 0;
  }
  const ProblemParams& p = cfg.params;
  std::vector<BoundCheck> checks = linear_report(cfg, true).checks;

  // Full ||G_r||_1 for the low orders.
  {
    const double k1 = k1_threshold(star_norm(cfg.potential), p);
    const bool hard = is_hard(cfg.bounds, p.k, k1);
    const CenterIndex c = find_center_index(p, p.k);
    const BlochOperator op(p, c.j, cfg.potential);
    const int r_hi = std::min(6, p.r_max);
    const ContourTerms ct = contour_terms(op, p.k, r_hi, p.n_quad);
    for (int r = 1; r <= r_hi; ++r)
      checks.push_back(make_check("||G_" + std::to_string(r) + "||_1 <= k^{-gamma0 r}",
                                  op_norm_1(ct.terms[static_cast<std::size_t>(r - 1)].G), std::pow(p.k, -p.gamma0() * r),
                                  hard));
  }

  const SolveReport rep = solve_report(cfg);
  checks.insert(checks.end(), rep.checks.begin(), rep.checks.end());

  // kappa bound along the configured carrier direction.
  {
    const std::vector<double> pj = p_vec(p.t, rep.sol.record.j);
    std::vector<double> nu = pj;
    const double norm = std::sqrt(norm2_sq(pj));
    for (double& x : nu) x /= norm;
    const double lam = cfg.target_lambda();
    const double k = std::pow(lam, 1.0 / (2 * p.l));
    SolveOptions opts = soft_options(cfg);
    opts.cross_check = false;
    const IsoPoint pt = kappa_solve(lam, nu, cfg.potential, p, opts);
    std::vector<BoundCheck> cs = pt.checks;
    cs.back().hard = is_hard(cfg.bounds, k, k1_threshold(star_norm(cfg.potential), p));
    checks.insert(checks.end(), cs.begin(), cs.end());
  }

  const NonlinearGradient g = grad_lambda_nonlinear_fd(cfg.potential, p, cfg.fd_step, soft_options(cfg));
  checks.insert(checks.end(), g.checks.begin(), g.checks.end());
  checks.push_back(make_check("grad lambda Richardson relative change <= 1e-5", g.fd.extrapolation_rel, 1e-5, false));

  json out = derived(cfg);
  out["checks"] = io::to_json(checks);
  out["pass"] = all_hard_pass(checks);
  emit(cfg, out);
  return verdict(checks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpwave: quasi-periodic solutions of polyharmonic NLS-type equations"};
  app.require_subcommand(1);

  CommonArgs lin, sol, nr, iso, ver;
  bool oracle = false, strict = false;
  std::optional<std::size_t> nr_samples, iso_samples;
  std::optional<std::uint64_t> nr_seed, iso_seed;
  std::optional<double> iso_lambda;
  std::string polar;

  auto* c_lin = app.add_subcommand("linear", "perturbation series for the linear operator");
  add_common(c_lin, lin);
  c_lin->add_flag("--oracle", oracle, "cross-check against the dense eigensolver");

  auto* c_sol = app.add_subcommand("solve", "nonlinear fixed-point solution");
  add_common(c_sol, sol);
  c_sol->add_flag("--strict", strict, "series only, no dense fallback");

  auto* c_nr = app.add_subcommand("nonres", "Monte Carlo over directions of the non-resonance test");
  add_common(c_nr, nr);
  c_nr->add_option("--samples", nr_samples, "number of directions");
  c_nr->add_option("--seed", nr_seed, "random seed");

  auto* c_iso = app.add_subcommand("isosurface", "sample the isoenergetic surface");
  add_common(c_iso, iso);
  c_iso->add_option("--lambda", iso_lambda, "target eigenvalue (default k^{2l})");
  c_iso->add_option("--samples", iso_samples, "number of directions");
  c_iso->add_option("--seed", iso_seed, "random seed");
  c_iso->add_option("--polar", polar, "write (theta, kappa) plot data (n = 2)");

  auto* c_ver = app.add_subcommand("verify", "run every inequality check at the configured point");
  add_common(c_ver, ver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_lin) return run_linear(lin, oracle);
    if (*c_sol) return run_solve(sol, strict);
    if (*c_nr) return run_nonres(nr, nr_samples, nr_seed);
    if (*c_iso) return run_isosurface(iso, iso_lambda, iso_samples, iso_seed, polar);
    if (*c_ver) return run_verify(ver);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
