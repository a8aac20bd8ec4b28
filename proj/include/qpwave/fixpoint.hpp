#ifndef QPWAVE_FIXPOINT_HPP
#define QPWAVE_FIXPOINT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qpwave/bloch.hpp"
#include "qpwave/checks.hpp"
#include "qpwave/error.hpp"
#include "qpwave/field.hpp"
#include "qpwave/params.hpp"

namespace qpwave {

/// Large-k threshold beyond which the contraction estimates are claimed.
inline double k1_threshold(double norm_V, const ProblemParams& p) {
  const double a = std::pow(8.0 * p.l, 1.0 / p.delta);
  const double b = std::pow(4.0 * norm_V, 1.0 / p.delta);
  const double c = std::pow(2.0 + 2.0 * norm_V, 1.0 / p.rho_exponent());
  return std::max({a, b, c, p.k0_override});
}

struct SolveOptions {
  BoundMode bounds = BoundMode::Auto;
  bool strict = false;       // series only; never fall back to the dense oracle
  bool cross_check = false;  // dense oracle alongside every linear solve
  bool retain_psi = true;    // keep psi_m for the convergence checks
  int max_iter = 50;
};

/// Checks that the input potential can drive the iteration: right dimension,
/// inside the box and with v_0 = 0.
inline void validate_potential(const FourierField& V, const ProblemParams& params) {
  if (V.dim() != params.n) throw Error(ErrorKind::Validation, "potential dimension differs from n");
  if (V.radius() > params.R) throw Error(ErrorKind::Validation, "potential radius exceeds the truncation radius R");
  if (V.mean() != cd(0.0, 0.0))
    throw Error(ErrorKind::Validation, "potential must have v_0 = 0 (mean-free convention; shift lambda instead)");
}

/// Everything a run at fixed (t, k) shares: the center index and k1.
struct RunContext {
  ProblemParams params;
  FourierField V;
  LatticeIndex j;
  double margin = 0.0;
  double norm_V = 0.0;
  double k1 = 0.0;
  bool hard = false;
  SolveOptions opts;

  RunContext(const ProblemParams& p, const FourierField& potential, const SolveOptions& o)
      : params(p), V(potential), opts(o) {
    params.validate();
    validate_potential(V, params);
    norm_V = star_norm(V);
    k1 = k1_threshold(norm_V, params);
    hard = is_hard(o.bounds, params.k, k1);
    const CenterIndex c = find_center_index(params, params.k);
    j = c.j;
    margin = c.margin;
  }

  SeriesOptions series_options() const { return SeriesOptions::from(params, hard); }
};

struct LinearSolve {
  SpectralPair pair;
  bool fallback = false;
  double oracle_lambda_diff = std::numeric_limits<double>::quiet_NaN();
  double oracle_column_diff = std::numeric_limits<double>::quiet_NaN();
};

/// Spectral pair for the mean-free potential W~ at the context's (t, k).
inline LinearSolve solve_linear(const RunContext& ctx, const FourierField& W_tilde, TruncationBudget* budget) {
  const BlochOperator op(ctx.params, ctx.j, prune(W_tilde, ctx.params.prune_tol, budget));
  LinearSolve out;
  try {
    out.pair = perturbation_series(op, ctx.params.k, ctx.series_options());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SeriesDiverging || ctx.opts.strict) throw;
    out.pair = dense_oracle(op, ctx.params.k).pair;
    out.fallback = true;
  }
  if (ctx.opts.cross_check) {
    const DenseSpectrum ds = dense_oracle(op, ctx.params.k);
    out.oracle_lambda_diff = std::abs(ds.pair.lambda - out.pair.lambda);
    out.oracle_column_diff = star_norm(ds.pair.proj_col - out.pair.proj_col);
  }
  return out;
}

/// V + sigma |psi|^2 for the periodic part psi of the Bloch solution.
inline FourierField nonlinear_update(const RunContext& ctx, const FourierField& psi, TruncationBudget* budget) {
  const FourierField psi_p = prune(psi, ctx.params.prune_tol, budget);
  return ctx.V + scale(squared_modulus(psi_p, budget), ctx.params.sigma);
}

struct MapResult {
  FourierField W_next;
  LinearSolve linear;
  TruncationBudget budget;
};

/// The potential update W -> V + sigma |u_{W~}|^2.
inline MapResult apply_M(const FourierField& W, const FourierField& V, const ProblemParams& params,
                         const SolveOptions& opts = {}) {
  const RunContext ctx(params, V, opts);
  MapResult out;
  out.linear = solve_linear(ctx, remove_mean(W), &out.budget);
  out.W_next = nonlinear_update(ctx, out.linear.pair.psi, &out.budget);
  return out;
}

struct IterationStep {
  int m = 0;
  double star_delta = std::numeric_limits<double>::quiet_NaN();  // ||W_m - W_{m-1}||_*
  double bound = 1.0;                                            // (|sigma||A|^2 k^{-gamma0})^m
  double lambda_m = 0.0;
  double psi_delta = std::numeric_limits<double>::quiet_NaN();   // ||psi_m - psi_{m-1}||_*
  bool fallback = false;
  double oracle_lambda_diff = std::numeric_limits<double>::quiet_NaN();
};

struct IterationTrace {
  std::vector<IterationStep> steps;
  std::vector<FourierField> psi;  // psi_m, when retained
  std::vector<FourierField> W;    // W_m, when retained
  std::vector<BoundCheck> checks;
  bool converged = false;
  double k1 = 0.0;
  bool hard = false;
  double ratio = 0.0;  // |sigma||A|^2 k^{-gamma0}
  TruncationBudget budget;
};

struct IterationResult {
  IterationTrace trace;
  FourierField W_fixed;
};

/// W_0 = V + sigma|A|^2, W_{m+1} = M W_m until ||W_m - W_{m-1}||_* < tol_fix.
inline IterationResult iterate(const FourierField& V, const ProblemParams& params, const SolveOptions& opts = {}) {
  const RunContext ctx(params, V, opts);
  params.validate_amplitude();
  const double coupling = params.coupling();
  const double k = params.k;

  IterationResult res;
  IterationTrace& tr = res.trace;
  tr.k1 = ctx.k1;
  tr.hard = ctx.hard;
  tr.ratio = std::abs(coupling) * std::pow(k, -params.gamma0());

  FourierField W = add_constant(V, coupling);
  LinearSolve lin = solve_linear(ctx, remove_mean(W), &tr.budget);
  IterationStep s0;
  s0.lambda_m = lin.pair.lambda;
  s0.fallback = lin.fallback;
  s0.oracle_lambda_diff = lin.oracle_lambda_diff;
  tr.steps.push_back(s0);
  if (opts.retain_psi) {
    tr.psi.push_back(lin.pair.psi);
    tr.W.push_back(W);
  }

  for (int m = 1; m <= opts.max_iter; ++m) {
    FourierField W_next = nonlinear_update(ctx, lin.pair.psi, &tr.budget);
    const double delta = star_norm(W_next - W);
    const FourierField psi_prev = lin.pair.psi;
    lin = solve_linear(ctx, remove_mean(W_next), &tr.budget);

    IterationStep st;
    st.m = m;
    st.star_delta = delta;
    st.bound = std::pow(tr.ratio, m);
    st.lambda_m = lin.pair.lambda;
    st.psi_delta = star_norm(lin.pair.psi - psi_prev);
    st.fallback = lin.fallback;
    st.oracle_lambda_diff = lin.oracle_lambda_diff;
    tr.steps.push_back(st);
    tr.checks.push_back(make_check("||W_" + std::to_string(m) + " - W_" + std::to_string(m - 1) +
                                       "||_* <= (|sigma||A|^2 k^{-gamma0})^" + std::to_string(m),
                                   delta, st.bound, ctx.hard));
    W = std::move(W_next);
    if (opts.retain_psi) {
      tr.psi.push_back(lin.pair.psi);
      tr.W.push_back(W);
    }
    if (delta < params.tol_fix) {
      tr.converged = true;
      break;
    }
  }
  if (!tr.converged)
    throw Error(ErrorKind::NoConvergence, "fixed-point iteration did not reach tol_fix within " +
                                              std::to_string(opts.max_iter) + " steps");
  if (ctx.hard) enforce(tr.checks);
  res.W_fixed = W;
  return res;
}

/// Tail estimate ||W - W_m||_* <= 2 ratio^{m+1} against the converged limit.
inline std::vector<BoundCheck> cauchy_chain_check(const IterationTrace& trace, const FourierField& W_fixed) {
  std::vector<BoundCheck> out;
  for (std::size_t m = 0; m < trace.W.size(); ++m)
    out.push_back(make_check("||W - W_" + std::to_string(m) + "||_* <= 2 ratio^" + std::to_string(m + 1),
                             star_norm(W_fixed - trace.W[m]), 2.0 * std::pow(trace.ratio, static_cast<double>(m + 1)),
                             trace.hard));
  return out;
}

/// ||psi_m - psi||_* < 4|A| k^{-(2l-n-delta)} ratio^{m+1}; psi is the last
/// retained iterate. Evaluated with <= so the uncoupled case (all zero) passes.
inline std::vector<BoundCheck> psi_convergence_check(const IterationTrace& trace, const ProblemParams& params) {
  if (trace.psi.empty()) throw Error(ErrorKind::Validation, "psi_convergence_check needs retained psi_m");
  std::vector<BoundCheck> out;
  const FourierField& fixed = trace.psi.back();
  const double pre = 4.0 * std::abs(params.A) * std::pow(params.k, -params.rho_exponent());
  for (std::size_t m = 0; m < trace.psi.size(); ++m)
    out.push_back(make_check("||psi_" + std::to_string(m) + " - psi||_* < 4|A|k^{-(2l-n-delta)} ratio^" +
                                 std::to_string(m + 1),
                             star_norm(trace.psi[m] - fixed), pre * std::pow(trace.ratio, static_cast<double>(m + 1)),
                             trace.hard));
  return out;
}

/// |lambda_m - lambda_fixed| <= k^{n-gamma0} ratio^m.
inline std::vector<BoundCheck> lambda_convergence_check(const IterationTrace& trace, const ProblemParams& params) {
  std::vector<BoundCheck> out;
  if (trace.steps.empty()) return out;
  const double fixed = trace.steps.back().lambda_m;
  const double pre = std::pow(params.k, params.n - params.gamma0());
  for (const auto& s : trace.steps)
    out.push_back(make_check("|lambda_" + std::to_string(s.m) + " - lambda| <= k^{n-gamma0} ratio^" + std::to_string(s.m),
                             std::abs(s.lambda_m - fixed), pre * std::pow(trace.ratio, s.m), trace.hard));
  return out;
}

/// Assembled nonlinear solution u = A exp(i <p_j(t), x>) (1 + u~).
struct SolutionRecord {
  double lambda = 0.0;         // lambda_{W~} + sigma |A|^2 (E_{W~})_{jj}
  double lambda_linear = 0.0;  // lambda_{W~}
  double lambda_mean = 0.0;    // lambda_{W~} + sigma mean(|u|^2)
  double e_jj = 0.0;
  LatticeIndex j;
  FourierField proj_col;  // c_q = E_{j+q, j}
  FourierField u_tilde;
  FourierField W_fixed;
  double u_tilde_star = 0.0;
  double residual_star = 0.0;
  double fixed_point_defect = 0.0;  // ||M W_fixed - W_fixed||_*
  double k1 = 0.0;
  bool hard = false;
  TruncationBudget budget;
  std::vector<BoundCheck> checks;
};

inline double residual(const SolutionRecord& rec, const FourierField& V, const ProblemParams& params);

inline SolutionRecord assemble_solution(const FourierField& W_fixed, const FourierField& V, const ProblemParams& params,
                                        const SolveOptions& opts = {}) {
  const RunContext ctx(params, V, opts);
  SolutionRecord rec;
  rec.k1 = ctx.k1;
  rec.hard = ctx.hard;
  rec.j = ctx.j;
  rec.W_fixed = W_fixed;

  const LinearSolve lin = solve_linear(ctx, remove_mean(W_fixed), &rec.budget);
  const double coupling = params.coupling();
  rec.lambda_linear = lin.pair.lambda;
  rec.e_jj = lin.pair.e_jj().real();
  rec.lambda = rec.lambda_linear + coupling * rec.e_jj;
  rec.proj_col = lin.pair.proj_col;
  double c2 = 0.0;
  for (const auto& [q, c] : rec.proj_col.coefficients()) c2 += std::norm(c);
  rec.lambda_mean = rec.lambda_linear + coupling * c2;
  rec.u_tilde = add_constant(rec.proj_col, -1.0);
  rec.u_tilde_star = star_norm(rec.u_tilde);

  const FourierField next = nonlinear_update(ctx, lin.pair.psi, &rec.budget);
  rec.fixed_point_defect = star_norm(next - W_fixed);

  const double k = params.k;
  const double g0 = params.gamma0();
  rec.checks.push_back(make_check("||u~||_* < k^{-gamma0}", rec.u_tilde_star, std::pow(k, -g0), ctx.hard, true));
  rec.checks.push_back(make_check("|lambda - k^{2l} - sigma|A|^2| <= (1+|sigma||A|^2) k^{-gamma0+delta}",
                                  std::abs(rec.lambda - params.energy() - coupling),
                                  (1.0 + std::abs(coupling)) * std::pow(k, -g0 + params.delta), ctx.hard));
  rec.checks.push_back(make_check("||M W - W||_* <= 2 tol_fix", rec.fixed_point_defect, 2.0 * params.tol_fix, false));
  rec.residual_star = residual(rec, V, params);
  if (ctx.hard) enforce(rec.checks);
  return rec;
}

/// Coefficients r_q of ((-Delta)^l + V + sigma|u|^2 - lambda) u / A on the
/// shifted lattice p_{j+q}(t), over the full support of every product.
inline FourierField residual_coefficients(const SolutionRecord& rec, const FourierField& V, const ProblemParams& params) {
  const FourierField& c = rec.proj_col;
  const int rc = c.radius();
  const FourierField Vc = convolve(V, c, V.radius() + rc);
  const FourierField mod2 = convolve(c, conj(c), 2 * rc);
  const FourierField cubic = convolve(mod2, c, 3 * rc);
  const double coupling = params.coupling();

  FourierField::Coefficients r;
  for (const auto& [q, v] : c.coefficients())
    r[q] += (free_symbol(params.t, rec.j + q, params.l) - rec.lambda) * v;
  for (const auto& [q, v] : Vc.coefficients()) r[q] += v;
  for (const auto& [q, v] : cubic.coefficients()) r[q] += coupling * v;
  return FourierField(params.n, std::max(V.radius() + rc, 3 * rc), std::move(r), false);
}

/// Scale-relative star norm of the PDE residual, sum_q |r_q| / k^{2l}.
inline double residual(const SolutionRecord& rec, const FourierField& V, const ProblemParams& params) {
  return star_norm(residual_coefficients(rec, V, params)) / params.energy();
}

/// iterate followed by assemble_solution.
struct NonlinearSolution {
  IterationTrace trace;
  SolutionRecord record;
};

inline NonlinearSolution solve_nonlinear(const FourierField& V, const ProblemParams& params, const SolveOptions& opts = {}) {
  NonlinearSolution out;
  IterationResult it = iterate(V, params, opts);
  out.record = assemble_solution(it.W_fixed, V, params, opts);
  out.record.budget += it.trace.budget;
  out.trace = std::move(it.trace);
  return out;
}

/// Finite-difference gradient in t of the nonlinear eigenvalue at fixed k,
/// each stencil point a cold-start solve that must keep the same center index.
struct NonlinearGradient {
  GradientEstimate fd;
  std::vector<double> free_grad;  // 2l |p_j|^{2l-2} p_j
  double deviation = 0.0;
  std::vector<BoundCheck> checks;
};

inline NonlinearGradient grad_lambda_nonlinear_fd(const FourierField& V, const ProblemParams& params, double h,
                                                  const SolveOptions& opts = {}) {
  const RunContext base(params, V, opts);
  SolveOptions inner = opts;
  inner.cross_check = false;
  inner.retain_psi = false;
  auto lambda_at = [&](std::span<const double> t) {
    ProblemParams p = params;
    p.t.assign(t.begin(), t.end());
    const NonResonanceReport rep = is_nonresonant(p, p.t, p.k);
    if (!rep.pass || rep.j != base.j)
      throw Error(ErrorKind::NeighborhoodExit, "finite-difference stencil point left the non-resonant set");
    return solve_nonlinear(V, p, inner).record.lambda;
  };
  NonlinearGradient out;
  out.fd = central_gradient(lambda_at, params.t, h);
  const std::vector<double> p = p_vec(params.t, base.j);
  const double p2 = norm2_sq(p);
  out.free_grad.resize(p.size());
  double dev = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    out.free_grad[s] = 2.0 * params.l * std::pow(p2, params.l - 1) * p[s];
    dev += std::pow(out.fd.extrapolated[s] - out.free_grad[s], 2);
  }
  out.deviation = std::sqrt(dev);
  const double k = params.k;
  out.checks.push_back(make_check("|grad lambda - 2l p_j^{2l-2} p_j| < 2 k^{2l-1+delta-gamma0}", out.deviation,
                                  2.0 * std::pow(k, 2.0 * params.l - 1.0 + params.delta - params.gamma0()), false,
                                  true));
  return out;
}

}  // namespace qpwave

#endif  // QPWAVE_FIXPOINT_HPP
