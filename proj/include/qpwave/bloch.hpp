#ifndef QPWAVE_BLOCH_HPP
#define QPWAVE_BLOCH_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qpwave/checks.hpp"
#include "qpwave/error.hpp"
#include "qpwave/field.hpp"
#include "qpwave/lattice.hpp"
#include "qpwave/nonres.hpp"
#include "qpwave/params.hpp"

namespace qpwave {

using Matrix = Eigen::MatrixXcd;
using RowMatrix = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unique center index at (params.t, k) plus the separation margin.
struct CenterIndex {
  LatticeIndex j;
  double margin = 0.0;
};

inline CenterIndex find_center_index(const ProblemParams& params, double k) {
  const NonResonanceReport rep = is_nonresonant(params, params.t, k);
  if (!rep.pass) {
    std::string why = rep.window_count == 0   ? "no level in the energy window"
                      : rep.window_count > 1 ? std::to_string(rep.window_count) + " levels in the energy window"
                                              : "separation margin " + format_number(rep.margin) + " <= 0";
    throw Error(ErrorKind::Resonant, "(t, k = " + format_number(k) + "): " + why);
  }
  return {rep.j, rep.margin};
}

/// Truncated Bloch operator (-Delta)^l + W in the plane-wave basis
/// exp(i <p_{j+q}(t), x>), ||q||_inf <= R, centered on the tracked index j.
/// Entries: H[m][q] = |p_{j+m}(t)|^{2l} delta_{mq} + w_{m-q}.
class BlochOperator {
 public:
  BlochOperator(const ProblemParams& params, LatticeIndex center, FourierField potential)
      : params_(params), center_(std::move(center)), potential_(std::move(potential)), basis_(params.n, params.R) {
    if (center_.dim() != params.n || potential_.dim() != params.n)
      throw Error(ErrorKind::Validation, "BlochOperator: dimension mismatch");
    if (potential_.mean() != cd(0.0, 0.0))
      throw Error(ErrorKind::Validation, "BlochOperator: potential must have zero mean coefficient");
    diag_.resize(basis_.size());
    for (std::size_t b = 0; b < basis_.size(); ++b) diag_[b] = free_symbol(params_.t, center_ + basis_.at(b), params_.l);
    build_stencil();
  }

  const ProblemParams& params() const { return params_; }
  const LatticeIndex& center() const { return center_; }
  const FourierField& potential() const { return potential_; }
  const BoxIndexer& basis() const { return basis_; }
  std::size_t size() const { return basis_.size(); }
  std::size_t center_slot() const { return basis_.linear(LatticeIndex::zero(params_.n)); }
  const std::vector<double>& diagonal() const { return diag_; }
  double center_level() const { return diag_[center_slot()]; }

  /// out = W x, the convolution with the potential restricted to the basis.
  void apply_potential(const cd* x, cd* out) const {
    std::fill(out, out + size(), cd(0.0, 0.0));
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      const cd w = weights_[c];
      for (std::size_t e = offsets_[c]; e < offsets_[c + 1]; ++e) out[targets_[e]] += w * x[sources_[e]];
    }
  }

  /// Row-wise version for a whole block of columns.
  void apply_potential(const RowMatrix& x, RowMatrix& out) const {
    out.setZero(x.rows(), x.cols());
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      const cd w = weights_[c];
      for (std::size_t e = offsets_[c]; e < offsets_[c + 1]; ++e) out.row(targets_[e]) += w * x.row(sources_[e]);
    }
  }

  Matrix dense() const {
    const auto d = static_cast<Eigen::Index>(size());
    Matrix h = Matrix::Zero(d, d);
    for (Eigen::Index b = 0; b < d; ++b) h(b, b) = diag_[static_cast<std::size_t>(b)];
    for (std::size_t c = 0; c < weights_.size(); ++c)
      for (std::size_t e = offsets_[c]; e < offsets_[c + 1]; ++e) h(targets_[e], sources_[e]) += weights_[c];
    return h;
  }

  /// Basis vector -> field indexed by the offset q.
  FourierField to_field(std::span<const cd> v, bool hermitian = false) const {
    FourierField::Coefficients c;
    for (std::size_t b = 0; b < v.size(); ++b)
      if (v[b] != cd(0.0, 0.0)) c.emplace(basis_.at(b), v[b]);
    return FourierField(params_.n, params_.R, std::move(c), hermitian);
  }

 private:
  void build_stencil() {
    offsets_.push_back(0);
    for (const auto& [s, w] : potential_.coefficients()) {
      if (s.max_abs() > 2 * params_.R) continue;  // couples nothing inside the box
      weights_.push_back(w);
      for (std::size_t b = 0; b < basis_.size(); ++b) {
        const LatticeIndex src = basis_.at(b) - s;
        if (!basis_.contains(src)) continue;
        targets_.push_back(static_cast<std::uint32_t>(b));
        sources_.push_back(static_cast<std::uint32_t>(basis_.linear(src)));
      }
      offsets_.push_back(targets_.size());
    }
  }

  ProblemParams params_;
  LatticeIndex center_;
  FourierField potential_;
  BoxIndexer basis_;
  std::vector<double> diag_;
  std::vector<cd> weights_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> targets_;
  std::vector<std::uint32_t> sources_;
};

/// Trapezoid nodes on C0: z = k^{2l} + rho exp(i theta), theta offset by half
/// a step. `weight` folds in dz / (2 pi i), so that
/// (1 / 2 pi i) \oint f dz ~ sum_i weight_i f(z_i).
struct ContourNodes {
  std::vector<cd> z;
  std::vector<cd> weight;
};

inline ContourNodes contour_nodes(double center, double radius, int count) {
  ContourNodes nodes;
  nodes.z.reserve(static_cast<std::size_t>(count));
  nodes.weight.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double theta = 2.0 * std::numbers::pi * (i + 0.5) / count;
    const cd e = std::polar(1.0, theta);
    nodes.z.push_back(center + radius * e);
    nodes.weight.push_back(radius * e / static_cast<double>(count));
  }
  return nodes;
}

/// Max_m 1 / |p_m^{2l} - z| over the quadrature nodes, i.e. the ||.||_1 norm
/// of the free resolvent on C0.
inline double max_free_resolvent_norm(const BlochOperator& op, const ContourNodes& nodes) {
  double best = 0.0;
  for (const cd& z : nodes.z)
    for (double d : op.diagonal()) best = std::max(best, 1.0 / std::abs(d - z));
  return best;
}

/// k^{-2l+n+delta} = 1 / rho, widened by the rounding of a level that sits
/// exactly at the contour center (where the bound is attained).
inline double free_resolvent_bound(const ProblemParams& p) {
  const double rho = p.contour_radius();
  return 1.0 / (rho - 16.0 * std::numeric_limits<double>::epsilon() * p.energy());
}

namespace detail {

inline void check_nodes(const BlochOperator& op, const ContourNodes& nodes, double radius) {
  const double limit = 10.0 / radius;
  for (const cd& z : nodes.z)
    for (double d : op.diagonal())
      if (1.0 / std::abs(d - z) > limit)
        throw Error(ErrorKind::QuadratureIll, "free level " + format_number(d) + " within rho/10 of a contour node");
}

/// Renewal bookkeeping for Tr((R0 W)^r) restricted to closed paths that
/// visit the center: e_L are first-return weights, c_r = ((R0 W)^r)_{jj},
/// and the restricted trace is sum_L L e_L c_{r-L}. Paths that avoid the
/// center are analytic inside C0 and integrate to zero.
struct CenterTrace {
  std::vector<cd> e{cd(0.0, 0.0)};
  std::vector<cd> c{cd(1.0, 0.0)};

  cd push(cd e_r) {
    e.push_back(e_r);
    const std::size_t r = e.size() - 1;
    cd cr(0.0, 0.0);
    cd tr(0.0, 0.0);
    for (std::size_t L = 1; L <= r; ++L) {
      cr += e[L] * c[r - L];
      tr += static_cast<double>(L) * e[L] * c[r - L];
    }
    c.push_back(cr);
    return tr;
  }
};

}  // namespace detail

struct SeriesOptions {
  int r_max = 12;
  int n_quad = 64;
  double tol = 1e-10;
  bool hard = false;     // failed bound checks are errors
  bool enforce = true;   // throw on hard failures (otherwise only report)

  static SeriesOptions from(const ProblemParams& p, bool hard) {
    SeriesOptions o;
    o.r_max = p.r_max;
    o.n_quad = p.n_quad;
    o.tol = p.tol_fix;
    o.hard = hard;
    return o;
  }
};

/// Magnitudes of one order of both series.
struct TermRecord {
  int r = 0;
  double g = 0.0;
  double g_imag = 0.0;
  double column_star = 0.0;  // ||G_r e_j||_*, a lower bound for ||G_r||_1
  double g_bound = 0.0;      // k^{2l-n-delta} k^{-gamma0 r}
  double G_bound = 0.0;      // k^{-gamma0 r}
};

/// Eigenvalue near k^{2l} and the center column of its spectral projection.
struct SpectralPair {
  double lambda = 0.0;
  double lambda_imag = 0.0;
  double free_level = 0.0;  // p_j^{2l}(t)
  LatticeIndex j;
  FourierField proj_col;  // E_{j+q, j}
  FourierField psi;       // A * proj_col
  std::vector<TermRecord> terms;
  std::vector<BoundCheck> checks;
  int orders = 0;
  bool capped = false;  // stopped at r_max before the terms were small
  double imag_discarded = 0.0;

  cd e_jj() const { return proj_col.at(LatticeIndex::zero(proj_col.dim())); }
};

/// Both perturbation series (eigenvalue from r = 2, projection from r = 1)
/// evaluated order by order with the trapezoid rule on C0, stopping once two
/// consecutive orders are below tol (scaled by rho for the eigenvalue).
inline SpectralPair perturbation_series(const BlochOperator& op, double k, const SeriesOptions& opts) {
  const ProblemParams& P = op.params();
  const double center = std::pow(k, 2 * P.l);
  const double rho = std::pow(k, P.rho_exponent());
  const double g0 = P.gamma0();
  const ContourNodes nodes = contour_nodes(center, rho, opts.n_quad);
  detail::check_nodes(op, nodes, rho);

  const std::size_t d = op.size();
  const std::size_t jc = op.center_slot();
  const double a = op.center_level();
  const std::size_t nn = nodes.z.size();

  // Per-node state: column chain (R0 W)^r R0 e_j and first-return chain.
  std::vector<std::vector<cd>> col(nn, std::vector<cd>(d, cd(0.0, 0.0)));
  std::vector<std::vector<cd>> ret(nn, std::vector<cd>(d, cd(0.0, 0.0)));
  std::vector<detail::CenterTrace> traces(nn);
  std::vector<std::vector<cd>> inv_gap(nn, std::vector<cd>(d));
  for (std::size_t i = 0; i < nn; ++i) {
    for (std::size_t b = 0; b < d; ++b) inv_gap[i][b] = 1.0 / (op.diagonal()[b] - nodes.z[i]);
    col[i][jc] = inv_gap[i][jc];
    ret[i][jc] = 1.0;
  }

  std::vector<cd> proj(d, cd(0.0, 0.0));
  proj[jc] = 1.0;
  std::vector<cd> scratch(d), term(d);

  SpectralPair out;
  out.free_level = a;
  out.j = op.center();
  double lambda = a;
  double lambda_im = 0.0;
  bool prev_small = false;
  std::vector<double> g_hist, G_hist;

  for (int r = 1; r <= opts.r_max; ++r) {
    std::fill(term.begin(), term.end(), cd(0.0, 0.0));
    cd g_acc(0.0, 0.0);
    const double sign = (r % 2 == 1) ? 1.0 : -1.0;  // (-1)^{r+1}
    for (std::size_t i = 0; i < nn; ++i) {
      op.apply_potential(col[i].data(), scratch.data());
      for (std::size_t b = 0; b < d; ++b) col[i][b] = inv_gap[i][b] * scratch[b];
      const cd w = nodes.weight[i];
      for (std::size_t b = 0; b < d; ++b) term[b] += w * col[i][b];

      op.apply_potential(ret[i].data(), scratch.data());
      for (std::size_t b = 0; b < d; ++b) ret[i][b] = inv_gap[i][b] * scratch[b];
      const cd first_return = ret[i][jc];
      ret[i][jc] = 0.0;
      g_acc += w * traces[i].push(first_return);
    }
    const cd g = ((r % 2 == 0) ? 1.0 : -1.0) / static_cast<double>(r) * g_acc;  // (-1)^r / r

    TermRecord rec;
    rec.r = r;
    rec.g = g.real();
    rec.g_imag = g.imag();
    double cs = 0.0;
    for (std::size_t b = 0; b < d; ++b) {
      const cd v = sign * term[b];
      proj[b] += v;
      cs += std::abs(v);
    }
    rec.column_star = cs;
    rec.g_bound = rho * std::pow(k, -g0 * r);
    rec.G_bound = std::pow(k, -g0 * r);
    if (std::abs(g.imag()) > 1e-9 * std::abs(g.real()) + 1e-12) out.imag_discarded = std::max(out.imag_discarded, std::abs(g.imag()));
    if (r >= 2) {
      lambda += rec.g;
      lambda_im += rec.g_imag;
      out.checks.push_back(make_check("|g_" + std::to_string(r) + "| < k^{2l-n-delta} k^{-gamma0 r}", std::abs(rec.g),
                                      rec.g_bound, opts.hard, true));
    }
    out.checks.push_back(make_check("||G_" + std::to_string(r) + " e_j||_* <= k^{-gamma0 r}", cs, rec.G_bound, opts.hard));
    out.terms.push_back(rec);
    out.orders = r;

    const double g_scaled = std::abs(rec.g) / rho;
    g_hist.push_back(g_scaled);
    G_hist.push_back(cs);
    auto growing = [&](const std::vector<double>& h) {
      const std::size_t m = h.size();
      return m >= 4 && h[m - 1] > h[m - 2] && h[m - 2] > h[m - 3] && h[m - 3] > h[m - 4] && h[m - 1] >= opts.tol;
    };
    if (growing(g_hist) || growing(G_hist))
      throw Error(ErrorKind::SeriesDiverging, "terms grew over three consecutive orders up to r = " + std::to_string(r));

    const bool small = g_scaled < opts.tol && cs < opts.tol;
    if (r >= 2 && small && prev_small) break;
    prev_small = small;
    if (r == opts.r_max) out.capped = true;
  }

  out.lambda = lambda;
  out.lambda_imag = lambda_im;
  out.proj_col = op.to_field(proj);
  out.psi = scale(out.proj_col, P.A);
  if (opts.hard && opts.enforce) enforce(out.checks);
  return out;
}

inline SpectralPair eigenvalue_series(const BlochOperator& op, double k, const SeriesOptions& opts) {
  return perturbation_series(op, k, opts);
}
inline SpectralPair projection_series(const BlochOperator& op, double k, const SeriesOptions& opts) {
  return perturbation_series(op, k, opts);
}

/// Single order r of both contour integrals: g_r and the full matrix G_r.
struct ContourTerm {
  double g = 0.0;
  double g_imag = 0.0;
  Matrix G;
};

/// Full matrices G_1..G_{r_hi} (index r-1) and the scalars g_1..g_{r_hi}.
struct ContourTerms {
  std::vector<ContourTerm> terms;
};

inline ContourTerms contour_terms(const BlochOperator& op, double k, int r_hi, int n_quad) {
  if (r_hi < 1) throw Error(ErrorKind::Validation, "contour_terms: order must be >= 1");
  const ProblemParams& P = op.params();
  const double center = std::pow(k, 2 * P.l);
  const double rho = std::pow(k, P.rho_exponent());
  const ContourNodes nodes = contour_nodes(center, rho, n_quad);
  detail::check_nodes(op, nodes, rho);
  const auto d = static_cast<Eigen::Index>(op.size());
  const std::size_t jc = op.center_slot();

  ContourTerms out;
  out.terms.resize(static_cast<std::size_t>(r_hi));
  std::vector<cd> g_acc(static_cast<std::size_t>(r_hi), cd(0.0, 0.0));
  for (auto& t : out.terms) t.G = Matrix::Zero(d, d);

  RowMatrix y(d, d), tmp(d, d);
  std::vector<cd> ret(static_cast<std::size_t>(d)), scratch(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < nodes.z.size(); ++i) {
    const cd z = nodes.z[i];
    const cd w = nodes.weight[i];
    Eigen::VectorXcd inv(d);
    for (Eigen::Index b = 0; b < d; ++b) inv(b) = 1.0 / (op.diagonal()[static_cast<std::size_t>(b)] - z);
    y = inv.asDiagonal();
    std::fill(ret.begin(), ret.end(), cd(0.0, 0.0));
    ret[jc] = 1.0;
    detail::CenterTrace trace;
    for (int r = 1; r <= r_hi; ++r) {
      op.apply_potential(y, tmp);
      y = inv.asDiagonal() * tmp;
      const double sign = (r % 2 == 1) ? 1.0 : -1.0;
      out.terms[static_cast<std::size_t>(r - 1)].G += (sign * w) * y;

      op.apply_potential(ret.data(), scratch.data());
      for (Eigen::Index b = 0; b < d; ++b) ret[static_cast<std::size_t>(b)] = inv(b) * scratch[static_cast<std::size_t>(b)];
      const cd fr = ret[jc];
      ret[jc] = 0.0;
      g_acc[static_cast<std::size_t>(r - 1)] += w * trace.push(fr);
    }
  }
  for (int r = 1; r <= r_hi; ++r) {
    const cd g = ((r % 2 == 0) ? 1.0 : -1.0) / static_cast<double>(r) * g_acc[static_cast<std::size_t>(r - 1)];
    out.terms[static_cast<std::size_t>(r - 1)].g = g.real();
    out.terms[static_cast<std::size_t>(r - 1)].g_imag = g.imag();
  }
  return out;
}

inline ContourTerm contour_term(const BlochOperator& op, double k, int r, int n_quad) {
  ContourTerms all = contour_terms(op, k, r, n_quad);
  return std::move(all.terms.back());
}

/// max_i sum_p |M_{p i}|.
inline double op_norm_1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

/// Sum of singular values.
inline double trace_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

/// Brute-force reference: full eigendecomposition of the truncated matrix.
struct DenseSpectrum {
  SpectralPair pair;
  Eigen::VectorXcd eigenvector;  // unit norm, center component real positive
  double residual = 0.0;         // ||H v - lambda v||_2
  double matrix_norm = 0.0;      // ||H||_2 estimate (max |entry| row sum)
  int in_window = 0;
};

inline DenseSpectrum dense_oracle(const BlochOperator& op, double k) {
  const ProblemParams& P = op.params();
  if (op.size() > 8000) throw Error(ErrorKind::Validation, "dense_oracle: matrix dimension too large");
  const double center = std::pow(k, 2 * P.l);
  const double rho = std::pow(k, P.rho_exponent());
  const Matrix h = op.dense();
  const auto jc = static_cast<Eigen::Index>(op.center_slot());

  DenseSpectrum out;
  Eigen::VectorXcd v;
  cd lambda;
  Eigen::VectorXcd col;
  if (op.potential().hermitian()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "dense_oracle: eigensolver failed");
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double ev = es.eigenvalues()(i);
      if (ev > center - rho && ev < center + rho) {
        ++out.in_window;
        pick = i;
      }
    }
    if (out.in_window == 0) throw Error(ErrorKind::NoEigenvalueInWindow, "no eigenvalue in the energy window");
    if (out.in_window > 1) throw Error(ErrorKind::MultipleInWindow, std::to_string(out.in_window) + " eigenvalues in the energy window");
    lambda = es.eigenvalues()(pick);
    v = es.eigenvectors().col(pick);
    col = v * std::conj(v(jc));
  } else {
    Eigen::ComplexEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "dense_oracle: eigensolver failed");
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double ev = es.eigenvalues()(i).real();
      if (ev > center - rho && ev < center + rho) {
        ++out.in_window;
        pick = i;
      }
    }
    if (out.in_window == 0) throw Error(ErrorKind::NoEigenvalueInWindow, "no eigenvalue in the energy window");
    if (out.in_window > 1) throw Error(ErrorKind::MultipleInWindow, std::to_string(out.in_window) + " eigenvalues in the energy window");
    lambda = es.eigenvalues()(pick);
    v = es.eigenvectors().col(pick).normalized();
    // Left eigenvector from the adjoint problem; E = v w^* / (w^* v).
    Eigen::ComplexEigenSolver<Matrix> adj(h.adjoint());
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < adj.eigenvalues().size(); ++i)
      if (std::abs(adj.eigenvalues()(i) - std::conj(lambda)) < std::abs(adj.eigenvalues()(best) - std::conj(lambda))) best = i;
    const Eigen::VectorXcd wl = adj.eigenvectors().col(best);
    col = v * std::conj(wl(jc)) / wl.dot(v);
  }
  const double vj = std::abs(v(jc));
  if (vj > 0.0) v *= std::conj(v(jc)) / vj;
  out.eigenvector = v;
  out.residual = (h * v - lambda * v).norm();
  out.matrix_norm = h.cwiseAbs().rowwise().sum().maxCoeff();
  out.pair.lambda = lambda.real();
  out.pair.lambda_imag = lambda.imag();
  out.pair.free_level = op.center_level();
  out.pair.j = op.center();
  std::vector<cd> colv(static_cast<std::size_t>(col.size()));
  for (Eigen::Index b = 0; b < col.size(); ++b) colv[static_cast<std::size_t>(b)] = col(b);
  out.pair.proj_col = op.to_field(colv);
  out.pair.psi = scale(out.pair.proj_col, P.A);
  return out;
}

/// Central differences of a scalar function of an n-vector at steps h and
/// h/2, with the Richardson combination (4 D(h/2) - D(h)) / 3.
struct GradientEstimate {
  std::vector<double> grad;        // D(h)
  std::vector<double> grad_half;   // D(h/2)
  std::vector<double> extrapolated;
  double richardson_rel = 0.0;     // ||D(h/2) - D(h)|| / ||D(h/2)||
  double extrapolation_rel = 0.0;  // ||D(h) - extrapolated|| / ||extrapolated||
};

template <class F>
GradientEstimate central_gradient(F&& f, std::span<const double> x, double h) {
  const std::size_t n = x.size();
  auto diff = [&](double step) {
    std::vector<double> g(n);
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t s = 0; s < n; ++s) {
      xp[s] = x[s] + step;
      const double fp = f(std::span<const double>(xp));
      xp[s] = x[s] - step;
      const double fm = f(std::span<const double>(xp));
      xp[s] = x[s];
      g[s] = (fp - fm) / (2.0 * step);
    }
    return g;
  };
  GradientEstimate est;
  est.grad = diff(h);
  est.grad_half = diff(0.5 * h);
  est.extrapolated.resize(n);
  double num = 0.0, den = 0.0, num2 = 0.0, den2 = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    est.extrapolated[s] = (4.0 * est.grad_half[s] - est.grad[s]) / 3.0;
    num += std::pow(est.grad_half[s] - est.grad[s], 2);
    den += std::pow(est.grad_half[s], 2);
    num2 += std::pow(est.grad[s] - est.extrapolated[s], 2);
    den2 += std::pow(est.extrapolated[s], 2);
  }
  est.richardson_rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  est.extrapolation_rel = den2 > 0.0 ? std::sqrt(num2 / den2) : std::sqrt(num2);
  return est;
}

/// Finite-difference gradient of lambda(t) for the mean-free potential at
/// fixed k, with every stencil point required to stay non-resonant with the
/// same center index.
struct LambdaGradient {
  GradientEstimate fd;
  std::vector<double> free_grad;  // 2l |p_j|^{2l-2} p_j
  double deviation = 0.0;         // |grad lambda - free_grad| (extrapolated)
  std::vector<BoundCheck> checks;
};

inline LambdaGradient grad_lambda_fd(const ProblemParams& params, const FourierField& potential, double k, double h,
                                     const SeriesOptions& opts) {
  const CenterIndex c = find_center_index(params, k);
  auto lambda_at = [&](std::span<const double> t) {
    ProblemParams p = params;
    p.t.assign(t.begin(), t.end());
    const NonResonanceReport rep = is_nonresonant(p, p.t, k);
    if (!rep.pass || rep.j != c.j)
      throw Error(ErrorKind::NeighborhoodExit, "finite-difference stencil point left the non-resonant set");
    const BlochOperator op(p, c.j, potential);
    return perturbation_series(op, k, opts).lambda;
  };
  LambdaGradient out;
  out.fd = central_gradient(lambda_at, params.t, h);
  const std::vector<double> p = p_vec(params.t, c.j);
  const double p2 = norm2_sq(p);
  out.free_grad.resize(p.size());
  double dev = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    out.free_grad[s] = 2.0 * params.l * std::pow(p2, params.l - 1) * p[s];
    dev += std::pow(out.fd.extrapolated[s] - out.free_grad[s], 2);
  }
  out.deviation = std::sqrt(dev);
  const int n = params.n;
  const double g0 = params.gamma0();
  const double bound = 2.0 * std::pow(k, 2.0 * params.l - n - params.delta - 2.0 * g0 + (n - 1 + params.delta));
  out.checks.push_back(make_check("|grad(lambda - p_j^{2l})| < 2 k^{2l-n-delta-2gamma0+n-1+delta}", out.deviation, bound,
                                  opts.hard, true));
  return out;
}

}  // namespace qpwave

#endif  // QPWAVE_BLOCH_HPP
