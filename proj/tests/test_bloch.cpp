#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qpwave/bloch.hpp"
#include "qpwave/fixpoint.hpp"

using namespace qpwave;

namespace {

SpectralPair series(const BlochOperator& op, double k) {
  SeriesOptions o = SeriesOptions::from(op.params(), false);
  return perturbation_series(op, k, o);
}

/// Smallest-R reference operator that still covers the energy shell.
BlochOperator reference_op(const FourierField& V, int R = 6) {
  const ProblemParams p = fixture::reference(R);
  return BlochOperator(p, fixture::ref_j(), V);
}

/// Point near (3, 1) where the scan box of radius 4 is still large enough.
ProblemParams small_box_params() {
  ProblemParams p = fixture::reference(4);
  p.t = {0.31, 0.17};
  p.k = std::sqrt(norm2_sq(p_vec(p.t, LatticeIndex{3, 1})));
  return p;
}

}  // namespace

TEST(Bloch, PVecExamples) {
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(p_vec(zero, LatticeIndex{1, 0}), (std::vector<double>{two_pi, 0.0}));
  const std::vector<double> half{0.5, 0.5};
  EXPECT_EQ(p_vec(half, LatticeIndex{0, 0}), half);
  EXPECT_NEAR(free_symbol(zero, LatticeIndex{1, 0}, 2), 1558.545, 1e-3);
  EXPECT_THROW(p_vec(zero, LatticeIndex{1, 0, 0}), Error);
}

TEST(Bloch, OperatorHasExactDiagonalAndConvolutionStructure) {
  oracle::Gen gen(2);
  ProblemParams p = small_box_params();
  p.R = 3;
  const FourierField V = remove_mean(gen.field(2, 2, 3, 8, false));
  const BlochOperator op(p, LatticeIndex{3, 1}, V);
  const Matrix H = op.dense();
  const BoxIndexer& box = op.basis();
  for (std::size_t m = 0; m < box.size(); ++m) {
    const LatticeIndex qm = box.at(m);
    EXPECT_EQ(H(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)).real(),
              free_symbol(p.t, LatticeIndex{3, 1} + qm, p.l));
    for (std::size_t q = 0; q < box.size(); ++q) {
      if (q == m) continue;
      EXPECT_EQ(H(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q)), V.at(qm - box.at(q)));
    }
  }
  std::vector<cd> x(op.size()), y(op.size());
  for (cd& v : x) v = gen.complex(1.0);
  op.apply_potential(x.data(), y.data());
  Eigen::VectorXcd xv = Eigen::Map<Eigen::VectorXcd>(x.data(), static_cast<Eigen::Index>(x.size()));
  Matrix Wm = H;
  Wm.diagonal().setZero();
  const Eigen::VectorXcd ref = Wm * xv;
  for (std::size_t b = 0; b < y.size(); ++b) EXPECT_LT(std::abs(y[b] - ref(static_cast<Eigen::Index>(b))), 1e-13);
}

TEST(Bloch, OperatorRejectsMeanCoefficient) {
  const ProblemParams p = small_box_params();
  const FourierField W = add_constant(fixture::two_cos(1.0, 4), 0.5);
  EXPECT_THROW(BlochOperator(p, LatticeIndex{3, 1}, W), Error);
}

TEST(Bloch, ReferenceCenterIndex) {
  const ProblemParams p = fixture::reference(12);
  const CenterIndex c = find_center_index(p, p.k);
  EXPECT_EQ(c.j, fixture::ref_j());
  EXPECT_GT(c.margin, 0.0);
  EXPECT_EQ(free_symbol(p.t, c.j, p.l), std::pow(norm2_sq(p_vec(p.t, c.j)), 2));
}

TEST(Bloch, ZeroPotentialGivesFreeLevel) {
  const BlochOperator op = reference_op(FourierField(2, 6));
  const double k = op.params().k;
  const ContourTerms ct = contour_terms(op, k, 3, 64);
  for (const auto& t : ct.terms) {
    EXPECT_EQ(t.g, 0.0);
    EXPECT_EQ(op_norm_1(t.G), 0.0);
  }
  const SpectralPair sp = series(op, k);
  EXPECT_EQ(sp.lambda, op.center_level());
  EXPECT_EQ(sp.proj_col.support_size(), 1u);
  EXPECT_EQ(sp.e_jj(), cd(1.0, 0.0));

  const DenseSpectrum ds = dense_oracle(op, k);
  EXPECT_EQ(ds.pair.lambda, op.center_level());
  EXPECT_EQ(ds.eigenvector.cwiseAbs().sum(), 1.0);
  EXPECT_EQ(ds.eigenvector(static_cast<Eigen::Index>(op.center_slot())), cd(1.0, 0.0));
}

TEST(Bloch, FirstOrderTraceVanishesForMeanFreePotential) {
  const BlochOperator op = reference_op(fixture::two_cos(1.0, 6));
  const ContourTerms ct = contour_terms(op, op.params().k, 1, 64);
  EXPECT_LT(std::abs(ct.terms[0].g), 1e-12 * op.params().contour_radius());
}

TEST(Bloch, SecondOrderMatchesResidueFormula) {
  for (double amp : {0.3, 1.0, 2.0}) {
    const FourierField V = fixture::single_mode(amp, 6);
    const BlochOperator op = reference_op(V);
    const double ref = oracle::g2_residue(V, op.params().t, fixture::ref_j(), 2);
    const ContourTerms ct = contour_terms(op, op.params().k, 2, 64);
    EXPECT_NEAR(ct.terms[1].g, ref, 1e-10 * std::abs(ref));
  }
}

TEST(Bloch, RestrictedTraceMatchesDenseTrace) {
  const ProblemParams p = small_box_params();
  const FourierField V = fixture::triangle(3.0, 4);
  const BlochOperator op(p, LatticeIndex{3, 1}, V);
  const int r_hi = 5;
  const std::vector<double> ref = oracle::dense_trace_g(op, p.k, r_hi, 64);
  const ContourTerms ct = contour_terms(op, p.k, r_hi, 64);
  const double rho = p.contour_radius();
  bool saw_odd = false;
  for (int r = 1; r <= r_hi; ++r) {
    const double lib = ct.terms[static_cast<std::size_t>(r - 1)].g;
    const double want = ref[static_cast<std::size_t>(r)];
    EXPECT_NEAR(lib, want, 1e-8 * std::abs(want) + 1e-15 * rho) << "r = " << r;
    if (r == 3 && std::abs(want) > 1e-12 * rho) saw_odd = true;
  }
  EXPECT_TRUE(saw_odd) << "the potential should produce a nonzero third-order term";
}

TEST(Bloch, FirstOrderColumnMatchesClosedForm) {
  const FourierField V = fixture::two_cos(1.0, 6);
  const BlochOperator op = reference_op(V);
  const ContourTerms ct = contour_terms(op, op.params().k, 1, 64);
  const FourierField ref = oracle::first_order_column(V, op.params().t, fixture::ref_j(), 2, 6);
  const auto jc = static_cast<Eigen::Index>(op.center_slot());
  for (std::size_t b = 0; b < op.size(); ++b) {
    const cd lib = ct.terms[0].G(static_cast<Eigen::Index>(b), jc);
    const cd want = ref.at(op.basis().at(b));
    EXPECT_LT(std::abs(lib - want), 1e-10 * (std::abs(want) + 1e-6)) << op.basis().at(b).str();
  }
}

TEST(Bloch, SeriesAgreesWithDenseOracle) {
  const FourierField V = fixture::two_cos(1.0, 7);
  const BlochOperator op = reference_op(V, 7);
  const double k = op.params().k;
  const SpectralPair sp = series(op, k);
  const DenseSpectrum ds = dense_oracle(op, k);
  EXPECT_NEAR(sp.lambda, ds.pair.lambda, 1e-8 * std::abs(ds.pair.lambda));
  EXPECT_LT(star_norm(sp.proj_col - ds.pair.proj_col), 1e-8);

  // Same comparison in the eigenvector gauge: divide by the j-th component.
  const auto jc = static_cast<Eigen::Index>(op.center_slot());
  const Eigen::VectorXcd v = ds.eigenvector / ds.eigenvector(jc);
  const cd ejj = sp.e_jj();
  double diff = 0.0;
  for (std::size_t b = 0; b < op.size(); ++b)
    diff += std::abs(sp.proj_col.at(op.basis().at(b)) / ejj - v(static_cast<Eigen::Index>(b)));
  EXPECT_LT(diff, 1e-8);

  const double next = op.params().contour_radius() * std::pow(k, -op.params().gamma0() * (sp.orders + 1));
  EXPECT_LE(std::abs(sp.lambda - ds.pair.lambda), 10.0 * next + 1e-15 * sp.lambda);
}

TEST(Bloch, SpectralPairInvariants) {
  const FourierField V = fixture::two_cos(1.0, 6);
  const BlochOperator op = reference_op(V);
  const ProblemParams& p = op.params();
  ASSERT_GT(p.k, k1_threshold(star_norm(V), p));
  const SpectralPair sp = perturbation_series(op, p.k, SeriesOptions::from(p, true));
  const double rho = p.contour_radius();
  EXPECT_GT(sp.lambda, p.energy() - rho);
  EXPECT_LT(sp.lambda, p.energy() + rho);
  EXPECT_LE(std::abs(sp.lambda - sp.free_level), std::pow(p.k, p.rho_exponent() - 2.0 * p.gamma0()));
  EXPECT_LT(std::abs(sp.e_jj() - 1.0), std::pow(p.k, -p.gamma0()));
  EXPECT_NEAR(std::abs(sp.psi.at(LatticeIndex::zero(2))), std::abs(p.A) * std::abs(sp.e_jj()), 1e-15);
  for (const auto& t : sp.terms) EXPECT_LE(std::abs(t.g_imag), 1e-9 * std::abs(t.g) + 1e-12) << t.r;
  EXPECT_TRUE(all_hard_pass(sp.checks));
}

TEST(Bloch, FullProjectionCorrectionWithinBound) {
  const FourierField V = fixture::two_cos(1.0, 5);
  const BlochOperator op = reference_op(V, 5);
  const ProblemParams& p = op.params();
  ASSERT_GT(p.k, k1_threshold(star_norm(V), p));
  const ContourTerms ct = contour_terms(op, p.k, 6, 64);
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(op.size()), static_cast<Eigen::Index>(op.size()));
  for (std::size_t r = 0; r < ct.terms.size(); ++r) {
    EXPECT_LE(op_norm_1(ct.terms[r].G), std::pow(p.k, -p.gamma0() * static_cast<double>(r + 1))) << r + 1;
    sum += ct.terms[r].G;
  }
  EXPECT_LE(op_norm_1(sum), std::pow(p.k, -p.gamma0()));
}

TEST(Bloch, QuadratureConvergesWhenNodesDouble) {
  const FourierField V = fixture::two_cos(1.0, 6);
  const BlochOperator op = reference_op(V);
  const double k = op.params().k;
  const ContourTerms a = contour_terms(op, k, 4, 64);
  const ContourTerms b = contour_terms(op, k, 4, 128);
  for (std::size_t r = 1; r < a.terms.size(); ++r) {
    EXPECT_NEAR(a.terms[r].g, b.terms[r].g, 1e-10 * std::abs(b.terms[r].g)) << r + 1;
    // Orders far below tol_fix are never retained; there only rounding is left.
    EXPECT_LE(op_norm_1(a.terms[r].G - b.terms[r].G), 1e-10 * op_norm_1(b.terms[r].G) + 1e-20) << r + 1;
  }
}

TEST(Bloch, LevelNextToContourIsIllConditioned) {
  ProblemParams p = fixture::reference(6);
  const double a = free_symbol(p.t, fixture::ref_j(), p.l);
  double k = p.k;
  for (int it = 0; it < 60; ++it) k = std::pow(a - 0.99 * std::pow(k, p.rho_exponent()), 0.25);
  p.k = k;
  const BlochOperator op(p, fixture::ref_j(), fixture::two_cos(1.0, 6));
  try {
    series(op, k);
    FAIL() << "expected QuadratureIll";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::QuadratureIll);
  }
}

TEST(Bloch, HugePotentialDiverges) {
  const BlochOperator op = reference_op(fixture::two_cos(1e6, 6));
  try {
    series(op, op.params().k);
    FAIL() << "expected SeriesDiverging";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SeriesDiverging);
  }
}

TEST(Bloch, DenseOracleResidualAndWindowErrors) {
  const BlochOperator op = reference_op(fixture::two_cos(1.0, 6));
  const DenseSpectrum ds = dense_oracle(op, op.params().k);
  EXPECT_LT(ds.residual, 1e-10 * ds.matrix_norm);
  EXPECT_EQ(ds.in_window, 1);
  EXPECT_EQ(ds.pair.lambda_imag, 0.0);

  // Window away from every level.
  const ProblemParams& p = op.params();
  const double k_far = std::pow(p.energy() + 40.0 * p.contour_radius(), 0.25);
  try {
    dense_oracle(op, k_far);
    FAIL() << "expected NoEigenvalueInWindow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoEigenvalueInWindow);
  }

  // Symmetric shell: four degenerate levels inside the window.
  ProblemParams s = fixture::reference(3);
  s.t = {0.0, 0.0};
  s.k = two_pi;
  const BlochOperator sym(s, LatticeIndex{1, 0}, FourierField(2, 3));
  try {
    dense_oracle(sym, two_pi);
    FAIL() << "expected MultipleInWindow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MultipleInWindow);
  }
}

TEST(Bloch, DenseOracleReproducesSecondOrderForWeakMode) {
  const FourierField V = fixture::single_mode(0.5, 6);
  const BlochOperator op = reference_op(V);
  const ProblemParams& p = op.params();
  const DenseSpectrum ds = dense_oracle(op, p.k);
  const double second = op.center_level() + oracle::g2_residue(V, p.t, fixture::ref_j(), 2);
  const double third = std::pow(star_norm(V), 3) * std::pow(p.k, -3.0 * (2 * p.l - p.n));
  const double rounding = 16.0 * std::numeric_limits<double>::epsilon() * ds.matrix_norm;
  EXPECT_LE(std::abs(ds.pair.lambda - second), third + rounding);
  EXPECT_LE(std::abs(series(op, p.k).lambda - second), third);
}

TEST(Bloch, OperatorNorms) {
  EXPECT_EQ(op_norm_1(Matrix::Identity(4, 4)), 1.0);
  EXPECT_EQ(op_norm_1(Matrix::Zero(3, 3)), 0.0);
  Matrix m(2, 2);
  m << 1.0, -2.0, 3.0, 4.0;
  EXPECT_EQ(op_norm_1(m), 6.0);

  EXPECT_NEAR(trace_norm(Matrix::Identity(5, 5)), 5.0, 1e-13);
  Eigen::VectorXcd u(3), v(4);
  u << cd(1, 2), cd(0, -1), cd(3, 0);
  v << cd(0.5, 0), cd(1, 1), cd(-2, 0), cd(0, 0.25);
  EXPECT_NEAR(trace_norm(u * v.adjoint()), u.norm() * v.norm(), 1e-12);

  oracle::Gen gen(17);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix r(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i)
      for (Eigen::Index c = 0; c < 5; ++c) r(i, c) = gen.complex(1.0);
    EXPECT_NEAR(trace_norm(r), oracle::trace_norm_eig(r), 1e-10);
  }
}

TEST(Bloch, FreeGradientMatchesSymbol) {
  const ProblemParams p = fixture::reference(6);
  const LambdaGradient g = grad_lambda_fd(p, FourierField(2, 6), p.k, 1e-4, SeriesOptions::from(p, false));
  for (std::size_t s = 0; s < 2; ++s)
    EXPECT_NEAR(g.fd.extrapolated[s], g.free_grad[s], 1e-8 * std::abs(g.free_grad[s]));
  const std::vector<double> pj = p_vec(p.t, fixture::ref_j());
  EXPECT_NEAR(g.free_grad[0], 4.0 * norm2_sq(pj) * pj[0], 1e-9 * std::abs(g.free_grad[0]));
}

TEST(Bloch, PerturbedGradientWithinBoundAndMatchesDenseDifferences) {
  const ProblemParams p = fixture::reference(6);
  const FourierField V = fixture::two_cos(1.0, 6);
  const double h = 1e-4;
  const LambdaGradient g = grad_lambda_fd(p, V, p.k, h, SeriesOptions::from(p, true));
  EXPECT_TRUE(all_hard_pass(g.checks));
  EXPECT_LT(g.fd.richardson_rel, 1e-4);

  auto dense_lambda = [&](std::span<const double> t) {
    ProblemParams q = p;
    q.t.assign(t.begin(), t.end());
    return dense_oracle(BlochOperator(q, fixture::ref_j(), V), p.k).pair.lambda;
  };
  const GradientEstimate ref = central_gradient(dense_lambda, p.t, h);
  for (std::size_t s = 0; s < 2; ++s)
    EXPECT_NEAR(g.fd.extrapolated[s], ref.extrapolated[s], 1e-5 * std::abs(ref.extrapolated[s]));
}

TEST(Bloch, GradientStencilOutsideNeighborhood) {
  const ProblemParams p = fixture::reference(6);
  try {
    grad_lambda_fd(p, fixture::two_cos(1.0, 6), p.k, 1.0, SeriesOptions::from(p, false));
    FAIL() << "expected NeighborhoodExit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NeighborhoodExit);
  }
}

TEST(BlochProperty, FreeResolventBoundOnContour) {
  oracle::Gen gen(31);
  ProblemParams p = fixture::reference(8);
  int tested = 0;
  for (int trial = 0; trial < 200 && tested < 40; ++trial) {
    p.t = {gen.uniform(0.0, two_pi), gen.uniform(0.0, two_pi)};
    const LatticeIndex j{gen.integer(2, 5), gen.integer(-3, 3)};
    const double k = std::sqrt(norm2_sq(p_vec(p.t, j)));  // on the free shell S0(k)
    p.k = k;
    if (!is_nonresonant(p, p.t, k).pass) continue;
    ++tested;
    const BlochOperator op(p, find_center_index(p, k).j, FourierField(2, 8));
    const ContourNodes nodes = contour_nodes(p.energy(), p.contour_radius(), p.n_quad);
    EXPECT_LE(max_free_resolvent_norm(op, nodes), free_resolvent_bound(p));
    EXPECT_NEAR(free_resolvent_bound(p), std::pow(k, -p.rho_exponent()), 1e-9 * std::pow(k, -p.rho_exponent()));
  }
  EXPECT_GE(tested, 20);
}

TEST(BlochProperty, SeriesMatchesOracleOnRandomPotentials) {
  oracle::Gen gen(55);
  for (int trial = 0; trial < 6; ++trial) {
    const FourierField V = remove_mean(gen.field(2, 2, 5, 4, true));
    const BlochOperator op = reference_op(V, 5);
    const double k = op.params().k;
    const SpectralPair sp = series(op, k);
    const DenseSpectrum ds = dense_oracle(op, k);
    EXPECT_NEAR(sp.lambda, ds.pair.lambda, 1e-8 * ds.pair.lambda);
    EXPECT_LT(star_norm(sp.proj_col - ds.pair.proj_col), 1e-8);
  }
}
