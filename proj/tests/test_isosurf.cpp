#include <gtest/gtest.h>

#include <functional>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qpwave/isosurf.hpp"

using namespace qpwave;

namespace {

constexpr int kR = 6;
const double kLambda = std::pow(30.0, 4);

ProblemParams base(double sigma = 0.1, cd A = 1.0) {
  ProblemParams p = fixture::reference(kR);
  p.sigma = sigma;
  p.A = A;
  return p;
}

FourierField V1() { return fixture::two_cos(1.0, kR); }

/// First seeded direction that lies in B at k.
std::vector<double> direction_in_B(const ProblemParams& p, double k, std::uint64_t seed, std::uint64_t skip = 0) {
  for (std::uint64_t i = 0;; ++i) {
    auto nu = sample_direction(p.n, seed, i);
    if (in_B(p, k, nu) && skip-- == 0) return nu;
  }
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::BoundViolation;
}

/// Nonlinear eigenvalue through dense eigensolves only.
double dense_lambda_of_kappa(double kappa, std::span<const double> nu, const FourierField& V, const ProblemParams& params) {
  const ProblemParams p = carrier_params(params, kappa, nu);
  const LatticeIndex j = find_center_index(p, p.k).j;
  const double coupling = p.coupling();
  FourierField W = add_constant(V, coupling);
  DenseSpectrum ds;
  for (int it = 0; it < 50; ++it) {
    ds = dense_oracle(BlochOperator(p, j, remove_mean(W)), p.k);
    const FourierField next = V + scale(squared_modulus(ds.pair.psi), p.sigma);
    const double d = star_norm(next - W);
    W = next;
    if (d < 1e-13) break;
  }
  ds = dense_oracle(BlochOperator(p, j, remove_mean(W)), p.k);
  return ds.pair.lambda + coupling * ds.pair.e_jj().real();
}

}  // namespace

TEST(Isosurf, FreeLambdaOfKappa) {
  const std::vector<double> nu = direction_in_B(base(), 30.0, 3);
  const FourierField V0(2, kR);
  const double kappa = 30.01;
  EXPECT_NEAR(lambda_of_kappa(kappa, nu, V0, base(0.0)), std::pow(kappa, 4), 1e-15 * std::pow(kappa, 4));
  const ProblemParams p = base(0.3, cd(0.0, 1.5));
  EXPECT_NEAR(lambda_of_kappa(kappa, nu, V0, p), std::pow(kappa, 4) + p.coupling(), 1e-15 * std::pow(kappa, 4));
}

TEST(Isosurf, LambdaOfKappaMatchesDensePath) {
  const ProblemParams p = base();
  for (std::uint64_t skip = 0; skip < 3; ++skip) {
    const std::vector<double> nu = direction_in_B(p, 30.0, 11, skip);
    const double lib = lambda_of_kappa(30.0, nu, V1(), p);
    const double ref = dense_lambda_of_kappa(30.0, nu, V1(), p);
    EXPECT_NEAR(lib, ref, 1e-8 * ref);
  }
}

TEST(Isosurf, FreeRootsAreExact) {
  const std::vector<double> nu = direction_in_B(base(), 30.0, 5);
  const IsoPoint a = kappa_solve(kLambda, nu, FourierField(2, kR), base(0.0));
  EXPECT_NEAR(a.kappa, 30.0, 1e-13);
  EXPECT_NEAR(a.h, 0.0, 1e-13);
  const ProblemParams p = base(0.2, 2.0);
  const IsoPoint b = kappa_solve(kLambda, nu, FourierField(2, kR), p);
  EXPECT_NEAR(b.kappa, std::pow(kLambda - 0.8, 0.25), 1e-13);
  EXPECT_NEAR(b.k_tilde, std::pow(kLambda - 0.8, 0.25), 1e-13);
  EXPECT_NEAR(b.h, 0.0, 1e-13);
}

TEST(Isosurf, ReferenceRootObeysBounds) {
  const ProblemParams p = base();
  const std::vector<double> nu = direction_in_B(p, 30.0, 7);
  const IsoPoint pt = kappa_solve(kLambda, nu, V1(), p);
  const double k = 30.0;
  EXPECT_LE(pt.resid, p.tol_root * kLambda);
  EXPECT_LE(std::abs(pt.kappa - k), iso_half_width(k, p));
  EXPECT_LE(std::abs(pt.h), iso_h_bound(k, p));
  EXPECT_NEAR(pt.k_tilde, std::pow(kLambda - 0.1, 0.25), 1e-13);
  EXPECT_TRUE(all_hard_pass(pt.checks));
  for (const auto& c : pt.checks) EXPECT_TRUE(c.pass) << c.name;
  EXPECT_LE(pt.best_c, p.iso_c);

  // Root certificate, re-evaluated from scratch.
  EXPECT_LE(std::abs(lambda_of_kappa(pt.kappa, nu, V1(), p) - kLambda), p.tol_root * kLambda);
}

TEST(Isosurf, SingleSignChangeAcrossInterval) {
  const ProblemParams p = base();
  const std::vector<double> nu = direction_in_B(p, 30.0, 19);
  const double w = iso_half_width(30.0, p);
  int changes = 0;
  double prev = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double kappa = 30.0 - w + 2.0 * w * i / 8.0;
    const double f = lambda_of_kappa(kappa, nu, V1(), p) - kLambda;
    if (i > 0 && (f > 0.0) != (prev > 0.0)) ++changes;
    prev = f;
  }
  EXPECT_EQ(changes, 1);
}

TEST(Isosurf, ShiftedOneSidedPotentialHasNoRoot) {
  ProblemParams p = base(0.0);
  FourierField::Coefficients c;
  c[{1, 0}] = 600.0;
  c[{-1, 0}] = 600.0;
  const FourierField V(2, kR, std::move(c), true);
  const std::vector<double> nu{0.0, 1.0};
  ASSERT_TRUE(in_B(p, 30.0, nu));
  EXPECT_EQ(kind_of([&] { kappa_solve(kLambda, nu, V, p); }), ErrorKind::NoRootInInterval);
}

TEST(Isosurf, DirectionOutsideBIsResonant) {
  const ProblemParams p = base();
  const double k = 5.0 * two_pi;
  const std::vector<double> nu{1.0, 0.0};  // k nu = 2 pi (5, 0): t = 0, four-fold degenerate shell
  ProblemParams q = p;
  q.R = 8;
  ASSERT_FALSE(in_B(q, k, nu));
  EXPECT_EQ(kind_of([&] { kappa_solve(std::pow(k, 4), nu, fixture::two_cos(1.0, 8), q); }), ErrorKind::Resonant);
}

TEST(IsosurfProperty, AmplitudeRescalingLeavesPointsUnchanged) {
  const std::vector<double> nu = direction_in_B(base(), 30.0, 23);
  const IsoPoint a = kappa_solve(kLambda, nu, V1(), base(0.2, 1.0));
  const IsoPoint b = kappa_solve(kLambda, nu, V1(), base(0.05, 2.0));
  EXPECT_NEAR(a.k_tilde, b.k_tilde, 1e-10);
  EXPECT_NEAR(a.kappa, b.kappa, 1e-10);
  EXPECT_NEAR(a.h, b.h, 1e-10);
}

TEST(IsosurfProperty, UncoupledSurfaceFollowsLinearBound) {
  const ProblemParams p = base(0.0);
  for (std::uint64_t skip = 0; skip < 4; ++skip) {
    const IsoPoint pt = kappa_solve(kLambda, direction_in_B(p, 30.0, 29, skip), V1(), p);
    EXPECT_LE(std::abs(pt.h), p.iso_c * std::pow(30.0, -2.0 * p.l + 1.0 - p.gamma0() + p.delta));
  }
}

TEST(Isosurf, FreeSurfaceSampleIsFlat) {
  const ProblemParams p = base(0.0);
  const SurfaceSample s = surface_sample(kLambda, FourierField(2, kR), p, 200, 42);
  EXPECT_EQ(s.requested, 200u);
  EXPECT_EQ(s.in_B, s.points.size());
  EXPECT_EQ(s.points.size() + s.holes.size(), 200u);
  for (const auto& pt : s.points) EXPECT_NEAR(pt.h, 0.0, 1e-13);
  const SurfaceMeasure m = surface_measure_report(s, p);
  EXPECT_NEAR(m.ratio, m.fraction, 1e-13);
  EXPECT_NEAR(m.sphere_measure, two_pi * 30.0, 1e-12);
}

TEST(Isosurf, SampleDeterministicAndConsistentWithBMeasure) {
  const ProblemParams p = base(0.0);
  const std::size_t N = 1000;
  const SurfaceSample a = surface_sample(kLambda, FourierField(2, kR), p, N, 77);
  const SurfaceSample b = surface_sample(kLambda, FourierField(2, kR), p, N, 77);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].index, b.points[i].index);
    EXPECT_EQ(a.points[i].kappa, b.points[i].kappa);
  }
  const MeasureEstimate same = estimate_B_measure(p, 30.0, N, 77);
  EXPECT_EQ(same.passes, a.in_B);

  const MeasureEstimate other = estimate_B_measure(p, 30.0, 4000, 78);
  const double frac = static_cast<double>(a.in_B) / static_cast<double>(N);
  const double se = std::sqrt(frac * (1 - frac) / N + other.stderr_ * other.stderr_);
  EXPECT_LE(std::abs(frac - other.fraction), 3.0 * se + 1e-12);
}

TEST(Isosurf, ReferenceSampleObeysDeviationBound) {
  const ProblemParams p = base();
  const SurfaceSample s = surface_sample(kLambda, V1(), p, 40, 2024);
  EXPECT_GT(s.points.size(), 0u);
  for (const auto& pt : s.points) {
    EXPECT_LT(std::abs(pt.h), iso_h_bound(30.0, p));
    EXPECT_LE(pt.resid, p.tol_root * kLambda);
  }
  for (const auto& hole : s.holes) EXPECT_FALSE(hole.reason.empty());
}

TEST(Isosurf, TangentFrameIsOrthonormal) {
  for (int n : {2, 3, 4}) {
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto nu = sample_direction(n, 1, i);
      const auto frame = tangent_frame(nu);
      ASSERT_EQ(frame.size(), static_cast<std::size_t>(n - 1));
      for (std::size_t a = 0; a < frame.size(); ++a) {
        double dn = 0.0;
        for (int c = 0; c < n; ++c) dn += frame[a][static_cast<std::size_t>(c)] * nu[static_cast<std::size_t>(c)];
        EXPECT_NEAR(dn, 0.0, 1e-14);
        for (std::size_t b = 0; b < frame.size(); ++b) {
          double d = 0.0;
          for (int c = 0; c < n; ++c) d += frame[a][static_cast<std::size_t>(c)] * frame[b][static_cast<std::size_t>(c)];
          EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-14);
        }
      }
    }
  }
  const std::vector<double> tie{std::sqrt(0.5), std::sqrt(0.5)};
  const auto f = tangent_frame(tie);
  EXPECT_NEAR(f[0][0], -std::sqrt(0.5), 1e-15);  // axis 0 dropped on the tie, e2 orthogonalised
  EXPECT_NEAR(f[0][1], std::sqrt(0.5), 1e-15);
}

TEST(Isosurf, FreeSurfaceGradientVanishes) {
  const ProblemParams p = base(0.1);
  const std::vector<double> nu = direction_in_B(p, 30.0, 31);
  const IsoPoint pt = kappa_solve(kLambda, nu, FourierField(2, kR), p);
  const HGradient g = grad_h_fd(pt, kLambda, FourierField(2, kR), p, 1e-4);
  EXPECT_LT(g.magnitude, 1e-8);
}

TEST(Isosurf, ReferenceGradientWithinBound) {
  const ProblemParams p = base();
  const std::vector<double> nu = direction_in_B(p, 30.0, 37);
  const IsoPoint pt = kappa_solve(kLambda, nu, V1(), p);
  const double step = 0.03;
  const HGradient g = grad_h_fd(pt, kLambda, V1(), p, step);
  EXPECT_EQ(g.tangents.size(), 1u);
  EXPECT_LT(g.magnitude, iso_grad_bound(30.0, p));
  EXPECT_TRUE(all_hard_pass(g.checks));
  // h is resolved only to a few ulps of kappa, so halving the step is
  // compared with that noise floor added to the relative tolerance.
  const double noise = 2.0 * 8.0 * std::numeric_limits<double>::epsilon() * 30.0 / step;
  EXPECT_LE(std::abs(g.grad[0] - g.grad_half[0]), 1e-3 * std::abs(g.grad_half[0]) + noise);
}

TEST(Isosurf, GradientStencilLeavingBIsReported) {
  const ProblemParams p = base();
  // Walk the circle until a direction in B has a neighbour outside it.
  const double dtheta = 1e-3;
  auto dir = [](double th) { return std::vector<double>{std::cos(th), std::sin(th)}; };
  double theta = 0.0;
  while (!(in_B(p, 30.0, dir(theta)) && !in_B(p, 30.0, dir(theta + dtheta)))) theta += dtheta;
  const IsoPoint pt = kappa_solve(kLambda, dir(theta), V1(), p);
  EXPECT_EQ(kind_of([&] { grad_h_fd(pt, kLambda, V1(), p, dtheta); }), ErrorKind::NeighborhoodExit);
}

TEST(Isosurf, SampleRejectsZeroCount) {
  EXPECT_EQ(kind_of([&] { surface_sample(kLambda, V1(), base(), 0, 1); }), ErrorKind::Validation);
}
