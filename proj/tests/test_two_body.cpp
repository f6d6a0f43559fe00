#include <gtest/gtest.h>

#include <random>

#include "keldren/two_body.hpp"

using namespace keldren;

namespace {

const PairPotential kBump = PairPotential::bump(0.5, 1.0);

// Deflection angle of the relative motion (reduced mass 1/2, energy k^2):
// chi = pi - 2 b int_0^umax du / sqrt(1 - b^2 u^2 - V(1/u)/E), with
// u = umax (1 - t^2) to remove the turning-point root.
double deflection(const PairPotential& v, double k, double b) {
  const double E = k * k;
  auto F = [&](double u) { return 1 - b * b * u * u - (u > 0 ? v(1 / u) : 0.0) / E; };
  double lo = 0.0, hi = 0.0;
  const double du = 1e-3;
  for (double u = du;; u += du) {
    if (F(u) <= 0) {
      lo = u - du;
      hi = u;
      break;
    }
    if (u > 1e4) return 0.0;
  }
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    (F(m) > 0 ? lo : hi) = m;
  }
  const double umax = 0.5 * (lo + hi);
  const auto rule = gauss_legendre(400, 0.0, 1.0);
  double acc = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double t = rule.nodes[i], u = umax * (1 - t * t);
    acc += rule.weights[i] * 2 * umax * t / std::sqrt(std::max(1e-300, F(u)));
  }
  return pi - 2 * b * acc;
}

// Eq. (5) from the deflection angle alone: for particle 1 at rest,
// |p1'| = p |sin(chi/2)| and |p2'| = p |cos(chi/2)|.
double impact_oracle(const ClassicalDistribution& h, const PairPotential& v) {
  std::vector<double> br;
  for (int i = 0; i <= 48; ++i) br.push_back(0.125 * i);
  br.push_back(2 * std::sqrt(v.strength()));
  std::sort(br.begin(), br.end());
  const auto pr = composite_gauss_legendre(br, 8);
  const auto brule = gauss_legendre(40, 0.0, v.radius());
  double total = 0;
  for (std::size_t i = 0; i < pr.nodes.size(); ++i) {
    const double p = pr.nodes[i];
    double inner = 0;
    for (std::size_t j = 0; j < brule.nodes.size(); ++j) {
      const double b = brule.nodes[j], chi = deflection(v, p / 2, b);
      inner += brule.weights[j] * 2 * pi * b *
               (h(p * std::abs(std::sin(chi / 2))) * h(p * std::abs(std::cos(chi / 2))) - h(p) * h(0.0));
    }
    total += pr.weights[i] * 4 * pi * p * p * p * inner;
  }
  return total;
}

TwoBodyState receding(double p, double b, double R = 10.0) { return {{0, 0, 0}, {0, 0, 0}, {0, 0, p}, {b, 0, R}}; }

}  // namespace

TEST(Potential, BumpShapeAndSupport) {
  EXPECT_DOUBLE_EQ(kBump(0.0), 0.5);
  EXPECT_EQ(kBump(1.0), 0.0);
  EXPECT_EQ(kBump(3.0), 0.0);
  for (double r : {0.2, 0.5, 0.9}) {
    const double h = 1e-6;
    EXPECT_NEAR(kBump.derivative(r), (kBump(r + h) - kBump(r - h)) / (2 * h), 1e-7);
  }
  EXPECT_TRUE(PairPotential::none().vanishes());
  EXPECT_EQ(PairPotential::from_json(kBump.to_json()).radius(), 1.0);
}

TEST(BackwardMap, FreeWhenOutsideAndNotApproachingInThePast) {
  // approaching now: in the past they were further apart and never met
  const TwoBodyState s{{0, 0, 0}, {0, 0, 0}, {0, 0, -1.2}, {0.3, 0, 5}};
  const auto r = backward_map(s, kBump);
  EXPECT_FALSE(r.interacted);
  EXPECT_EQ(r.p2[2], -1.2);
  // receding but the past straight line misses the support
  const auto m = backward_map(receding(1.0, 1.5), kBump);
  EXPECT_FALSE(m.interacted);
  EXPECT_EQ(m.p2[2], 1.0);
}

TEST(BackwardMap, HeadOnBelowBarrierSwapsMomenta) {
  // relative energy p^2 = 0.25 < V0 = 1: equal masses reflect, i.e. exchange momenta
  const auto v = PairPotential::bump(1.0, 1.0);
  const TwoBodyState s{{0, 0, -0.5}, {0, 0, -4}, {0, 0, 0.5}, {0, 0, 4}};
  const auto r = backward_map(s, v);
  EXPECT_TRUE(r.interacted);
  EXPECT_NEAR(r.p1[2], 0.5, 1e-9);
  EXPECT_NEAR(r.p2[2], -0.5, 1e-9);
  // above the barrier they pass through each other and keep their momenta
  const TwoBodyState fast{{0, 0, -1.5}, {0, 0, -4}, {0, 0, 1.5}, {0, 0, 4}};
  const auto f = backward_map(fast, v);
  EXPECT_NEAR(f.p1[2], -1.5, 1e-9);
}

TEST(BackwardMap, MatchesDeflectionAngle) {
  for (double p : {0.8, 1.2, 2.0, 3.5})
    for (double b : {0.0, 0.2, 0.5, 0.8, 0.95}) {
      const auto r = backward_map(receding(p, b), kBump);
      const double chi = deflection(kBump, p / 2, b);
      EXPECT_NEAR(norm(r.p1), p * std::abs(std::sin(chi / 2)), 1e-7) << p << " " << b;
      EXPECT_NEAR(norm(r.p2), p * std::abs(std::cos(chi / 2)), 1e-7) << p << " " << b;
    }
}

TEST(BackwardMap, ConservesMomentumAndEnergy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-0.6, 0.6);
  for (int i = 0; i < 20; ++i) {
    // start inside the support so V(q1 - q2) enters the energy balance
    const TwoBodyState s{{U(rng), U(rng), U(rng)}, {0, 0, 0}, {U(rng), U(rng), U(rng)}, {U(rng), U(rng), U(rng)}};
    const auto r = backward_map(s, kBump);
    const Vec3 dp = (r.p1 + r.p2) - (s.p1 + s.p2);
    EXPECT_LT(norm(dp), 1e-9);
    const double lhs = norm2(r.p1) + norm2(r.p2);
    const double rhs = norm2(s.p1) + norm2(s.p2) + 2 * kBump(norm(s.q1 - s.q2));
    EXPECT_NEAR(lhs, rhs, 1e-8);
    EXPECT_LT(r.energy_drift, 1e-8);
  }
}

TEST(BackwardMap, AgreesWithLongBackwardIntegration) {
  const auto s = receding(1.3, 0.4, 3.0);
  const auto far = evolve(s, kBump, -20.0);
  const auto r = backward_map(s, kBump);
  EXPECT_NEAR(far.p1[0], r.p1[0], 1e-8);
  EXPECT_NEAR(far.p1[2], r.p1[2], 1e-8);
  EXPECT_NEAR(far.p2[0], r.p2[0], 1e-8);
}

TEST(Flow, BackwardThenForwardIsIdentity) {
  const TwoBodyState s{{0.3, -0.1, 0.2}, {0.1, 0, 0}, {-0.4, 0.2, 0.1}, {-0.2, 0.3, 0.1}};
  for (double t : {0.5, 2.0, 5.0}) {
    const auto back = evolve(evolve(s, kBump, -t), kBump, t);
    EXPECT_LT(norm(back.q1 - s.q1) + norm(back.p2 - s.p2), 1e-6) << t;
  }
}

TEST(Rho2, InvariantAlongTrajectories) {
  const auto h = ClassicalDistribution::shell(1.5, 0.3);
  const TwoBodyState s{{0.2, 0, 0.9}, {0, 0, -1.5}, {-0.1, 0.3, -0.6}, {0.2, 0.1, 0.8}};
  const double r0 = rho2_factorized(s, h, kBump);
  EXPECT_GT(r0, 0.0);
  for (double t : {0.5, 1.0, 2.0}) EXPECT_NEAR(rho2_factorized(evolve(s, kBump, t), h, kBump), r0, 1e-8 * r0) << t;
}

TEST(Rho2, ProductForSeparatedPairAndZeroDistribution) {
  const auto h = ClassicalDistribution::quartic();
  const TwoBodyState s{{0.4, 0, 0}, {0, 0, 0}, {0, 0, 0.9}, {0, 4, 0}};
  EXPECT_DOUBLE_EQ(rho2_factorized(s, h, kBump), h(0.4) * h(0.9));
  EXPECT_EQ(rho2_factorized(receding(1.0, 0.3), ClassicalDistribution::zero(), kBump), 0.0);
}

TEST(Boundary, NullsVanish) {
  const auto shell = ClassicalDistribution::shell(1.5, 0.3);
  EXPECT_LT(std::abs(boundary_integral_gauss(shell, PairPotential::none(), 10.0)), 1e-12);
  EXPECT_EQ(scattering_integral_classical(shell, PairPotential::none()), 0.0);
  const auto maxw = ClassicalDistribution::maxwellian(1.0);
  EXPECT_LT(std::abs(boundary_integral_gauss(maxw, kBump, 10.0)), 1e-8);
  EXPECT_LT(std::abs(scattering_integral_classical(maxw, kBump)), 1e-8);
}

TEST(Boundary, ImpactFormMatchesDeflectionOracle) {
  const auto h = ClassicalDistribution::shell(1.5, 0.3);
  const double ours = scattering_integral_classical(h, kBump), oracle = impact_oracle(h, kBump);
  EXPECT_NEAR(ours, oracle, 1e-3 * std::abs(oracle));
}

TEST(Boundary, SurfaceAndImpactFormsAgree) {
  for (const auto& h : {ClassicalDistribution::two_temperature(0.5, 2.0, 0.5), ClassicalDistribution::quartic()}) {
    const auto c10 = compare_boundary_forms(h, kBump, 10.0);
    EXPECT_LT(c10.relative, 0.02) << h.name;
    EXPECT_EQ(std::signbit(c10.gauss), std::signbit(c10.impact));
    const double i20 = boundary_integral_gauss(h, kBump, 20.0);
    EXPECT_LT(std::abs(i20 - c10.gauss), 0.02 * std::abs(c10.gauss)) << h.name;
  }
}

TEST(Boundary, RejectsUnlocalizedCap) {
  EXPECT_THROW(boundary_integral_gauss(ClassicalDistribution::quartic(), kBump, 1.5), std::invalid_argument);
}
