#include <gtest/gtest.h>

#include <random>

#include "keldren/kinetics.hpp"

using namespace keldren;

namespace {

// Lab-frame parameterization: keep p1 and the direction u of p2, solve
// |p2| = s from energy conservation. D = (P.u)^2 - 4 p.p1; for p.p1 > 0 both
// roots count and u is restricted to mu >= mu0, where mu - mu0 = (1 - mu0) t^2
// removes the inverse square root at the edge.
double st_oracle(const KineticState& rho, const ScatteringKernel& w, double p) {
  const Vec3 pv{0, 0, p};
  const double n0 = rho(p);
  std::vector<double> rb;
  for (int i = 0; i <= 2 * static_cast<int>(std::ceil(rho.kmax())); ++i) rb.push_back(std::min(rho.kmax(), 0.5 * i));
  const auto rk = composite_gauss_legendre(rb, 16);
  const auto cneg = gauss_legendre(24, -1.0, 0.0), cpos = gauss_legendre(24, 0.0, 1.0);
  const auto gl = gauss_legendre(32, 0.0, 1.0);
  const int nphi = 32;
  double total = 0;
  auto bracket = [&](const Vec3& p1, const Vec3& p2, const Vec3& p3) {
    const double n1 = rho(p1), n2 = rho(p2), n3 = rho(p3);
    return w(pv, p1, p2, p3) * ((1 + n0) * (1 + n1) * n2 * n3 - n0 * n1 * (1 + n2) * (1 + n3));
  };
  for (std::size_t i = 0; i < rk.nodes.size(); ++i) {
    const double k1 = rk.nodes[i];
    for (const auto* cr : {&cneg, &cpos})
      for (std::size_t j = 0; j < cr->nodes.size(); ++j) {
        const double c1 = cr->nodes[j], s1 = std::sqrt(1 - c1 * c1);
        const Vec3 p1{k1 * s1, 0, k1 * c1};
        const Vec3 P = pv + p1;
        const double Pn = norm(P), pp1 = dot(pv, p1);
        const Vec3 e3 = (1.0 / Pn) * P;
        Vec3 e1 = cross(e3, Vec3{0, 1, 0});
        e1 = (1.0 / norm(e1)) * e1;
        const Vec3 e2 = cross(e3, e1);
        double inner = 0;
        for (std::size_t m = 0; m < gl.nodes.size(); ++m) {
          double mu, jac;
          if (pp1 <= 0) {
            mu = 2 * gl.nodes[m] - 1;
            jac = 2 * gl.weights[m];
          } else {
            const double mu0 = 2 * std::sqrt(pp1) / Pn, t = gl.nodes[m];
            mu = mu0 + (1 - mu0) * t * t;
            jac = 2 * (1 - mu0) * t * gl.weights[m];
          }
          const double sqD = std::sqrt(std::max(0.0, Pn * Pn * mu * mu - 4 * pp1));
          const double sm = std::sqrt(std::max(0.0, 1 - mu * mu));
          for (int a = 0; a < nphi; ++a) {
            const double phi = 2 * pi * a / nphi;
            const Vec3 u = mu * e3 + sm * std::cos(phi) * e1 + sm * std::sin(phi) * e2;
            for (int sgn : {+1, -1}) {
              const double s = 0.5 * (Pn * mu + sgn * sqD);
              if (!(s > 0) || (pp1 <= 0 && sgn < 0)) continue;
              const Vec3 p2 = s * u;
              inner += jac * (2 * pi / nphi) * s * s / sqD * bracket(p1, p2, P - p2);
            }
          }
        }
        total += 2 * pi * k1 * k1 * rk.weights[i] * cr->weights[j] * inner;
      }
  }
  return total;
}

KineticState shell_state() { return KineticState(OccupationFunction::shell(0.5, 1.5, 0.4, 0.0), 6.0); }

std::vector<double> perturbed_be(double dk, int n, std::vector<double>* be) {
  std::vector<double> v(n);
  be->resize(n);
  for (int i = 0; i < n; ++i) {
    const double k = dk * i;
    (*be)[i] = 1.0 / std::expm1(k * k / 2 + 0.5);
    v[i] = (*be)[i] * (1 + 0.1 * std::cos(2 * k));
  }
  return v;
}

}  // namespace

TEST(Kernel, SymmetriesOnShell) {
  const auto w = ScatteringKernel::born(1.3, 0.8);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0, 1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p{N(rng), N(rng), N(rng)}, p1{N(rng), N(rng), N(rng)}, p2{N(rng), N(rng), N(rng)};
    const Vec3 p3 = p + p1 - p2;
    const double v = w(p, p1, p2, p3);
    EXPECT_NEAR(w(p, p1, p3, p2), v, 1e-15);
    EXPECT_NEAR(w(p1, p, p2, p3), v, 1e-15);
    EXPECT_NEAR(w(p2, p3, p, p1), v, 1e-15);
    EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(ScatteringKernel::from_json(w.to_json()).range(), 0.8);
  EXPECT_THROW(ScatteringKernel::constant(-1), std::invalid_argument);
}

TEST(Collision, ZeroStateHasNoCollisions) {
  const KineticState z(OccupationFunction::gaussian(0.0, 1.0), 5.0);
  for (double p : {0.0, 1.0, 3.0}) {
    const auto t = collision_terms(z, ScatteringKernel::constant(1.0), p);
    EXPECT_EQ(t.st, 0.0);
    EXPECT_EQ(t.gain, 0.0);
  }
}

TEST(Collision, MatchesLabFrameOracle) {
  const auto s = shell_state();
  for (const auto& w : {ScatteringKernel::constant(0.1), ScatteringKernel::born(1.0, 1.0)})
    for (double p : {0.4, 1.5, 2.3}) {
      const double a = scattering_integral(s, w, p), b = st_oracle(s, w, p);
      EXPECT_NEAR(a, b, 2e-4 * std::abs(b)) << w.kind() << " p=" << p << " " << a << " " << b;
    }
}

TEST(Collision, LinearInKernel) {
  const auto s = shell_state();
  const double a = scattering_integral(s, ScatteringKernel::constant(1.0), 1.1);
  EXPECT_NEAR(scattering_integral(s, ScatteringKernel::constant(2.5), 1.1), 2.5 * a, 1e-13 * std::abs(a));
}

TEST(Collision, RejectsMomentumOffGrid) {
  EXPECT_THROW(scattering_integral(shell_state(), ScatteringKernel::constant(1), 6.5), std::out_of_range);
  EXPECT_THROW(KineticState(OccupationFunction::tabulated(0.0, 0.1, std::vector<double>(11, 0.1)), 2.0),
               std::invalid_argument);
}

TEST(FixedPoint, BoseEinsteinIsStationary) {
  const auto rows = fixed_point_table({0.5, 1.0, 2.0}, {0.2, 0.5, 1.0}, {0.0, 0.8, 2.0}, ScatteringKernel::born(1, 1));
  ASSERT_EQ(rows.size(), 27u);
  for (const auto& r : rows) {
    EXPECT_GT(r.gain, 0.0);
    EXPECT_LT(r.relative, 1e-6) << r.alpha << " " << r.beta << " " << r.p;
  }
}

TEST(FixedPoint, FermiSignIsNotStationary) {
  // 1/(e^{x}+1) does not satisfy (1+n) = e^{x} n, so the bosonic bracket survives
  std::vector<double> v;
  for (int i = 0; i <= 120; ++i) v.push_back(1.0 / (std::exp(0.5 * std::pow(0.05 * i, 2) + 0.5) + 1.0));
  const auto s = KineticState::on_grid(0.05, v);
  const auto t = collision_terms(s, ScatteringKernel::born(1, 1), 0.5);
  EXPECT_GT(std::abs(t.st) / t.gain, 1e-2);
}

TEST(Conservation, NumberAndEnergyMomentsVanish) {
  const auto s = shell_state();
  const auto w = ScatteringKernel::born(1, 1);
  const double dk = 0.1;
  std::vector<double> st, ab;
  for (int i = 0; i <= 60; ++i) {
    st.push_back(scattering_integral(s, w, dk * i));
    ab.push_back(std::abs(st.back()));
  }
  const auto m = grid_moments(dk, st), a = grid_moments(dk, ab);
  EXPECT_LT(std::abs(m.number), 1e-3 * a.number);
  EXPECT_LT(std::abs(m.energy), 1e-3 * a.energy);
}

TEST(Relaxation, PerturbedBoseEinsteinRelaxes) {
  std::vector<double> be;
  const auto start = perturbed_be(0.1, 81, &be);
  ShellQuadrature q;
  q.polar = 12;
  q.solid_polar = 8;
  q.solid_azimuth = 12;
  const auto r = relax(start, 0.1, be, ScatteringKernel::born(1, 1), 10, 0.0, 0.2, q);
  ASSERT_EQ(r.steps.size(), 11u);
  EXPECT_TRUE(r.distance_monotone());
  EXPECT_TRUE(r.entropy_monotone());
  EXPECT_LT(r.steps.back().distance, 0.95 * r.steps.front().distance);
  EXPECT_NEAR(r.steps.back().number, r.steps.front().number, 1e-4 * r.steps.front().number);
  EXPECT_NEAR(r.steps.back().energy, r.steps.front().energy, 1e-4 * r.steps.front().energy);
}

TEST(HFromSt, BoseEinsteinGivesZero) {
  const auto s = bose_einstein_state(1.0, 0.5);
  for (const auto& c : h_from_st(s, ScatteringKernel::born(1, 1), {0.3, 1.0, 2.0})) {
    EXPECT_NEAR(c.h, 0.0, 1e-15);
    EXPECT_NEAR(c.printed_ratio, 1 + 2 * s(c.p), 1e-14);
  }
}

TEST(HFromSt, SignFollowsStAndZeroDensitySkipped) {
  const auto s = shell_state();
  const auto w = ScatteringKernel::born(1, 1);
  const auto hs = h_from_st(s, w, {0.5, 1.5, 7.0 - 1.5});
  ASSERT_EQ(hs.size(), 3u);
  for (const auto& c : hs) {
    const double st = scattering_integral(s, w, c.p);
    EXPECT_EQ(std::signbit(c.h), std::signbit(st));
    EXPECT_NEAR(c.h_printed, (1 + 2 * s(c.p)) * c.h, 1e-15);
  }
  const KineticState gap(OccupationFunction::gaussian(0.0, 1.0), 3.0);
  EXPECT_TRUE(h_from_st(gap, w, {0.5, 1.0}).empty());
}

TEST(HFromSt, AgreesWithSunsetCounterterm) {
  // near equilibrium the sunset's Monte Carlo noise swamps h, so use the shell
  const auto occ = OccupationFunction::shell(0.5, 1.5, 0.4);
  const KineticState s(occ, 8.0);
  const auto w = ScatteringKernel::born(1, 1);
  for (double p : {0.5, 1.0, 1.5}) {
    const double hk = h_from_st(s, w, {p}).front().h;
    SunsetSpec spec;
    spec.samples = 100000;
    spec.eps = 0.03;
    const SunsetSelfEnergy sigma(occ, p, spec);
    const double hc = counterterm_h(sigma.model(), occ.radial(p), p).h;
    EXPECT_NEAR(hc, hk, 0.2 * std::abs(hk)) << p;
  }
}
