#pragma once
// Classical two-body scattering with a compactly supported pair potential,
// the factorized pair density built from asymptotic in-momenta, and the two
// forms of the boundary term: surface integral over S_R and impact parameter.
// Unit masses throughout.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "json.hpp"
#include "keldren/numerics.hpp"

namespace keldren {

/// V(r) = V0 exp(1 - 1/(1 - (r/a)^2)) for r < a, zero outside; V(0) = V0.
class PairPotential {
 public:
  static PairPotential bump(double strength, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("pair potential: radius must be > 0");
    PairPotential v;
    v.v0_ = strength;
    v.a_ = radius;
    return v;
  }
  static PairPotential none() { return PairPotential{}; }

  bool vanishes() const { return v0_ == 0.0; }
  double strength() const { return v0_; }
  double radius() const { return a_; }

  double operator()(double r) const {
    if (vanishes() || r >= a_) return 0.0;
    const double x = r / a_;
    return v0_ * std::exp(1.0 - 1.0 / (1.0 - x * x));
  }

  /// dV/dr
  double derivative(double r) const {
    if (vanishes() || r >= a_) return 0.0;
    const double x = r / a_, d = 1.0 - x * x;
    return -(*this)(r) * 2.0 * x / (d * d * a_);
  }

  nlohmann::json to_json() const { return {{"kind", vanishes() ? "none" : "bump"}, {"strength", v0_}, {"radius", a_}}; }

  static PairPotential from_json(const nlohmann::json& j) {
    const auto kind = j.value("kind", std::string("bump"));
    if (kind == "none") return none();
    if (kind == "bump") return bump(j.value("strength", 0.5), j.value("radius", 1.0));
    throw std::invalid_argument("unknown potential kind '" + kind + "'");
  }

 private:
  double v0_ = 0.0, a_ = 1.0;
};

struct TwoBodyState {
  Vec3 p1{}, q1{}, p2{}, q2{};
};

inline double energy(const TwoBodyState& s, const PairPotential& v) {
  return 0.5 * (norm2(s.p1) + norm2(s.p2)) + v(norm(s.q1 - s.q2));
}

struct OdeSettings {
  double abs_tol = 1e-11;
  double rel_tol = 1e-11;
  double max_time = 1e4;  // trapped-orbit cap
};

class TrappedOrbit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using PhaseVec = std::array<double, 12>;

inline PhaseVec pack(const TwoBodyState& s) {
  return {s.q1[0], s.q1[1], s.q1[2], s.q2[0], s.q2[1], s.q2[2], s.p1[0], s.p1[1], s.p1[2], s.p2[0], s.p2[1], s.p2[2]};
}

inline TwoBodyState unpack(const PhaseVec& x) {
  return {{x[6], x[7], x[8]}, {x[0], x[1], x[2]}, {x[9], x[10], x[11]}, {x[3], x[4], x[5]}};
}

struct Hamilton {
  const PairPotential* v;
  void operator()(const PhaseVec& x, PhaseVec& dx, double) const {
    const Vec3 r{x[0] - x[3], x[1] - x[4], x[2] - x[5]};
    const double rn = norm(r);
    Vec3 f{};
    if (rn > 0.0) f = (-v->derivative(rn) / rn) * r;  // force on particle 1
    for (int i = 0; i < 3; ++i) {
      dx[i] = x[6 + i];
      dx[3 + i] = x[9 + i];
      dx[6 + i] = f[i];
      dx[9 + i] = -f[i];
    }
  }
};

inline TwoBodyState reversed(TwoBodyState s) {
  s.p1 = -s.p1;
  s.p2 = -s.p2;
  return s;
}

inline void drift(TwoBodyState& s, double t) {
  s.q1 += t * s.p1;
  s.q2 += t * s.p2;
}

}  // namespace detail

/// Hamilton flow over time t (negative runs backward).
inline TwoBodyState evolve(const TwoBodyState& s, const PairPotential& v, double t, const OdeSettings& ode = {}) {
  if (t == 0.0) return s;
  namespace odeint = boost::numeric::odeint;
  const bool back = t < 0;
  auto x = detail::pack(back ? detail::reversed(s) : s);
  auto stepper = odeint::make_controlled(ode.abs_tol, ode.rel_tol, odeint::runge_kutta_dopri5<detail::PhaseVec>());
  odeint::integrate_adaptive(stepper, detail::Hamilton{&v}, x, 0.0, std::abs(t), std::abs(t) / 100);
  const auto out = detail::unpack(x);
  return back ? detail::reversed(out) : out;
}

struct BackwardResult {
  Vec3 p1{}, p2{};
  bool interacted = false;
  double energy_drift = 0.0;
  double elapsed = 0.0;  // backward time spent inside the support
};

/// Momenta at t = -infinity. Outside the support the motion is free, so the
/// backward straight line is followed analytically to the support boundary
/// and the ODE only runs inside it.
inline BackwardResult backward_map(const TwoBodyState& s, const PairPotential& v, const OdeSettings& ode = {}) {
  BackwardResult out{s.p1, s.p2, false, 0.0, 0.0};
  if (v.vanishes()) return out;
  const double a = v.radius();
  auto rs = detail::reversed(s);
  Vec3 r = rs.q1 - rs.q2, u = rs.p1 - rs.p2;
  if (norm(r) >= a) {
    const double uu = norm2(u), ru = dot(r, u);
    if (uu == 0.0 || ru >= 0.0) return out;  // separating in reversed time
    const double tc = -ru / uu;
    if (norm(r + tc * u) >= a) return out;  // line misses the support
    const double disc = ru * ru - uu * (norm2(r) - a * a);
    const double te = (-ru - std::sqrt(std::max(0.0, disc))) / uu;
    detail::drift(rs, te);
  }
  out.interacted = true;
  const double e0 = energy(rs, v);
  namespace odeint = boost::numeric::odeint;
  auto x = detail::pack(rs);
  auto stepper = odeint::make_controlled(ode.abs_tol, ode.rel_tol, odeint::runge_kutta_dopri5<detail::PhaseVec>());
  const double speed = std::max(norm(u), 1e-3);
  const double chunk = 0.25 * a / speed;
  double t = 0.0;
  for (;;) {
    odeint::integrate_adaptive(stepper, detail::Hamilton{&v}, x, t, t + chunk, chunk / 20);
    t += chunk;
    const auto cur = detail::unpack(x);
    r = cur.q1 - cur.q2;
    u = cur.p1 - cur.p2;
    if (norm(r) >= a && dot(r, u) > 0.0) {
      out.p1 = -cur.p1;
      out.p2 = -cur.p2;
      out.energy_drift = std::abs(energy(cur, v) - e0);
      out.elapsed = t;
      return out;
    }
    if (t > ode.max_time) throw TrappedOrbit("two-body orbit did not leave the potential support");
  }
}

/// Isotropic momentum distribution h(|p|).
struct ClassicalDistribution {
  std::string name;
  std::function<double(double)> h;

  double operator()(double p) const { return h(p); }
  double operator()(const Vec3& p) const { return h(norm(p)); }

  static ClassicalDistribution maxwellian(double temperature) {
    return {"maxwellian", [temperature](double p) { return std::exp(-p * p / (2 * temperature)); }};
  }
  static ClassicalDistribution two_temperature(double t1, double t2, double fraction) {
    return {"two_temperature", [=](double p) {
              auto m = [p](double T) { return std::exp(-p * p / (2 * T)) / std::pow(2 * pi * T, 1.5); };
              return fraction * m(t1) + (1 - fraction) * m(t2);
            }};
  }
  static ClassicalDistribution shell(double k0, double width) {
    return {"shell", [=](double p) { return std::exp(-(p - k0) * (p - k0) / (2 * width * width)); }};
  }
  static ClassicalDistribution quartic() {
    return {"quartic", [](double p) { return std::exp(-p * p * p * p); }};
  }
  static ClassicalDistribution zero() {
    return {"zero", [](double) { return 0.0; }};
  }

  static ClassicalDistribution from_json(const nlohmann::json& j) {
    const auto kind = j.value("kind", std::string("maxwellian"));
    if (kind == "maxwellian") return maxwellian(j.value("temperature", 1.0));
    if (kind == "two_temperature")
      return two_temperature(j.value("t1", 0.5), j.value("t2", 2.0), j.value("fraction", 0.5));
    if (kind == "shell") return shell(j.value("k0", 1.5), j.value("width", 0.3));
    if (kind == "quartic") return quartic();
    if (kind == "zero") return zero();
    throw std::invalid_argument("unknown distribution kind '" + kind + "'");
  }
};

/// rho_2 = h(p1') h(p2') with p' the in-momenta of the pair.
inline double rho2_factorized(const TwoBodyState& s, const ClassicalDistribution& h, const PairPotential& v,
                              const OdeSettings& ode = {}) {
  const auto b = backward_map(s, v, ode);
  return h(b.p1) * h(b.p2);
}

struct BoundaryQuadrature {
  double p_max = 6.0;
  std::size_t p_panels = 24;
  std::size_t p_points = 8;
  std::size_t cap_points = 48;    // nodes on the cap / on [0, a] in b
  std::size_t outer_points = 16;  // nodes on the rest of the sphere
  OdeSettings ode{};
};

namespace detail {

inline QuadratureRule momentum_rule(const BoundaryQuadrature& q, const PairPotential& v) {
  std::vector<double> br;
  for (std::size_t i = 0; i <= q.p_panels; ++i) br.push_back(q.p_max * static_cast<double>(i) / q.p_panels);
  // head-on reflection threshold p^2/4 = V0 for particle 1 at rest
  if (v.strength() > 0.0 && 2 * std::sqrt(v.strength()) < q.p_max) br.push_back(2 * std::sqrt(v.strength()));
  std::sort(br.begin(), br.end());
  return composite_gauss_legendre(br, q.p_points);
}

template <class Inner>
double momentum_integral(const BoundaryQuadrature& q, const PairPotential& v, Inner inner) {
  const auto rule = momentum_rule(q, v);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double p = rule.nodes[i];
    total += rule.weights[i] * 4 * pi * p * p * p * inner(p);  // d3p2 times |p2|/m
  }
  return total;
}

}  // namespace detail

/// Surface form: particle 1 at rest at the origin, particle 2 on S_R with
/// momentum along z; cos(psi) = mu = cos(theta), dS = 2 pi R^2 dmu. The mu
/// range is split where the line through q2 along p2 touches the support.
inline double boundary_integral_gauss(const ClassicalDistribution& h, const PairPotential& v, double R,
                                      const BoundaryQuadrature& q = {}) {
  const double a = v.radius();
  if (!(R > 0.0) || a / R > 0.5) throw std::invalid_argument("boundary integral: R too small, cap not localized");
  const double muc = std::sqrt(1.0 - (a / R) * (a / R));
  const auto outer = gauss_legendre(q.outer_points, -1.0, muc), cap = gauss_legendre(q.cap_points, muc, 1.0);
  return detail::momentum_integral(q, v, [&](double p) {
    double acc = 0.0;
    for (const auto* rule : {&outer, &cap})
      for (std::size_t k = 0; k < rule->nodes.size(); ++k) {
        const double mu = rule->nodes[k], sn = std::sqrt(std::max(0.0, 1 - mu * mu));
        const TwoBodyState s{{0, 0, 0}, {0, 0, 0}, {0, 0, p}, {R * sn, 0, R * mu}};
        acc += rule->weights[k] * 2 * pi * R * R * mu * rho2_factorized(s, h, v, q.ode);
      }
    return acc;
  });
}

/// Impact-parameter form: q2 = q0 + b x, q0 = R z, b in [0, a].
inline double scattering_integral_classical(const ClassicalDistribution& h, const PairPotential& v, double R = 10.0,
                                            const BoundaryQuadrature& q = {}) {
  if (v.vanishes()) return 0.0;
  const double a = v.radius();
  const auto rule = gauss_legendre(q.cap_points, 0.0, a);
  const double h0 = h(0.0);
  return detail::momentum_integral(q, v, [&](double p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double b = rule.nodes[k];
      const TwoBodyState s{{0, 0, 0}, {0, 0, 0}, {0, 0, p}, {b, 0, R}};
      acc += rule.weights[k] * 2 * pi * b * (rho2_factorized(s, h, v, q.ode) - h(p) * h0);
    }
    return acc;
  });
}

struct BoundaryComparison {
  std::string distribution;
  double gauss = 0.0;
  double impact = 0.0;
  double relative = 0.0;  // |gauss - impact| / |impact|
};

inline BoundaryComparison compare_boundary_forms(const ClassicalDistribution& h, const PairPotential& v, double R,
                                                 const BoundaryQuadrature& q = {}) {
  BoundaryComparison c;
  c.distribution = h.name;
  c.gauss = boundary_integral_gauss(h, v, R, q);
  c.impact = scattering_integral_classical(h, v, R, q);
  c.relative = c.impact != 0.0 ? std::abs(c.gauss - c.impact) / std::abs(c.impact) : std::abs(c.gauss);
  return c;
}

}  // namespace keldren
