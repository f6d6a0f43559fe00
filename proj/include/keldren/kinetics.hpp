#pragma once
// Quantum Boltzmann collision integral for an isotropic occupation, its
// Bose-Einstein fixed point, explicit relaxation, and the h(p) <- St(p) link.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "keldren/chains.hpp"
#include "keldren/numerics.hpp"
#include "keldren/occupancy.hpp"

namespace keldren {

/// w(p, p1 | p2, p3) on the conservation shell. The born kernel is the
/// sunset vertex squared, symmetrized over p2 <-> p3, with the (2 pi)
/// factors of the self-energy folded in so St matches S^{-+}(1+n) - S^{+-} n.
class ScatteringKernel {
 public:
  static ScatteringKernel constant(double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("scattering kernel: lambda must be >= 0");
    ScatteringKernel k;
    k.kind_ = "constant";
    k.coupling_ = lambda;
    return k;
  }

  static ScatteringKernel born(double coupling, double range) {
    if (!(range > 0.0)) throw std::invalid_argument("scattering kernel: range must be > 0");
    ScatteringKernel k;
    k.kind_ = "born";
    k.coupling_ = coupling;
    k.range_ = range;
    return k;
  }

  double operator()(const Vec3& p, const Vec3& /*p1*/, const Vec3& p2, const Vec3& p3) const {
    if (kind_ == "constant") return coupling_;
    auto v2 = [&](const Vec3& q) { return coupling_ * coupling_ * std::exp(-norm2(q) / (range_ * range_)); };
    return 0.5 * (v2(p2 - p) + v2(p3 - p)) / std::pow(2 * pi, 5);
  }

  const std::string& kind() const { return kind_; }
  double coupling() const { return coupling_; }
  double range() const { return range_; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind_}, {"coupling", coupling_}};
    if (kind_ == "born") j["range"] = range_;
    return j;
  }

  static ScatteringKernel from_json(const nlohmann::json& j) {
    const auto kind = j.value("kind", std::string("born"));
    if (kind == "constant") return constant(j.value("coupling", 1.0));
    if (kind == "born") return born(j.value("coupling", 1.0), j.value("range", 1.0));
    throw std::invalid_argument("unknown scattering kernel '" + kind + "'");
  }

 private:
  std::string kind_ = "constant";
  double coupling_ = 1.0, range_ = 1.0;
};

/// Isotropic occupation with a finite momentum cutoff; rho = 0 beyond it.
class KineticState {
 public:
  KineticState(OccupationFunction rho, double kmax) : rho_(std::move(rho)), kmax_(kmax) {
    if (!(kmax > 0.0)) throw std::invalid_argument("kinetic state: kmax must be > 0");
    if (kmax > rho_.k_max() + 1e-12) throw std::invalid_argument("kinetic state: kmax beyond occupation table");
  }

  /// Cubic spline through values on k_i = i * dk, i = 0..N-1.
  static KineticState on_grid(double dk, std::vector<double> values) {
    const double kmax = dk * static_cast<double>(values.size() - 1);
    return KineticState(OccupationFunction::tabulated(0.0, dk, std::move(values)), kmax);
  }

  double operator()(double k) const { return k > kmax_ ? 0.0 : rho_.radial(k); }
  double operator()(const Vec3& k) const { return (*this)(norm(k)); }
  double kmax() const { return kmax_; }
  const OccupationFunction& occupation() const { return rho_; }

 private:
  OccupationFunction rho_;
  double kmax_;
};

struct ShellQuadrature {
  std::size_t radial = 8;     // Gauss points per unit-length panel in |p1|
  std::size_t polar = 16;     // Gauss points in cos(theta_1)
  std::size_t solid_polar = 12;
  std::size_t solid_azimuth = 16;
};

struct CollisionTerms {
  double st = 0.0;    // gain - loss
  double gain = 0.0;  // (1+rho)(1+rho1) rho2 rho3
  double loss = 0.0;  // rho rho1 (1+rho2)(1+rho3)
};

/// St(p) = int d3p1 d3p2 d3p3 w delta3(p+p1-p2-p3) delta(w+w1-w2-w3) {gain - loss}.
/// With omega = k^2/2 the deltas leave p2,3 = P/2 +- q Omega, q = |p - p1|/2,
/// and measure d3p1 (q/2) dOmega. p sits on the z axis, p1 in the xz plane.
inline CollisionTerms collision_terms(const KineticState& rho, const ScatteringKernel& w, double p,
                                      const ShellQuadrature& quad = {}) {
  if (p < 0.0 || p > rho.kmax()) throw std::out_of_range("scattering integral: |p| outside the state grid");
  std::vector<double> breaks;
  const int panels = std::max(1, static_cast<int>(std::ceil(rho.kmax())));
  for (int i = 0; i <= panels; ++i) breaks.push_back(rho.kmax() * i / panels);
  const auto rk = composite_gauss_legendre(breaks, quad.radial);
  const auto rc = gauss_legendre(quad.polar, -1.0, 1.0);
  const auto oc = gauss_legendre(quad.solid_polar, -1.0, 1.0);
  const double dphi = 2 * pi / static_cast<double>(quad.solid_azimuth);
  std::vector<double> cphi(quad.solid_azimuth), sphi(quad.solid_azimuth);
  for (std::size_t a = 0; a < quad.solid_azimuth; ++a) {
    cphi[a] = std::cos(dphi * static_cast<double>(a));
    sphi[a] = std::sin(dphi * static_cast<double>(a));
  }
  const Vec3 pv{0.0, 0.0, p};
  const double n0 = rho(p);
  CollisionTerms out;
  for (std::size_t i = 0; i < rk.nodes.size(); ++i) {
    const double k1 = rk.nodes[i];
    for (std::size_t j = 0; j < rc.nodes.size(); ++j) {
      const double c1 = rc.nodes[j], s1 = std::sqrt(std::max(0.0, 1 - c1 * c1));
      const Vec3 p1{k1 * s1, 0.0, k1 * c1};
      const Vec3 half = 0.5 * (pv + p1);
      const double q = 0.5 * norm(pv - p1);
      const double n1 = rho(k1);
      const double outer = 2 * pi * k1 * k1 * rk.weights[i] * rc.weights[j] * 0.5 * q * dphi;
      double g = 0.0, l = 0.0;
      for (std::size_t m = 0; m < oc.nodes.size(); ++m) {
        const double co = oc.nodes[m], so = std::sqrt(std::max(0.0, 1 - co * co));
        for (std::size_t a = 0; a < quad.solid_azimuth; ++a) {
          const Vec3 om{so * cphi[a], so * sphi[a], co};
          const Vec3 p2 = half + q * om, p3 = half - q * om;
          const double n2 = rho(p2), n3 = rho(p3);
          const double ww = w(pv, p1, p2, p3) * oc.weights[m];
          g += ww * (1 + n0) * (1 + n1) * n2 * n3;
          l += ww * n0 * n1 * (1 + n2) * (1 + n3);
        }
      }
      out.gain += outer * g;
      out.loss += outer * l;
    }
  }
  out.st = out.gain - out.loss;
  return out;
}

inline double scattering_integral(const KineticState& rho, const ScatteringKernel& w, double p,
                                  const ShellQuadrature& quad = {}) {
  return collision_terms(rho, w, p, quad).st;
}

/// Bose-Einstein 1/(e^{alpha k^2/2 + beta} - 1), cut where it falls below `floor`.
inline KineticState bose_einstein_state(double alpha, double beta, double floor = 1e-15) {
  const double kmax = std::sqrt(2.0 * (std::log1p(1.0 / floor) - beta) / alpha);
  return KineticState(OccupationFunction::bose_einstein(alpha, beta), kmax);
}

struct FixedPointRow {
  double alpha = 0.0, beta = 0.0, p = 0.0;
  double st = 0.0, gain = 0.0;
  double relative = 0.0;  // |St| / gain
};

inline std::vector<FixedPointRow> fixed_point_table(const std::vector<double>& alphas, const std::vector<double>& betas,
                                                    const std::vector<double>& momenta, const ScatteringKernel& w,
                                                    const ShellQuadrature& quad = {}) {
  std::vector<FixedPointRow> rows;
  for (double a : alphas)
    for (double b : betas) {
      const auto state = bose_einstein_state(a, b);
      for (double p : momenta) {
        const auto t = collision_terms(state, w, p, quad);
        rows.push_back({a, b, p, t.st, t.gain, t.gain > 0 ? std::abs(t.st) / t.gain : std::abs(t.st)});
      }
    }
  return rows;
}

/// Radial moments 4 pi int k^2 f(k) {1, omega} dk by Simpson on the grid.
struct Moments {
  double number = 0.0, energy = 0.0;
};

inline Moments grid_moments(double dk, const std::vector<double>& f) {
  if (f.size() < 3 || f.size() % 2 == 0) throw std::invalid_argument("grid_moments: need an odd number >= 3 of points");
  Moments m;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double k = dk * static_cast<double>(i);
    const double s = (i == 0 || i + 1 == f.size()) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double base = s * dk / 3.0 * 4 * pi * k * k * f[i];
    m.number += base;
    m.energy += base * dispersion(k);
  }
  return m;
}

/// Bosonic entropy density 4 pi int k^2 [(1+n) ln(1+n) - n ln n] dk.
inline double grid_entropy(double dk, const std::vector<double>& n) {
  std::vector<double> s(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) s[i] = (1 + n[i]) * std::log1p(n[i]) - (n[i] > 0 ? n[i] * std::log(n[i]) : 0.0);
  return grid_moments(dk, s).number;
}

inline double grid_l2_distance(double dk, const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(grid_moments(dk, d).number);
}

struct RelaxationStep {
  int step = 0;
  double time = 0.0;
  double distance = 0.0;  // L2 distance to the reference state
  double entropy = 0.0;
  double number = 0.0, energy = 0.0;
};

struct Relaxation {
  double dt = 0.0;
  std::vector<RelaxationStep> steps;
  std::vector<double> final_values;

  bool distance_monotone() const {
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (!(steps[i].distance < steps[i - 1].distance)) return false;
    return true;
  }
  bool entropy_monotone() const {
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (steps[i].entropy < steps[i - 1].entropy) return false;
    return true;
  }
};

/// Explicit Euler n_i += dt St(k_i) on the grid k_i = i dk. dt <= 0 picks
/// cfl / max loss rate from the initial state.
inline Relaxation relax(std::vector<double> values, double dk, const std::vector<double>& reference,
                        const ScatteringKernel& w, int steps, double dt = 0.0, double cfl = 0.2,
                        const ShellQuadrature& quad = {}) {
  if (reference.size() != values.size()) throw std::invalid_argument("relax: reference size mismatch");
  Relaxation r;
  auto record = [&](int s, double t) {
    const auto m = grid_moments(dk, values);
    r.steps.push_back({s, t, grid_l2_distance(dk, values, reference), grid_entropy(dk, values), m.number, m.energy});
  };
  record(0, 0.0);
  for (int s = 1; s <= steps; ++s) {
    const auto state = KineticState::on_grid(dk, values);
    std::vector<double> st(values.size());
    double rate = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto t = collision_terms(state, w, dk * static_cast<double>(i), quad);
      st[i] = t.st;
      if (values[i] > 1e-12) rate = std::max(rate, t.loss / values[i]);
    }
    if (s == 1 && !(dt > 0.0)) {
      if (!(rate > 0.0)) throw std::domain_error("relax: no scattering, cannot choose a step");
      dt = cfl / rate;
    }
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::max(0.0, values[i] + dt * st[i]);
    record(s, dt * s);
  }
  r.dt = dt;
  r.final_values = std::move(values);
  return r;
}

/// h(p) from the collision integral at the points where rho > 0. `h` and
/// `h_lemma4` carry St / (2n(1+n)); `h_printed` the (1+2n)-weighted form.
inline std::vector<StateCounterterm> h_from_st(const KineticState& rho, const ScatteringKernel& w,
                                               const std::vector<double>& momenta, const ShellQuadrature& quad = {}) {
  std::vector<StateCounterterm> out;
  for (double p : momenta) {
    const double n = rho(p);
    if (!(n > 0.0)) continue;
    const double st = scattering_integral(rho, w, p, quad);
    StateCounterterm c;
    c.p = p;
    c.h_lemma4 = st / (2 * n * (1 + n));
    c.h = c.h_lemma4;
    c.h_printed = (1 + 2 * n) * c.h_lemma4;
    c.printed_ratio = 1 + 2 * n;
    out.push_back(c);
  }
  return out;
}

}  // namespace keldren
