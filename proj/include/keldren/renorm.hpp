#pragma once
// Forest subtraction for Friedrichs amplitudes in s-variables (s_i = 1/tau_i
// on the internal tree lines).
//
// Test functions are products of one-dimensional factors phi_i(s_i). The
// subtraction operator T is Taylor projection at s = 0 through order N in
// each variable, against the basis s^m * eta_0(s) with eta_0 = prod xi(s_i):
//
//   <T(D), Psi> = <D, P Psi>,   P Psi = prod_i sum_{m <= N} phi_i^{(m)}(0)/m! s_i^m xi(s_i)
//
// Because P acts factor by factor, every pairing in the recursion reduces to
//   u(S) = <U, prod_{i in S} (P phi_i) prod_{i not in S} phi_i>
// and each of those is one loop-momentum integral of
//   F(p) prod_i K_{chi_i}(Omega_i(p) + i eps),   K_phi(z) = int_0^inf e^{i z tau} phi(1/tau) dtau.

#include <bit>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "keldren/friedrichs.hpp"
#include "keldren/numerics.hpp"

namespace keldren {

class RenormError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Decomposition of unity

/// xi(s) = 1 for s <= 1/(6n), 0 for s >= 1/(3n), smooth in between.
class UnityDecomposition {
 public:
  explicit UnityDecomposition(int n_lines = 1) : n_(std::max(1, n_lines)) {
    const auto rule = gauss_legendre(64, -0.1, 0.1);
    double z = 0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) z += rule.weights[i] * bump(rule.nodes[i]);
    norm_ = 1.0 / z;
  }

  int lines() const { return n_; }
  double lower() const { return 1.0 / (6.0 * n_); }
  double upper() const { return 1.0 / (3.0 * n_); }

  double xi(double s) const {
    if (s <= lower()) return 1.0;
    if (s >= upper()) return 0.0;
    const double t = (s - lower()) / (upper() - lower());
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return b / (a + b);
  }

  /// eta_A(s) = prod_{i not in A} xi(s_i) prod_{i in A} (1 - xi(s_i)); A as a bitmask.
  double eta(unsigned mask, const std::vector<double>& s) const {
    double e = 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) e *= (mask >> i & 1u) ? 1.0 - xi(s[i]) : xi(s[i]);
    return e;
  }

  /// Mollifier with unit integral supported in [-1/10, 1/10].
  double mollifier(double x) const { return norm_ * bump(x); }

  /// delta_lambda(x - lambda) = (x / lambda^2) psi((x - lambda) / lambda)
  double delta_lambda(double x, double lambda) const {
    return x / (lambda * lambda) * mollifier((x - lambda) / lambda);
  }

 private:
  static double bump(double x) {
    const double y = 10.0 * x;
    return std::abs(y) < 1.0 ? std::exp(-1.0 / (1.0 - y * y)) : 0.0;
  }
  int n_;
  double norm_ = 1.0;
};

// ---------------------------------------------------------------------------
// One-dimensional test factors

struct TestFactor {
  enum class Kind {
    exp_monomial,       // s^k e^{-a s}
    exp_monomial_away,  // (1 - xi(s)) s^k e^{-a s}: vanishes near s = 0
    taylor,             // sum_m coeffs[m] s^m xi(s)
  };
  Kind kind = Kind::exp_monomial;
  int k = 0;
  double a = 1.0;
  std::vector<double> coeffs;

  static TestFactor exp_monomial(int k, double a) {
    if (k < 0 || !(a > 0)) throw std::invalid_argument("test factor s^k e^{-a s} needs k >= 0, a > 0");
    return {Kind::exp_monomial, k, a, {}};
  }
  static TestFactor away(int k, double a) {
    auto f = exp_monomial(k, a);
    f.kind = Kind::exp_monomial_away;
    return f;
  }
  static TestFactor monomial(int m) {
    std::vector<double> c(static_cast<std::size_t>(m + 1), 0.0);
    c[m] = 1.0;
    return {Kind::taylor, 0, 0.0, c};
  }

  double value(double s, const UnityDecomposition& u) const {
    switch (kind) {
      case Kind::exp_monomial: return std::pow(s, k) * std::exp(-a * s);
      case Kind::exp_monomial_away: return (1.0 - u.xi(s)) * std::pow(s, k) * std::exp(-a * s);
      case Kind::taylor: {
        double v = 0, sp = 1;
        for (double c : coeffs) {
          v += c * sp;
          sp *= s;
        }
        return v * u.xi(s);
      }
    }
    return 0.0;
  }

  /// Taylor coefficients phi^{(m)}(0)/m! for m = 0..order.
  std::vector<double> taylor_coefficients(int order) const {
    std::vector<double> c(static_cast<std::size_t>(order + 1), 0.0);
    if (kind == Kind::exp_monomial) {
      double t = 1.0;  // (-a)^j / j!
      for (int j = 0; k + j <= order; ++j) {
        c[k + j] = t;
        t *= -a / (j + 1);
      }
    } else if (kind == Kind::taylor) {
      for (std::size_t m = 0; m < coeffs.size() && m <= static_cast<std::size_t>(order); ++m) c[m] = coeffs[m];
    }
    return c;
  }

  /// P phi: Taylor projection through `order`.
  TestFactor project(int order) const { return {Kind::taylor, 0, 0.0, taylor_coefficients(order)}; }

  bool vanishes_to_order(int order) const {
    for (double c : taylor_coefficients(order))
      if (c != 0.0) return false;
    return true;
  }
};

namespace detail {
// int_{lo}^{hi} e^{i z tau} g(tau) dtau by composite Gauss-Legendre; the
// panel width resolves both the oscillation and the 1/tau structure near 0.
template <class G>
cplx oscillatory_segment(cplx z, double lo, double hi, G&& g) {
  if (!(hi > lo)) return 0.0;
  const double wavelength = 2 * pi / std::max(std::abs(z.real()), 1e-300);
  const double panel = std::min(0.25, wavelength / 2);
  const std::size_t panels = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi - lo) / panel)));
  const auto& ref = gauss_legendre(16);
  const double h = (hi - lo) / static_cast<double>(panels);
  std::vector<double> br;
  for (std::size_t p = 0; p <= panels; ++p) br.push_back(lo + h * static_cast<double>(p));
  if (lo == 0.0) {
    // e^{-a/tau} is flat but not analytic at 0: grade the first panel
    for (int j = 1; j <= 12; ++j) br.push_back(h * std::ldexp(1.0, -j));
    std::sort(br.begin(), br.end());
  }
  cplx s = 0;
  for (std::size_t p = 0; p + 1 < br.size(); ++p) {
    const double w = br[p + 1] - br[p], mid = br[p] + w / 2;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
      const double t = mid + w / 2 * ref.nodes[i];
      s += ref.weights[i] * w / 2 * std::exp(I * z * t) * g(t);
    }
  }
  return s;
}

// int_{c}^{inf} e^{i z tau} tau^{-m} dtau = c^{1-m} E_m(-i z c), Im z > 0
inline cplx power_tail(cplx z, double c, int m) { return std::pow(c, 1 - m) * expint_e(m, -I * z * c); }
}  // namespace detail

/// K_phi(z) = int_0^inf e^{i z tau} phi(1/tau) dtau for Im z > 0.
inline cplx k_transform(const TestFactor& f, cplx z, const UnityDecomposition& u) {
  if (!(z.imag() > 0)) throw std::invalid_argument("k_transform needs Im z > 0");
  const double t_cut = 1.0 / u.lower();  // xi(1/tau) = 1 beyond this
  const double t_on = 1.0 / u.upper();   // xi(1/tau) = 0 below this
  switch (f.kind) {
    case TestFactor::Kind::exp_monomial: {
      const double t1 = std::max({24.0, t_cut, 12.0 * f.a});
      cplx s = detail::oscillatory_segment(z, 0.0, t1, [&](double t) {
        return std::pow(t, -f.k) * std::exp(-f.a / t);
      });
      // tail from the convergent expansion in 1/tau
      double c = 1.0;
      for (int j = 0; j < 60; ++j) {
        const cplx term = c * detail::power_tail(z, t1, f.k + j);
        s += term;
        if (std::abs(term) < 1e-17 * std::abs(s)) break;
        c *= -f.a / (j + 1);
      }
      return s;
    }
    case TestFactor::Kind::exp_monomial_away:
      return detail::oscillatory_segment(z, 0.0, t_cut, [&](double t) {
        return (1.0 - u.xi(1.0 / t)) * std::pow(t, -f.k) * std::exp(-f.a / t);
      });
    case TestFactor::Kind::taylor: {
      cplx s = detail::oscillatory_segment(z, t_on, t_cut, [&](double t) {
        double v = 0, tp = 1;
        for (double c : f.coeffs) {
          v += c * tp;
          tp /= t;
        }
        return v * u.xi(1.0 / t);
      });
      for (std::size_t m = 0; m < f.coeffs.size(); ++m)
        if (f.coeffs[m] != 0.0) s += f.coeffs[m] * detail::power_tail(z, t_cut, static_cast<int>(m));
      return s;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// s-variable view of an amplitude

/// Ahat(s) = A(1/s) prod 1/s_i^2 for any amplitude given as a function of tau.
template <class Amp>
auto to_s_variables(Amp amp) {
  return [amp](const std::vector<double>& s) -> cplx {
    std::vector<double> tau(s.size());
    double jac = 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!(s[i] > 0)) throw std::domain_error("s-variables must be > 0");
      tau[i] = 1.0 / s[i];
      jac /= s[i] * s[i];
    }
    return amp(tau) * jac;
  };
}

/// Everything needed to evaluate pairings of one diagram.
struct PairingContext {
  FriedrichsDiagram diagram;
  OccupationFunction occupation;
  std::map<int, Vec3> external;
  std::map<int, double> root_tau;  // time on each root line (phase only)
  double eps = 0.01;
  QuadratureSpec quadrature;
  int cutoff_lines = 0;  // n in the support bound 1/(3n) of xi; 0: number of s-lines

  std::vector<int> s_lines() const { return diagram.graph.tree().internal_lines(); }
  UnityDecomposition unity() const {
    return UnityDecomposition(cutoff_lines > 0 ? cutoff_lines : static_cast<int>(s_lines().size()));
  }

  /// A(tau) on the internal tree lines (ordered as s_lines()).
  cplx amplitude(const std::vector<double>& tau_internal) const {
    std::map<int, double> tau = root_tau;
    const auto ids = s_lines();
    for (std::size_t i = 0; i < ids.size(); ++i) tau[ids[i]] = tau_internal.at(i);
    return evaluate_amplitude(diagram, occupation, external, tau, eps, quadrature).value;
  }

  std::function<cplx(const std::vector<double>&)> s_amplitude() const {
    return to_s_variables([self = *this](const std::vector<double>& t) { return self.amplitude(t); });
  }

  PairingContext star() const {
    PairingContext c = *this;
    c.diagram = diagram.star();
    return c;
  }
};

/// u(S) for every subset S of the s-lines (bit i set: factor i projected).
/// factors[i] is phi_i; its projection uses `order`.
inline std::vector<cplx> subset_pairings(const PairingContext& ctx, const std::vector<TestFactor>& factors, int order) {
  const auto ids = ctx.s_lines();
  if (factors.size() != ids.size())
    throw std::invalid_argument("need one test factor per internal tree line (" + std::to_string(ids.size()) + ")");
  if (ids.size() > 12) throw RenormError("too many s-variables");
  require_positive_eps(ctx.eps);
  const auto& d = ctx.diagram;
  const LineBook book(d);
  for (int r : ctx.diagram.graph.tree().root_lines())
    if (!ctx.root_tau.count(r)) throw std::invalid_argument("missing time for root line " + std::to_string(r));
  const auto unity = ctx.unity();
  std::vector<TestFactor> projected;
  for (const auto& f : factors) projected.push_back(f.project(order));
  const auto routing = route_momenta(d, ctx.external);
  const std::size_t nsub = std::size_t{1} << ids.size();
  const double damping = std::exp(-ctx.eps * d.absorbed_time);
  auto res = integrate_loops_multi(routing, ctx.quadrature, nsub, [&](const std::vector<Vec3>& p) {
    std::vector<cplx> out(nsub, 0.0);
    const double f = static_factor(d, ctx.occupation, p, 1.0);
    if (f == 0.0) return out;
    const auto w = book.frequencies(d, p);
    double phase = book.delay_phase(d, p);
    for (const auto& [r, t] : ctx.root_tau) phase += w.at(r) * t;
    const cplx pre = f * damping * std::exp(I * phase);
    std::vector<cplx> kp(ids.size()), kt(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const cplx z(w.at(ids[i]), ctx.eps);
      kp[i] = k_transform(factors[i], z, unity);
      kt[i] = k_transform(projected[i], z, unity);
    }
    for (std::size_t S = 0; S < nsub; ++S) {
      cplx v = pre;
      for (std::size_t i = 0; i < ids.size(); ++i) v *= (S >> i & 1u) ? kt[i] : kp[i];
      out[S] = v;
    }
    return out;
  });
  std::vector<cplx> u(nsub);
  for (std::size_t S = 0; S < nsub; ++S) u[S] = res[S].value;
  return u;
}

// ---------------------------------------------------------------------------
// Counterterm recursion
//
//   C_F = -T_{R\F} ( U + sum_{F < A < R} C_A ),   C_R = 0,
//   R   = U + sum_{A < R} C_A,
//
// with F the frozen (contracted) lines. Each quantity is stored as a linear
// combination sum_S kappa[S] u(S).

struct SubtractionScheme {
  int order = 2;
};

class ForestRecursion {
 public:
  explicit ForestRecursion(std::size_t n_lines) : n_(n_lines), full_((1u << n_lines) - 1u) {
    if (n_lines > 12) throw RenormError("recursion depth cap exceeded");
  }

  std::size_t lines() const { return n_; }

  /// kappa for <C_F, Psi_P>, where Psi_P already has the lines in P projected.
  const std::vector<double>& counterterm(unsigned F, unsigned P = 0) {
    const auto key = std::make_pair(F, P);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<double> k(std::size_t{1} << n_, 0.0);
    if (F != full_) {
      const unsigned proj = P | (full_ & ~F);
      k[proj] -= 1.0;
      for (unsigned A = 0; A <= full_; ++A) {
        if ((A & F) != F || A == F || A == full_) continue;
        const auto& sub = counterterm(A, proj);
        for (std::size_t S = 0; S < k.size(); ++S) k[S] -= sub[S];
      }
    }
    return memo_.emplace(key, std::move(k)).first->second;
  }

  /// Frozen sets entering C_F directly (the inner counterterms).
  std::vector<unsigned> inner_sets(unsigned F) const {
    std::vector<unsigned> out;
    for (unsigned A = 0; A <= full_; ++A)
      if ((A & F) == F && A != F && A != full_) out.push_back(A);
    return out;
  }

  std::vector<double> renormalized() {
    std::vector<double> k(std::size_t{1} << n_, 0.0);
    k[0] = 1.0;
    for (unsigned A = 0; A < full_; ++A) {
      const auto& c = counterterm(A, 0);
      for (std::size_t S = 0; S < k.size(); ++S) k[S] += c[S];
    }
    return k;
  }

  std::size_t memo_size() const { return memo_.size(); }

 private:
  std::size_t n_;
  unsigned full_;
  std::map<std::pair<unsigned, unsigned>, std::vector<double>> memo_;
};

inline cplx combine(const std::vector<double>& kappa, const std::vector<cplx>& u) {
  cplx s = 0;
  for (std::size_t S = 0; S < kappa.size(); ++S)
    if (kappa[S] != 0.0) s += kappa[S] * u[S];
  return s;
}

/// Local counterterm: sum_m c_m d^m delta(s_free) with coefficients that
/// still depend on the frozen factors.
struct Counterterm {
  std::vector<int> frozen;       // contracted tree lines
  std::vector<int> free_lines;   // lines carrying the delta and its derivatives
  int order = 0;
  std::map<std::vector<int>, cplx> coefficients;  // multi-index over free lines

  /// <C, Psi> for separable Psi from the Taylor coefficients of the free factors.
  cplx pair(const std::vector<std::vector<double>>& free_taylor) const {
    cplx s = 0;
    for (const auto& [m, c] : coefficients) {
      double t = 1.0;
      for (std::size_t i = 0; i < m.size(); ++i) t *= free_taylor.at(i).at(m[i]);
      s += c * t;
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json coeffs = nlohmann::json::array();
    for (const auto& [m, c] : coefficients) coeffs.push_back({{"alpha", m}, {"re", c.real()}, {"im", c.imag()}});
    return {{"frozen", frozen}, {"free", free_lines}, {"order", order}, {"coefficients", coeffs}};
  }
};

/// Detects tree lines whose crossing frequency vanishes identically (a
/// pinch); their 1/eps growth needs order >= 1.
inline std::vector<int> pinched_lines(const PairingContext& ctx) {
  const auto ids = ctx.s_lines();
  const LineBook book(ctx.diagram);
  const auto routing = route_momenta(ctx.diagram, ctx.external);
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<int> out;
  std::vector<bool> pinched(ids.size(), true);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<Vec3> q(routing.loops);
    for (auto& x : q) x = {nd(rng), nd(rng), nd(rng)};
    const auto w = book.frequencies(ctx.diagram, routing.momenta(q));
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (std::abs(w.at(ids[i])) > 1e-12) pinched[i] = false;
  }
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (pinched[i]) out.push_back(ids[i]);
  return out;
}

inline void require_order(const PairingContext& ctx, const SubtractionScheme& scheme) {
  if (scheme.order < 0) throw std::invalid_argument("subtraction order must be >= 0");
  if (scheme.order < 1 && !pinched_lines(ctx).empty())
    throw RenormError("subtraction order 0 leaves a divergence on a pinched line; raise the order to >= 1");
}

/// apply_T on a generic pairing functional: returns the counterterm -T(A)
/// with c_m = -<A, s^m eta_0>. `pair` maps one factor per variable to <A, prod factors>.
inline Counterterm apply_T(const SubtractionScheme& scheme, std::size_t n_vars,
                           const std::function<cplx(const std::vector<TestFactor>&)>& pair) {
  Counterterm c;
  c.order = scheme.order;
  for (std::size_t i = 0; i < n_vars; ++i) c.free_lines.push_back(static_cast<int>(i));
  detail::for_each_word(static_cast<int>(n_vars), scheme.order + 1, [&](const std::vector<int>& m) {
    std::vector<TestFactor> fs;
    for (int mi : m) fs.push_back(TestFactor::monomial(mi));
    const cplx v = pair(fs);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw RenormError("non-finite pairing: divergence order exceeds the subtraction order");
    c.coefficients[m] = -v;
  });
  return c;
}

/// Renormalization of one diagram at fixed external data.
class Renormalizer {
 public:
  Renormalizer(PairingContext ctx, SubtractionScheme scheme)
      : ctx_(std::move(ctx)), scheme_(scheme), rec_(ctx_.s_lines().size()) {
    require_order(ctx_, scheme_);
  }

  const PairingContext& context() const { return ctx_; }
  std::size_t lines() const { return rec_.lines(); }

  cplx bare(const std::vector<TestFactor>& psi) const { return subset_pairings(ctx_, psi, scheme_.order)[0]; }

  /// <C_{Gamma_F}, Psi> with F a bitmask over s_lines().
  cplx counterterm_value(unsigned F, const std::vector<TestFactor>& psi) {
    return combine(rec_.counterterm(F), subset_pairings(ctx_, psi, scheme_.order));
  }

  cplx renormalized(const std::vector<TestFactor>& psi) {
    return combine(rec_.renormalized(), subset_pairings(ctx_, psi, scheme_.order));
  }

  struct Pairings {
    cplx bare, renormalized;
    std::map<unsigned, cplx> counterterms;
  };
  /// All pairings from one integration pass.
  Pairings all(const std::vector<TestFactor>& psi) {
    const auto u = subset_pairings(ctx_, psi, scheme_.order);
    Pairings p{u[0], combine(rec_.renormalized(), u), {}};
    const unsigned full = (1u << rec_.lines()) - 1u;
    for (unsigned A = 0; A < full; ++A) p.counterterms[A] = combine(rec_.counterterm(A), u);
    return p;
  }

  /// Coefficient table of C_F: free lines get monomials s^m xi, frozen
  /// lines the given factors (indexed like s_lines()).
  Counterterm counterterm(unsigned F, const std::vector<TestFactor>& frozen_factors) {
    const auto ids = ctx_.s_lines();
    Counterterm c;
    c.order = scheme_.order;
    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (F >> i & 1u) c.frozen.push_back(ids[i]);
      else {
        c.free_lines.push_back(ids[i]);
        free_idx.push_back(i);
      }
    }
    const auto& kappa = rec_.counterterm(F);
    detail::for_each_word(static_cast<int>(free_idx.size()), scheme_.order + 1, [&](const std::vector<int>& m) {
      std::vector<TestFactor> fs = frozen_factors;
      for (std::size_t j = 0; j < free_idx.size(); ++j) fs[free_idx[j]] = TestFactor::monomial(m[j]);
      c.coefficients[m] = combine(kappa, subset_pairings(ctx_, fs, scheme_.order));
    });
    return c;
  }

  /// Lambda = sum over contracted sets A of internal tree lines (root lines
  /// never contracted) of C_{Gamma_A}; returned term by term.
  std::vector<std::pair<std::vector<int>, cplx>> lambda_terms(const std::vector<TestFactor>& psi) {
    const auto ids = ctx_.s_lines();
    const auto u = subset_pairings(ctx_, psi, scheme_.order);
    std::vector<std::pair<std::vector<int>, cplx>> out;
    const unsigned full = (1u << ids.size()) - 1u;
    for (unsigned A = 0; A <= full; ++A) {
      std::vector<int> lines;
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (A >> i & 1u) lines.push_back(ids[i]);
      out.emplace_back(lines, A == full ? cplx(0.0) : combine(rec_.counterterm(A), u));
    }
    return out;
  }

  cplx lambda(const std::vector<TestFactor>& psi) {
    cplx s = 0;
    for (const auto& [A, v] : lambda_terms(psi)) s += v;
    return s;
  }

  ForestRecursion& recursion() { return rec_; }

 private:
  PairingContext ctx_;
  SubtractionScheme scheme_;
  ForestRecursion rec_;
};

struct TranslationCheck {
  bool ok = true;
  double max_residual = 0.0;
};

/// Compares C(tau_root + t) with e^{i Omega_root t} C(tau_root), where
/// Omega_root is the frequency carried across each root line.
inline TranslationCheck check_time_translation(const PairingContext& ctx, const SubtractionScheme& scheme,
                                               unsigned F, const std::vector<TestFactor>& psi,
                                               const std::vector<double>& shifts, double tol = 1e-8) {
  Renormalizer r0(ctx, scheme);
  const cplx c0 = r0.counterterm_value(F, psi);
  // frequency across the root lines comes from external lines only
  const LineBook book(ctx.diagram);
  const auto routing = route_momenta(ctx.diagram, ctx.external);
  const auto w = book.frequencies(ctx.diagram, routing.momenta(std::vector<Vec3>(routing.loops, Vec3{0, 0, 0})));
  TranslationCheck out;
  for (double t : shifts) {
    PairingContext shifted = ctx;
    double phase = 0;
    for (auto& [r, tr] : shifted.root_tau) {
      tr += t;
      phase += w.at(r) * t;
    }
    Renormalizer rt(shifted, scheme);
    const cplx ct = rt.counterterm_value(F, psi);
    const double res = std::abs(ct - std::exp(I * phase) * c0) / std::max(1.0, std::abs(c0));
    out.max_residual = std::max(out.max_residual, res);
    if (!(res <= tol)) out.ok = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling decomposition
//
//   <R, Psi> = sum_A int dlambda lambda^{n-1} int ds delta_1(|s| - 1) R(lambda s) Psi(lambda s) eta_A(lambda s)
//
// For Psi vanishing to order > N at 0 the counterterms pair to zero, so R
// acts as the function Ahat. Supported for n = 1, 2 via polar coordinates.

inline cplx scaling_decomposition(const std::function<cplx(const std::vector<double>&)>& ahat,
                                  const std::vector<TestFactor>& psi, const SubtractionScheme& scheme,
                                  double lambda_max = 60.0) {
  const std::size_t n = psi.size();
  if (n < 1 || n > 2) throw std::invalid_argument("scaling_decomposition supports 1 or 2 variables");
  for (const auto& f : psi)
    if (!f.vanishes_to_order(scheme.order))
      throw std::invalid_argument("test function must vanish to the subtraction order at s = 0");
  const UnityDecomposition u(static_cast<int>(n));
  auto psi_at = [&](const std::vector<double>& s) {
    double v = 1;
    for (std::size_t i = 0; i < n; ++i) v *= psi[i].value(s[i], u);
    return v;
  };
  const auto rho_rule = gauss_legendre(24, 0.9, 1.1);
  const auto th_rule = gauss_legendre(n == 1 ? 1 : 24, 0.0, pi / 2);
  cplx total = 0;
  for (unsigned A = 0; A < (1u << n); ++A) {
    for (std::size_t a = 0; a < th_rule.nodes.size(); ++a) {
      const double th = th_rule.nodes[a];
      const double wth = n == 1 ? 1.0 : th_rule.weights[a];
      const std::vector<double> dir = n == 1 ? std::vector<double>{1.0} : std::vector<double>{std::cos(th), std::sin(th)};
      for (std::size_t b = 0; b < rho_rule.nodes.size(); ++b) {
        const double rho = rho_rule.nodes[b];
        const double shell = std::pow(rho, static_cast<double>(n - 1)) * rho * u.mollifier(rho - 1.0);
        if (shell == 0.0) continue;
        auto integrand = [&](double lam) -> cplx {
          if (lam <= 0) return 0.0;
          std::vector<double> s(n);
          for (std::size_t i = 0; i < n; ++i) s[i] = lam * rho * dir[i];
          const double p = psi_at(s) * u.eta(A, s);
          if (p == 0.0) return 0.0;
          return std::pow(lam, static_cast<double>(n - 1)) * ahat(s) * p;
        };
        std::vector<double> br{0.0};
        for (double x = 0.05; x < lambda_max; x *= 1.5) br.push_back(x);
        br.push_back(lambda_max);
        total += wth * rho_rule.weights[b] * shell * integrate_adaptive_complex(integrand, br, 1e-11, 12);
      }
    }
  }
  return total;
}

/// Direct <Ahat, Psi> = int ds Ahat(s) Psi(s) over (0, smax]^n.
inline cplx direct_pairing(const std::function<cplx(const std::vector<double>&)>& ahat,
                           const std::vector<TestFactor>& psi, double smax = 60.0) {
  const std::size_t n = psi.size();
  const UnityDecomposition u(static_cast<int>(n));
  std::vector<double> br{0.0};
  for (double x = 0.05; x < smax; x *= 1.5) br.push_back(x);
  br.push_back(smax);
  if (n == 1) {
    return integrate_adaptive_complex(
        [&](double s) -> cplx { return s <= 0 ? cplx(0.0) : ahat({s}) * psi[0].value(s, u); }, br, 1e-11, 12);
  }
  if (n == 2) {
    return integrate_adaptive_complex(
        [&](double s1) -> cplx {
          if (s1 <= 0) return 0.0;
          return integrate_adaptive_complex(
              [&](double s2) -> cplx {
                return s2 <= 0 ? cplx(0.0) : ahat({s1, s2}) * psi[0].value(s1, u) * psi[1].value(s2, u);
              },
              br, 1e-10, 10);
        },
        br, 1e-10, 10);
  }
  throw std::invalid_argument("direct_pairing supports 1 or 2 variables");
}

}  // namespace keldren
