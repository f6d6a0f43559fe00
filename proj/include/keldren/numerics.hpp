#pragma once
// Small numeric toolkit shared by every keldren module: 3-vectors,
// Gauss-Legendre rules, adaptive quadrature, least-squares fits, the
// generalized exponential integral E_n on the right half plane, and a
// deterministic parallel_for.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace keldren {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator-(const Vec3& a) { return {-a[0], -a[1], -a[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b) {
  a[0] += b[0]; a[1] += b[1]; a[2] += b[2];
  return a;
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Free dispersion with the mass absorbed: omega(k) = |k|^2 / 2.
inline double dispersion(const Vec3& k) { return 0.5 * norm2(k); }
inline double dispersion(double k_abs) { return 0.5 * k_abs * k_abs; }

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {
inline QuadratureRule make_gauss_legendre(std::size_t n) {
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / static_cast<double>(j);
      }
      dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = r.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}
}  // namespace detail

/// Gauss-Legendre rule on [-1, 1]; rules are cached per order.
inline const QuadratureRule& gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_legendre: order must be positive");
  static std::mutex mu;
  static std::map<std::size_t, QuadratureRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_legendre(n)).first;
  return it->second;
}

/// Gauss-Legendre rule mapped to [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
  const auto& ref = gauss_legendre(n);
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * ref.nodes[i];
    r.weights[i] = half * ref.weights[i];
  }
  return r;
}

/// Composite Gauss-Legendre over consecutive breakpoints.
inline QuadratureRule composite_gauss_legendre(const std::vector<double>& breaks, std::size_t n) {
  QuadratureRule r;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    auto seg = gauss_legendre(n, breaks[i], breaks[i + 1]);
    r.nodes.insert(r.nodes.end(), seg.nodes.begin(), seg.nodes.end());
    r.weights.insert(r.weights.end(), seg.weights.begin(), seg.weights.end());
  }
  return r;
}

/// Adaptive Gauss-Kronrod over [a,b] split at the given interior breakpoints.
template <class F>
double integrate_adaptive(F&& f, std::vector<double> breaks, double rel_tol = 1e-10,
                          unsigned max_depth = 20) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, breaks[i], breaks[i + 1], max_depth, rel_tol);
  }
  return total;
}

template <class F>
cplx integrate_adaptive_complex(F&& f, const std::vector<double>& breaks, double rel_tol = 1e-10,
                                unsigned max_depth = 20) {
  const double re = integrate_adaptive([&](double x) { return std::real(f(x)); }, breaks, rel_tol, max_depth);
  const double im = integrate_adaptive([&](double x) { return std::imag(f(x)); }, breaks, rel_tol, max_depth);
  return {re, im};
}

/// Breakpoints clustered geometrically around `center` with scale `width`,
/// clipped to [lo, hi]. Used for peaks of width epsilon.
inline std::vector<double> peak_breakpoints(double lo, double hi, double center, double width) {
  std::vector<double> b{lo, hi};
  if (center > lo && center < hi) b.push_back(center);
  for (double k = 1.0; k * width < (hi - lo); k *= 4.0) {
    for (double s : {-1.0, 1.0}) {
      const double x = center + s * k * width;
      if (x > lo && x < hi) b.push_back(x);
    }
  }
  std::sort(b.begin(), b.end());
  return b;
}

/// Composite Gauss-Legendre on panels graded geometrically (ratio 2) around
/// `center` down to `width`, with no panel longer than `max_panel`. Suited to
/// integrands with poles at distance ~width from the real axis.
template <class F>
auto integrate_graded(F&& f, double lo, double hi, double center, double width, std::size_t order = 32,
                      double max_panel = 0.25) {
  std::vector<double> b{lo, hi};
  if (center > lo && center < hi) b.push_back(center);
  for (double k = 1.0; k * width < (hi - lo); k *= 2.0)
    for (double s : {-1.0, 1.0}) {
      const double x = center + s * k * width;
      if (x > lo && x < hi) b.push_back(x);
    }
  std::sort(b.begin(), b.end());
  std::vector<double> fine;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    const auto m = static_cast<std::size_t>(std::ceil((b[i + 1] - b[i]) / max_panel));
    for (std::size_t j = 0; j < std::max<std::size_t>(m, 1); ++j)
      fine.push_back(b[i] + (b[i + 1] - b[i]) * static_cast<double>(j) / static_cast<double>(std::max<std::size_t>(m, 1)));
  }
  fine.push_back(hi);
  const auto rule = composite_gauss_legendre(fine, order);
  decltype(f(lo)) sum{};
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(rule.nodes[i]);
  return sum;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 matched points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (det == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
  return {(n * sxy - sx * sy) / det, (sy * sxx - sx * sxy) / det};
}

/// Slope of log|v| against log(eps).
inline double log_slope(const std::vector<double>& eps, const std::vector<double>& magnitudes) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    lx.push_back(std::log(eps[i]));
    ly.push_back(std::log(std::abs(magnitudes[i])));
  }
  return fit_line(lx, ly).slope;
}

/// Least-squares fit v(eps) ~ a / eps + b for complex samples.
struct InverseFit {
  cplx a;
  cplx b;
};

inline InverseFit fit_inverse_eps(const std::vector<double>& eps, const std::vector<cplx>& v) {
  std::vector<double> x;
  for (double e : eps) x.push_back(1.0 / e);
  std::vector<double> re, im;
  for (auto z : v) { re.push_back(z.real()); im.push_back(z.imag()); }
  const auto fr = fit_line(x, re), fi = fit_line(x, im);
  return {{fr.slope, fi.slope}, {fr.intercept, fi.intercept}};
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(lo > 0) || !(hi > lo)) throw std::invalid_argument("log_grid: need 0 < lo < hi and n >= 2");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

/// Generalized exponential integral E_m(w) = int_1^inf e^{-w t} t^{-m} dt
/// for Re w > 0 (Re w == 0 is accepted when m >= 2 or w != 0).
inline cplx expint_e(int m, cplx w) {
  if (m < 0) throw std::invalid_argument("expint_e: negative order");
  if (w == cplx{0.0, 0.0}) {
    if (m <= 1) throw std::domain_error("expint_e: E_0/E_1 diverge at 0");
    return 1.0 / static_cast<double>(m - 1);
  }
  if (m == 0) return std::exp(-w) / w;
  constexpr double tiny = 1e-300, eps = 1e-15;
  if (std::abs(w) > 1.0) {
    // modified Lentz continued fraction
    cplx b = w + static_cast<double>(m);
    cplx c = 1.0 / tiny;
    cplx d = 1.0 / b;
    cplx h = d;
    for (int i = 1; i < 100000; ++i) {
      const double an = -static_cast<double>(i) * static_cast<double>(m - 1 + i);
      b += 2.0;
      d = 1.0 / (an * d + b);
      c = b + an / c;
      const cplx del = c * d;
      h *= del;
      if (std::abs(del - 1.0) < eps) return h * std::exp(-w);
    }
    throw std::runtime_error("expint_e: continued fraction did not converge");
  }
  // power series
  cplx ans = (m - 1 != 0) ? cplx(1.0 / (m - 1)) : cplx(-std::log(w) - std::numbers::egamma);
  cplx fact = 1.0;
  for (int i = 1; i < 1000; ++i) {
    fact *= -w / static_cast<double>(i);
    cplx del;
    if (i != m - 1) {
      del = -fact / static_cast<double>(i - m + 1);
    } else {
      double psi = -std::numbers::egamma;
      for (int k = 1; k <= m - 1; ++k) psi += 1.0 / k;
      del = fact * (-std::log(w) + psi);
    }
    ans += del;
    if (std::abs(del) < std::abs(ans) * eps) return ans;
  }
  throw std::runtime_error("expint_e: series did not converge");
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once, so writing into slot i keeps results deterministic.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace keldren
