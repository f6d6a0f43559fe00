#pragma once
// Chain diagrams: a free Keldysh line with one or two self-energy
// insertions, their on-shell 1/eps pinches, and the asymptotic-state
// counterterm h(p) that removes them. Also the distribution limits of
// delta_eps^2, delta_eps/eps and delta_eps * P_eps used in the divergence
// bookkeeping, and the Dyson inversion Sigma = G0^{-1} - G^{-1}.
//
// Matrices are ordered [[++, +-], [-+, --]] as in PropagatorMatrix.

#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "keldren/numerics.hpp"
#include "keldren/occupancy.hpp"

namespace keldren {

using Mat2 = std::array<std::array<cplx, 2>, 2>;

inline Mat2 operator*(const Mat2& a, const Mat2& b) {
  Mat2 c{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return c;
}
inline Mat2 operator+(const Mat2& a, const Mat2& b) {
  Mat2 c{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] = a[i][j] + b[i][j];
  return c;
}
inline Mat2 operator-(const Mat2& a, const Mat2& b) {
  Mat2 c{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] = a[i][j] - b[i][j];
  return c;
}
inline Mat2 operator*(cplx s, const Mat2& a) {
  Mat2 c{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] = s * a[i][j];
  return c;
}
inline cplx det(const Mat2& a) { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }

class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Mat2 inverse(const Mat2& a, double tol = 1e-300) {
  const cplx d = det(a);
  if (!(std::abs(d) > tol)) throw SingularMatrix("singular 2x2 Keldysh matrix");
  return {{{a[1][1] / d, -a[0][1] / d}, {-a[1][0] / d, a[0][0] / d}}};
}

/// Sigma^{++} + Sigma^{--} + Sigma^{-+} + Sigma^{+-}, zero when the sum rule holds.
inline cplx sigma_sum_rule_residual(const Mat2& s) { return s[0][0] + s[1][1] + s[1][0] + s[0][1]; }
/// G^{++} + G^{--} - G^{-+} - G^{+-}
inline cplx green_sum_rule_residual(const Mat2& g) { return g[0][0] + g[1][1] - g[1][0] - g[0][1]; }

/// Sigma = G0^{-1} - G^{-1} pointwise. `where` labels the point in errors.
inline Mat2 dyson_sigma(const Mat2& g, const Mat2& g0, const std::string& where = "") {
  try {
    return inverse(g0) - inverse(g);
  } catch (const SingularMatrix& e) {
    throw SingularMatrix(std::string(e.what()) + (where.empty() ? "" : " at " + where));
  }
}

/// Free propagator at (omega, |p|) as a matrix.
inline Mat2 free_propagator(double w, double p, double n, double eps) {
  const double x = w - dispersion(p);
  return {{{PropagatorMatrix::pp_at(x, n, eps), PropagatorMatrix::pm_at(x, n, eps)},
           {PropagatorMatrix::mp_at(x, n, eps), PropagatorMatrix::mm_at(x, n, eps)}}};
}

/// d G0 / d n: every entry is 2 pi delta_eps.
inline Mat2 free_propagator_dn(double w, double p, double eps) {
  const cplx d = delta_norm * reg_delta(w - dispersion(p), eps);
  return {{{d, d}, {d, d}}};
}

// ---------------------------------------------------------------------------
// Self-energy models

class SelfEnergyModel {
 public:
  using Fn = std::function<Mat2(double w, double p)>;

  SelfEnergyModel() : fn_([](double, double) { return Mat2{}; }), source_("zero") {}
  SelfEnergyModel(Fn f, std::string source) : fn_(std::move(f)), source_(std::move(source)) {}

  Mat2 operator()(double w, double p) const { return fn_(w, p); }
  const std::string& source() const { return source_; }

  static SelfEnergyModel zero() { return {}; }

  /// Smooth model around the shell x = omega - omega(p):
  ///   Sigma^{-+} = a (1 + 0.8x + 0.5x^2), Sigma^{+-} = b (1 - 0.6x + 0.7x^2),
  ///   Sigma^{--} = -(Sigma^{-+} + Sigma^{+-})/2 + i gamma (1 + 0.3x), Sigma^{++} = conj.
  static SelfEnergyModel parametric(double a, double b, double gamma) {
    return {[a, b, gamma](double w, double p) {
              const double x = w - dispersion(p);
              const double mp = a * (1 + 0.8 * x + 0.5 * x * x), pm = b * (1 - 0.6 * x + 0.7 * x * x);
              const cplx mm(-(mp + pm) / 2, gamma * (1 + 0.3 * x));
              return Mat2{{{std::conj(mm), pm}, {mp, mm}}};
            },
            "parametric"};
  }

  /// Detailed balance (1+n) Sigma^{-+} = n Sigma^{+-} at every omega, with
  /// n = n(|p|); same shell profile as `parametric`.
  static SelfEnergyModel detailed_balance(const OccupationFunction& n, double a, double gamma) {
    return {[n, a, gamma](double w, double p) {
              const double x = w - dispersion(p), np = n.radial(p);
              const double mp = a * (1 + 0.8 * x + 0.5 * x * x), pm = mp * (1 + np) / np;
              const cplx mm(-(mp + pm) / 2, gamma * (1 + 0.3 * x));
              return Mat2{{{std::conj(mm), pm}, {mp, mm}}};
            },
            "detailed_balance"};
  }

  /// Table rows: omega, |p|, then re/im of ++, +-, -+, --. Missing entries
  /// (empty or nan) are filled from conjugation and the sum rule. Values
  /// are linear in omega and in |p| between table points.
  static SelfEnergyModel from_csv(const std::string& path);

 private:
  Fn fn_;
  std::string source_;
};

namespace detail {
inline Mat2 complete_sigma(std::array<double, 8> v) {
  auto missing = [&](int k) { return std::isnan(v[2 * k]) || std::isnan(v[2 * k + 1]); };
  if (missing(1) || missing(2)) throw std::invalid_argument("self-energy table needs +- and -+ columns");
  const double pm = v[2], mp = v[4];
  cplx pp(v[0], v[1]), mm(v[6], v[7]);
  if (missing(0) && missing(3)) {
    mm = -(pm + mp) / 2.0;
    pp = mm;
  } else if (missing(0)) {
    pp = std::conj(mm);
  } else if (missing(3)) {
    mm = std::conj(pp);
  }
  return {{{pp, pm}, {mp, mm}}};
}
}  // namespace detail

inline SelfEnergyModel SelfEnergyModel::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open self-energy table " + path);
  std::map<double, std::vector<std::pair<double, Mat2>>> rows;  // p -> (omega, Sigma)
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() < 2) continue;
    double w, p;
    try {
      w = std::stod(cells[0]);
      p = std::stod(cells[1]);
    } catch (...) {
      continue;  // header
    }
    std::array<double, 8> v;
    for (int k = 0; k < 8; ++k) {
      const std::size_t i = static_cast<std::size_t>(k) + 2;
      v[k] = (i < cells.size() && cells[i].find_first_not_of(" \t") != std::string::npos)
                 ? std::stod(cells[i])
                 : std::nan("");
    }
    rows[p].emplace_back(w, detail::complete_sigma(v));
  }
  if (rows.empty()) throw std::invalid_argument("empty self-energy table " + path);
  for (auto& [p, r] : rows) std::sort(r.begin(), r.end(), [](auto& a, auto& b) { return a.first < b.first; });
  auto table = std::make_shared<decltype(rows)>(std::move(rows));
  auto in_omega = [](const std::vector<std::pair<double, Mat2>>& r, double w) {
    if (w < r.front().first || w > r.back().first)
      throw std::out_of_range("omega = " + std::to_string(w) + " outside self-energy table");
    if (r.size() == 1) return r.front().second;
    auto it = std::lower_bound(r.begin(), r.end(), w, [](auto& a, double x) { return a.first < x; });
    if (it == r.begin()) ++it;
    const auto& [w1, s1] = *it;
    const auto& [w0, s0] = *(it - 1);
    const double t = (w - w0) / (w1 - w0);
    return (1 - t) * s0 + cplx(t) * s1;
  };
  return {[table, in_omega](double w, double p) {
            const auto& t = *table;
            if (t.size() == 1) return in_omega(t.begin()->second, w);
            auto hi = t.lower_bound(p);
            if (hi == t.end() || (hi == t.begin() && hi->first != p))
              throw std::out_of_range("|p| = " + std::to_string(p) + " outside self-energy table");
            if (hi->first == p) return in_omega(hi->second, w);
            auto lo = std::prev(hi);
            const double s = (p - lo->first) / (hi->first - lo->first);
            return (1 - s) * in_omega(lo->second, w) + cplx(s) * in_omega(hi->second, w);
          },
          "table:" + path};
}

/// Second-order (sunset) self-energy of a particle with momentum p, for the
/// pair kernel v(q) = coupling * exp(-q^2 / (2 range^2)) at momentum transfer
/// q = k2 - p. With X = omega + omega(k1) - omega(k2) - omega(k3),
/// k3 = p + k1 - k2 and the weights
///   W_in  = n2 n3 (1 + n1),   W_out = (1 + n2)(1 + n3) n1,
/// the components are
///   Sigma^{+-} = <2 pi delta_e(X) W_out>,  Sigma^{-+} = <2 pi delta_e(X) W_in>,
///   Sigma^{--} = -i <W_out/(X + i e) - W_in/(X - i e)>,  Sigma^{++} = -i <W_in/(X + i e) - W_out/(X - i e)>,
/// where <.> = int d^3k1 d^3k2 / (2 pi)^6 |v|^2 (.). Then (1+n) Sigma^{-+} - n Sigma^{+-}
/// is the gain-minus-loss bracket of the scattering integral. Evaluated by Monte Carlo
/// on an omega grid with common samples and spline-interpolated in omega.
struct SunsetSpec {
  double coupling = 1.0;
  double range = 1.0;
  double eps = 0.1;         // regulator inside Sigma
  double window = 4.0;      // omega grid covers omega(p) +- window
  std::size_t grid = 161;
  std::size_t samples = 20000;
  std::uint64_t seed = 1;
  double sample_width = 1.0;  // Gaussian importance width for k1
};

class SunsetSelfEnergy {
 public:
  SunsetSelfEnergy(const OccupationFunction& n, double p, SunsetSpec spec = {}) : p_(p), spec_(spec) {
    if (spec.grid < 8) throw std::invalid_argument("sunset: omega grid too small");
    require_positive_eps(spec.eps);
    const double w0 = dispersion(p) - spec.window;
    dw_ = 2 * spec.window / static_cast<double>(spec.grid - 1);
    w0_ = w0;
    std::vector<double> pm(spec.grid, 0.0), mp(spec.grid, 0.0);
    std::vector<double> mm_re(spec.grid, 0.0), mm_im(spec.grid, 0.0);
    const Vec3 pv{0.0, 0.0, p};
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> n1(0.0, spec.sample_width), n2(0.0, spec.range);
    const double s1 = spec.sample_width, s2 = spec.range;
    const double norm = 1.0 / std::pow(2 * pi, 6) / static_cast<double>(spec.samples);
    for (std::size_t i = 0; i < spec.samples; ++i) {
      const Vec3 k1{n1(rng), n1(rng), n1(rng)};
      const Vec3 q{n2(rng), n2(rng), n2(rng)};
      const Vec3 k2 = pv + q, k3 = pv + k1 - k2;
      const double pdf = std::exp(-norm2(k1) / (2 * s1 * s1)) / std::pow(2 * pi * s1 * s1, 1.5) *
                         std::exp(-norm2(q) / (2 * s2 * s2)) / std::pow(2 * pi * s2 * s2, 1.5);
      const double v = spec.coupling * std::exp(-norm2(q) / (2 * spec.range * spec.range));
      const double a1 = n(k1), a2 = n(k2), a3 = n(k3);
      const double win = a2 * a3 * (1 + a1), wout = (1 + a2) * (1 + a3) * a1;
      const double wt = v * v / pdf * norm;
      const double shift = dispersion(k1) - dispersion(k2) - dispersion(k3);
      for (std::size_t g = 0; g < spec.grid; ++g) {
        const double X = w0 + dw_ * static_cast<double>(g) + shift;
        const double d = delta_norm * reg_delta(X, spec.eps);
        pm[g] += wt * d * wout;
        mp[g] += wt * d * win;
        const cplx mm = -I * (wout / cplx(X, spec.eps) - win / cplx(X, -spec.eps));
        mm_re[g] += wt * mm.real();
        mm_im[g] += wt * mm.imag();
      }
    }
    using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
    pm_ = std::make_shared<Spline>(pm.begin(), pm.end(), w0_, dw_);
    mp_ = std::make_shared<Spline>(mp.begin(), mp.end(), w0_, dw_);
    mm_re_ = std::make_shared<Spline>(mm_re.begin(), mm_re.end(), w0_, dw_);
    mm_im_ = std::make_shared<Spline>(mm_im.begin(), mm_im.end(), w0_, dw_);
    grid_ = {pm, mp, mm_re, mm_im};
  }

  double momentum() const { return p_; }

  Mat2 operator()(double w) const {
    if (w < w0_ - 1e-12 || w > w0_ + 2 * spec_.window + 1e-12)
      throw std::out_of_range("sunset self-energy evaluated outside its omega window");
    const cplx mm((*mm_re_)(w), (*mm_im_)(w));
    return {{{std::conj(mm), (*pm_)(w)}, {(*mp_)(w), mm}}};
  }

  /// Largest |sum rule residual| over the omega grid (before interpolation).
  double max_sum_rule_residual() const {
    double r = 0;
    for (std::size_t g = 0; g < grid_[0].size(); ++g)
      r = std::max(r, std::abs(2 * grid_[2][g] + grid_[0][g] + grid_[1][g]));
    return r;
  }

  SelfEnergyModel model() const {
    auto self = std::make_shared<SunsetSelfEnergy>(*this);
    return {[self](double w, double p) {
              if (std::abs(p - self->momentum()) > 1e-12)
                throw std::out_of_range("sunset self-energy was built for a different |p|");
              return (*self)(w);
            },
            "builtin"};
  }

 private:
  double p_;
  SunsetSpec spec_;
  double w0_ = 0, dw_ = 1;
  std::shared_ptr<boost::math::interpolators::cardinal_cubic_b_spline<double>> pm_, mp_, mm_re_, mm_im_;
  std::array<std::vector<double>, 4> grid_;
};

// ---------------------------------------------------------------------------
// Chains

/// Chain with `order` insertions at fixed |p|; H^{ij} sums over the inner
/// indices with the outer Sigma indices i (left) and j (right) fixed.
struct ChainAmplitude {
  int order = 1;
  double eps = 0.01;
  double p = 1.0;
  double n = 0.0;
  SelfEnergyModel sigma;

  Mat2 components(double w) const {
    const Mat2 g = free_propagator(w, p, n, eps);
    const Mat2 s = sigma(w, p);
    Mat2 h{};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        if (order == 1) {
          h[i][j] = g[1][i] * s[i][j] * g[j][1];
        } else {
          cplx acc = 0;
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) acc += s[i][k] * g[k][l] * s[l][j];
          h[i][j] = g[1][i] * acc * g[j][1];
        }
      }
    return h;
  }

  /// G^{--} contribution: sum of all components.
  cplx total(double w) const {
    const auto h = components(w);
    return h[0][0] + h[0][1] + h[1][0] + h[1][1];
  }
};

inline ChainAmplitude one_chain(const SelfEnergyModel& s, double n, double p, double eps) {
  require_positive_eps(eps);
  return {1, eps, p, n, s};
}
inline ChainAmplitude two_chain(const SelfEnergyModel& s, double n, double p, double eps) {
  require_positive_eps(eps);
  return {2, eps, p, n, s};
}

/// Test function in omega around the shell.
struct ShellTestFunction {
  double center = 0.0;
  double width = 0.3;
  double operator()(double w) const { return std::exp(-(w - center) * (w - center) / (2 * width * width)); }
};

/// int dw f(w) Psi(w) over center +- window, refined around the eps-wide peak.
template <class F>
cplx pair_on_shell(F&& f, const ShellTestFunction& psi, double eps, double window = 4.0) {
  return integrate_graded([&](double w) -> cplx { return f(w) * psi(w); }, psi.center - window, psi.center + window,
                          psi.center, eps / 4);
}

/// Least-squares a/eps + b over the given scan.
struct DivergentPart {
  cplx coefficient;  // a: multiplies (1/eps) delta(omega - omega(p)) after dividing by Psi(omega_p)
  cplx finite;
};

template <class F>
DivergentPart extract_divergence(F&& pairing_at_eps, const std::vector<double>& eps_grid, double psi_on_shell = 1.0) {
  std::vector<cplx> v;
  for (double e : eps_grid) v.push_back(pairing_at_eps(e));
  const auto fit = fit_inverse_eps(eps_grid, v);
  return {fit.a / psi_on_shell, fit.b};
}

struct StateCounterterm {
  double p = 0.0;
  double h = 0.0;             // defining display, on shell
  double h_imag = 0.0;        // imaginary part of the defining display (0 under conjugation symmetry)
  double h_lemma4 = 0.0;      // ((1+n) S^{-+} - n S^{+-}) / (2n(1+n))
  double h_printed = 0.0;     // printed reduced form: (1+2n) * h_lemma4
  double printed_ratio = 0.0; // h_printed / h (nan when h = 0)
  bool normalized = false;    // Z bookkeeping flag: the 1/Z factor is carried separately

  nlohmann::json to_json() const {
    return {{"p", p}, {"h", h}, {"h_imag", h_imag}, {"h_lemma4", h_lemma4}, {"h_printed", h_printed},
            {"printed_ratio", printed_ratio}};
  }
};

inline StateCounterterm counterterm_h(const SelfEnergyModel& sigma, double n, double p) {
  if (!(n > 0.0)) throw std::domain_error("counterterm h undefined where n(p) = 0");
  const Mat2 s = sigma(dispersion(p), p);
  const cplx pp = s[0][0], pm = s[0][1], mp = s[1][0], mm = s[1][1];
  const cplx h = pp + mm + (1 + 2 * n) / (2 * n * (1 + n)) * ((1 + n) * mp + n * pm);
  StateCounterterm c;
  c.p = p;
  c.h = h.real();
  c.h_imag = h.imag();
  c.h_lemma4 = (((1 + n) * mp - n * pm) / (2 * n * (1 + n))).real();
  c.h_printed = (1 + 2 * n) * c.h_lemma4;
  c.printed_ratio = c.h != 0.0 ? c.h_printed / c.h : std::nan("");
  return c;
}

/// First-order shift of the occupation produced by the state reweighting
/// e^{-int h dt} over the regulated time ~ 1/eps: dn = -h n (1+n) / eps.
inline double occupation_shift(double h, double n, double eps) { return -h * n * (1 + n) / eps; }

/// One-chain G^{--} with the h insertion: H1 + dG0/dn * dn.
inline cplx corrected_one_chain(const ChainAmplitude& c, double h, double w) {
  return c.total(w) + free_propagator_dn(w, c.p, c.eps)[1][1] * occupation_shift(h, c.n, c.eps);
}

/// Two-chain G^{--} with a single h insertion on either outer line.
inline cplx corrected_two_chain(const ChainAmplitude& c, double h, double w) {
  const Mat2 g = free_propagator(w, c.p, c.n, c.eps), dg = free_propagator_dn(w, c.p, c.eps);
  const Mat2 s = c.sigma(w, c.p);
  const cplx dn = occupation_shift(h, c.n, c.eps);
  const Mat2 corr = dg * s * g + g * s * dg;
  return c.total(w) + dn * corr[1][1];
}

struct ScanRow {
  double eps;
  cplx bare, corrected;
};

struct ChainScan {
  std::vector<ScanRow> rows;
  double bare_slope = 0, corrected_slope = 0;  // over the final decade
  StateCounterterm h;
};

namespace detail {
inline std::pair<std::vector<double>, std::vector<double>> final_decade(const std::vector<ScanRow>& rows, bool corrected) {
  double emin = rows.front().eps;
  for (const auto& r : rows) emin = std::min(emin, r.eps);
  std::vector<double> e, m;
  for (const auto& r : rows)
    if (r.eps <= 10 * emin * (1 + 1e-9)) {
      e.push_back(r.eps);
      m.push_back(std::abs(corrected ? r.corrected : r.bare));
    }
  return {e, m};
}
}  // namespace detail

inline double scan_slope(const std::vector<ScanRow>& rows, bool corrected) {
  auto [e, m] = detail::final_decade(rows, corrected);
  for (double x : m)
    if (x == 0.0) return 0.0;
  return log_slope(e, m);
}

/// Bare vs h-corrected on-shell pairings of the one-chain (order 1) or
/// two-chain (order 2) over eps_grid.
inline ChainScan chain_scan(int order, const SelfEnergyModel& sigma, const OccupationFunction& occ, double p,
                            const std::vector<double>& eps_grid, const ShellTestFunction& psi_in = {},
                            unsigned threads = 1) {
  if (order != 1 && order != 2) throw std::invalid_argument("chain order must be 1 or 2");
  ShellTestFunction psi = psi_in;
  psi.center = dispersion(p);
  const double n = occ.radial(p);
  ChainScan out;
  out.h = counterterm_h(sigma, n, p);
  out.rows.resize(eps_grid.size());
  parallel_for(eps_grid.size(), threads, [&](std::size_t i) {
    const double e = eps_grid[i];
    const ChainAmplitude c{order, e, p, n, sigma};
    const cplx bare = pair_on_shell([&](double w) { return c.total(w); }, psi, e);
    const cplx corr = pair_on_shell(
        [&](double w) { return order == 1 ? corrected_one_chain(c, out.h.h, w) : corrected_two_chain(c, out.h.h, w); },
        psi, e);
    out.rows[i] = {e, bare, corr};
  });
  out.bare_slope = scan_slope(out.rows, false);
  out.corrected_slope = scan_slope(out.rows, true);
  return out;
}

inline ChainScan cancellation_demo(const SelfEnergyModel& sigma, const OccupationFunction& occ, double p,
                                   const std::vector<double>& eps_grid, const ShellTestFunction& psi = {},
                                   unsigned threads = 1) {
  return chain_scan(1, sigma, occ, p, eps_grid, psi, threads);
}

inline ChainScan two_chain_scan(const SelfEnergyModel& sigma, const OccupationFunction& occ, double p,
                                const std::vector<double>& eps_grid, const ShellTestFunction& psi = {},
                                unsigned threads = 1) {
  return chain_scan(2, sigma, occ, p, eps_grid, psi, threads);
}

// ---------------------------------------------------------------------------
// Distribution limits of the regularized delta and principal value
//
//   1. int delta_e^2 f  - f(0)/(2 pi e)        -> 0
//   2. (1/e) (int delta_e f - f(0))             -> C = (1/pi) Pf int f(x)/x^2
//   3. int f / (pi (x^2 + e^2)) - f(0)/e        -> C (the same kernel as 2)
//   4. int delta_e P_e f                         -> f'(0)/2
//
// The literal combination int (delta_e^2 - delta_e/(2 pi e)) f tends to
// -C/(2 pi), reported alongside limit 1.

struct Lemma5Function {
  std::string name;
  std::function<double(double)> f;
  double support = 40.0;  // |x| beyond which f is negligible (or zero)
};

inline std::vector<Lemma5Function> lemma5_battery() {
  auto bump = [](double x) {
    const double y = x - 0.2;
    return std::abs(y) < 1.0 ? std::exp(-1.0 / (1.0 - y * y)) : 0.0;
  };
  return {
      {"gaussian", [](double x) { return std::exp(-x * x / 2); }, 40.0},
      {"shifted_gaussian", [](double x) { return std::exp(-(x - 0.3) * (x - 0.3)); }, 40.0},
      {"linear_gaussian", [](double x) { return (1 + x) * std::exp(-x * x); }, 40.0},
      {"bump", bump, 1.2},
      {"sech_wave", [](double x) { return (1 + 0.5 * std::sin(x)) / std::cosh(x); }, 60.0},
  };
}

struct Lemma5Row {
  double eps;
  std::array<double, 4> residual;
  double literal_first;  // int (delta_e^2 - delta_e/(2 pi e)) f
};

struct Lemma5Result {
  std::string function;
  std::vector<Lemma5Row> rows;
  std::array<double, 4> slope{};  // +inf when a residual is identically 0
  std::array<double, 4> limit{};  // 0, C, C, f'(0)/2
  double literal_first_limit = 0; // -C/(2 pi)
};

inline double pi_half_check() {
  // int dx/(x^2+1)^2 over R via x = tan t: int cos^2 t dt on (-pi/2, pi/2)
  return integrate_adaptive([](double t) { return std::cos(t) * std::cos(t); }, {-pi / 2, 0.0, pi / 2}, 1e-15);
}

inline Lemma5Result lemma5_suite(const Lemma5Function& fn, const std::vector<double>& eps_grid) {
  const auto& f = fn.f;
  const double L = fn.support;
  const double f0 = f(0.0);
  const double h = 1e-3;
  const double fp0 = (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
  // C = (1/pi) int_0^inf (f(x) + f(-x) - 2 f(0)) / x^2, tail beyond L analytic
  auto sym = [&](double x) {
    if (x < 1e-4) {
      const double d2 = (f(1e-3) + f(-1e-3) - 2 * f0) / 1e-6;
      return d2;  // limit f''(0)
    }
    return (f(x) + f(-x) - 2 * f0) / (x * x);
  };
  std::vector<double> br{0.0};
  for (double x = 0.05; x < L; x *= 1.5) br.push_back(x);
  br.push_back(L);
  const double C = (integrate_adaptive(sym, br, 1e-13, 12) - 2 * f0 / L) / pi;

  Lemma5Result out;
  out.function = fn.name;
  out.limit = {0.0, C, C, fp0 / 2};
  out.literal_first_limit = -C / (2 * pi);
  for (double e : eps_grid) {
    require_positive_eps(e);
    auto integ = [&](auto&& g) { return integrate_graded(g, -L, L, 0.0, e / 4); };
    // delta_e^2 integrates to 1/(2 pi e) exactly (the pi/2 constant), so limit 1 subtracts f(0) inside
    const double d2 = integ([&](double x) { const double d = reg_delta(x, e); return d * d * (f(x) - f0); });
    // Lorentzian mass outside [-L, L]: (2/pi) atan(e/L) times f(0)
    const double outside = 2.0 / pi * std::atan(e / L);
    const double d1 = integ([&](double x) { return reg_delta(x, e) * (f(x) - f0); }) - f0 * outside;
    const double r2 = d1 / e - C;
    // f(0) times the delta_e^2 mass outside [-L, L]
    const double d2_out = f0 / (pi * pi) * (std::atan(e / L) / e - L / (L * L + e * e));
    const double dp = integ([&](double x) { return reg_delta(x, e) * reg_pv(x, e) * f(x); });
    Lemma5Row row;
    row.eps = e;
    row.residual = {d2 - d2_out, r2, r2, dp - fp0 / 2};
    // int delta_e^2 f - (1/2pi e) int delta_e f
    row.literal_first = (d2 - d2_out) - d1 / (2 * pi * e);
    out.rows.push_back(row);
  }
  for (int k = 0; k < 4; ++k) {
    std::vector<double> e, m;
    bool zero = true;
    for (const auto& r : out.rows) {
      e.push_back(r.eps);
      m.push_back(std::abs(r.residual[k]));
      if (std::abs(r.residual[k]) > 1e-13) zero = false;
    }
    out.slope[k] = zero ? std::numeric_limits<double>::infinity() : log_slope(e, m);
  }
  return out;
}

}  // namespace keldren
