#pragma once
// Occupation functions n(k), the regularized delta / principal value pair,
// and the four free Keldysh propagators built from them.

#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "json.hpp"
#include "keldren/numerics.hpp"

namespace keldren {

enum class OccupationKind { planck, gaussian, shell, tabulated };

inline std::string to_string(OccupationKind k) {
  switch (k) {
    case OccupationKind::planck: return "planck";
    case OccupationKind::gaussian: return "gaussian";
    case OccupationKind::shell: return "shell";
    case OccupationKind::tabulated: return "tabulated";
  }
  return "?";
}

/// Radial momentum density. Immutable after construction; copies share the
/// tabulated spline.
class OccupationFunction {
 public:
  /// n = e^{-beta(omega-mu)} / (1 - e^{-beta(omega-mu)}), needs beta > 0, mu < 0.
  static OccupationFunction planck(double beta, double mu) {
    if (!(beta > 0.0)) throw std::invalid_argument("planck occupation: beta must be > 0");
    if (!(mu < 0.0)) throw std::invalid_argument("planck occupation: mu must be < 0");
    OccupationFunction f;
    f.kind_ = OccupationKind::planck;
    f.a_ = beta;
    f.b_ = mu;
    return f;
  }

  /// Bose-Einstein written as 1/(e^{alpha k^2/2 + beta} - 1); alpha, beta > 0.
  static OccupationFunction bose_einstein(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("bose_einstein: alpha, beta must be > 0");
    return planck(alpha, -beta / alpha);
  }

  /// n = amplitude * exp(-k^2 / (2 width^2)).
  static OccupationFunction gaussian(double amplitude, double width) {
    if (!(amplitude >= 0.0)) throw std::invalid_argument("gaussian occupation: amplitude must be >= 0");
    if (!(width > 0.0)) throw std::invalid_argument("gaussian occupation: width must be > 0");
    OccupationFunction f;
    f.kind_ = OccupationKind::gaussian;
    f.a_ = amplitude;
    f.b_ = width;
    return f;
  }

  /// Non-equilibrium shell: amplitude * exp(-(|k| - k0)^2 / (2 width^2)) + floor.
  static OccupationFunction shell(double amplitude, double k0, double width, double floor = 1e-3) {
    if (!(amplitude >= 0.0) || !(floor >= 0.0)) throw std::invalid_argument("shell occupation: amplitude, floor must be >= 0");
    if (!(width > 0.0) || k0 < 0.0) throw std::invalid_argument("shell occupation: need width > 0, k0 >= 0");
    OccupationFunction f;
    f.kind_ = OccupationKind::shell;
    f.a_ = amplitude;
    f.b_ = width;
    f.c_ = k0;
    f.d_ = floor;
    return f;
  }

  /// Cubic B-spline through values on the uniform grid k_i = k0 + i*dk.
  static OccupationFunction tabulated(double k0, double dk, std::vector<double> values) {
    if (values.size() < 4) throw std::invalid_argument("tabulated occupation: need at least 4 grid points");
    if (!(dk > 0.0) || k0 < 0.0) throw std::invalid_argument("tabulated occupation: need k0 >= 0, dk > 0");
    for (double v : values)
      if (!(v >= 0.0)) throw std::invalid_argument("tabulated occupation: values must be >= 0");
    OccupationFunction f;
    f.kind_ = OccupationKind::tabulated;
    f.a_ = k0;
    f.b_ = dk;
    f.values_ = std::make_shared<std::vector<double>>(std::move(values));
    f.spline_ = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
        f.values_->begin(), f.values_->end(), k0, dk);
    return f;
  }

  /// Tabulated from (|k|, n) pairs; the |k| column must be uniformly spaced.
  static OccupationFunction tabulated(const std::vector<double>& k, const std::vector<double>& n) {
    if (k.size() != n.size() || k.size() < 4) throw std::invalid_argument("tabulated occupation: bad columns");
    const double dk = (k.back() - k.front()) / static_cast<double>(k.size() - 1);
    for (std::size_t i = 0; i < k.size(); ++i)
      if (std::abs(k[i] - (k.front() + dk * static_cast<double>(i))) > 1e-9 * (1.0 + std::abs(k.back())))
        throw std::invalid_argument("tabulated occupation: |k| grid must be uniform");
    return tabulated(k.front(), dk, n);
  }

  static OccupationFunction from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open occupation table " + path);
    std::vector<double> k, n;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      for (auto& c : line)
        if (c == ',') c = ' ';
      std::istringstream ss(line);
      double a, b;
      if (!(ss >> a >> b)) continue;  // header row
      k.push_back(a);
      n.push_back(b);
    }
    return tabulated(k, n);
  }

  OccupationKind kind() const { return kind_; }

  double radial(double k) const {
    switch (kind_) {
      case OccupationKind::planck: {
        const double x = a_ * (dispersion(k) - b_);
        return 1.0 / std::expm1(x);
      }
      case OccupationKind::gaussian:
        return a_ * std::exp(-k * k / (2.0 * b_ * b_));
      case OccupationKind::shell:
        return a_ * std::exp(-(k - c_) * (k - c_) / (2.0 * b_ * b_)) + d_;
      case OccupationKind::tabulated: {
        const double kmax = a_ + b_ * static_cast<double>(values_->size() - 1);
        if (k < a_ - 1e-12 || k > kmax + 1e-12)
          throw std::out_of_range("tabulated occupation: |k| = " + std::to_string(k) + " outside grid");
        return std::max(0.0, (*spline_)(std::clamp(k, a_, kmax)));
      }
    }
    return 0.0;
  }

  double operator()(const Vec3& k) const { return radial(norm(k)); }

  /// Upper end of the domain (infinity for analytic kinds).
  double k_max() const {
    if (kind_ != OccupationKind::tabulated) return std::numeric_limits<double>::infinity();
    return a_ + b_ * static_cast<double>(values_->size() - 1);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}};
    switch (kind_) {
      case OccupationKind::planck: j["beta"] = a_; j["mu"] = b_; break;
      case OccupationKind::gaussian: j["amplitude"] = a_; j["width"] = b_; break;
      case OccupationKind::shell: j["amplitude"] = a_; j["width"] = b_; j["k0"] = c_; j["floor"] = d_; break;
      case OccupationKind::tabulated: j["k0"] = a_; j["dk"] = b_; j["values"] = *values_; break;
    }
    return j;
  }

  static OccupationFunction from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "planck") return planck(j.at("beta").get<double>(), j.at("mu").get<double>());
    if (kind == "gaussian") return gaussian(j.value("amplitude", 1.0), j.value("width", 1.0));
    if (kind == "shell")
      return shell(j.value("amplitude", 0.5), j.value("k0", 1.5), j.value("width", 0.4), j.value("floor", 1e-3));
    if (kind == "tabulated") {
      if (j.contains("file")) return from_csv(j.at("file").get<std::string>());
      return tabulated(j.at("k0").get<double>(), j.at("dk").get<double>(), j.at("values").get<std::vector<double>>());
    }
    throw std::invalid_argument("unknown occupation kind '" + kind + "'");
  }

 private:
  OccupationKind kind_ = OccupationKind::gaussian;
  double a_ = 0.0, b_ = 1.0, c_ = 0.0, d_ = 0.0;
  std::shared_ptr<std::vector<double>> values_;
  std::shared_ptr<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

inline void require_positive_eps(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("regulator eps must be > 0");
}

/// delta_eps(x) = (1/pi) eps / (x^2 + eps^2)
inline double reg_delta(double x, double eps) { return eps / (pi * (x * x + eps * eps)); }
/// P_eps(x) = x / (x^2 + eps^2); P - i pi delta = 1/(x + i eps)
inline double reg_pv(double x, double eps) { return x / (x * x + eps * eps); }

/// Every (2 pi) delta in the propagator table is carried by this one constant.
inline constexpr double delta_norm = 2.0 * pi;

/// The four regularized free propagators as functions of (omega, k).
/// Components are named by (first, second) Keldysh index.
class PropagatorMatrix {
 public:
  PropagatorMatrix(OccupationFunction n, double eps) : n_(std::move(n)), eps_(eps) { require_positive_eps(eps); }

  double eps() const { return eps_; }
  const OccupationFunction& occupation() const { return n_; }

  // Radial versions take |k| and the occupation value directly.
  static cplx pm_at(double x, double n, double eps) { return delta_norm * reg_delta(x, eps) * (1.0 + n); }
  static cplx mp_at(double x, double n, double eps) { return delta_norm * reg_delta(x, eps) * n; }
  static cplx mm_at(double x, double n, double eps) {
    return I * ((1.0 + n) / cplx(x, eps) - n / cplx(x, -eps));
  }
  static cplx pp_at(double x, double n, double eps) {
    return I * (n / cplx(x, eps) - (1.0 + n) / cplx(x, -eps));
  }

  cplx pm(double w, const Vec3& k) const { return pm_at(w - dispersion(k), n_(k), eps_); }
  cplx mp(double w, const Vec3& k) const { return mp_at(w - dispersion(k), n_(k), eps_); }
  cplx mm(double w, const Vec3& k) const { return mm_at(w - dispersion(k), n_(k), eps_); }
  cplx pp(double w, const Vec3& k) const { return pp_at(w - dispersion(k), n_(k), eps_); }

  /// Matrix [[++, +-], [-+, --]] at (omega, k).
  std::array<std::array<cplx, 2>, 2> matrix(double w, const Vec3& k) const {
    const double x = w - dispersion(k), n = n_(k);
    return {{{pp_at(x, n, eps_), pm_at(x, n, eps_)}, {mp_at(x, n, eps_), mm_at(x, n, eps_)}}};
  }

 private:
  OccupationFunction n_;
  double eps_;
};

inline PropagatorMatrix propagator_matrix(const OccupationFunction& n, double eps) { return {n, eps}; }

enum class Sign : int { minus = -1, plus = 1 };

inline Sign flip(Sign s) { return s == Sign::plus ? Sign::minus : Sign::plus; }
inline int as_int(Sign s) { return static_cast<int>(s); }
inline char as_char(Sign s) { return s == Sign::plus ? '+' : '-'; }
inline Sign sign_from_char(char c) {
  if (c == '+') return Sign::plus;
  if (c == '-') return Sign::minus;
  throw std::invalid_argument(std::string("bad sign character '") + c + "'");
}

/// Value of a two-point correlator of the doubled algebra, as a multiple of
/// n(p). Each operator is a^{upper}_{lower}: upper + is a creator, lower
/// selects the algebra copy. Returns 0, n, or 1+n.
inline double doubled_correlator(Sign u1, Sign l1, Sign u2, Sign l2, double n) {
  using enum Sign;
  if (l1 == minus && l2 == plus) return doubled_correlator(u2, l2, u1, l1, n);  // copies commute
  if (l1 == minus && l2 == minus) {
    if (u1 == plus && u2 == minus) return n;
    if (u1 == minus && u2 == plus) return 1.0 + n;
    return 0.0;
  }
  if (l1 == plus && l2 == plus) {
    // rho'(a^x_+ a^y_+) = rho(a^{-y} a^{-x})
    return doubled_correlator(flip(u2), minus, flip(u1), minus, n);
  }
  // l1 = +, l2 = -
  if (u1 == minus && u2 == minus) return n;
  if (u1 == plus && u2 == plus) return 1.0 + n;
  return 0.0;
}

/// G-factor of a diagram line with orientation `orient` and end signs at its
/// head and tail vertices.
inline double g_factor(Sign orient, Sign sign_head, Sign sign_tail, double n) {
  const Sign upper_head = (as_int(orient) * as_int(sign_head) > 0) ? Sign::minus : Sign::plus;
  const Sign upper_tail = (as_int(orient) * as_int(sign_tail) > 0) ? Sign::plus : Sign::minus;
  return doubled_correlator(upper_head, sign_head, upper_tail, sign_tail, n);
}

inline double g_factor(Sign orient, Sign sign_head, Sign sign_tail, const Vec3& p, const OccupationFunction& n) {
  return g_factor(orient, sign_head, sign_tail, n(p));
}

}  // namespace keldren
