#pragma once
// Batch runs driven by a JSON configuration. run() returns the exit status:
// 0 all enabled checks pass, 1 a check failed or a module raised, 2 the
// configuration is invalid. Nothing is computed before validation finishes.

#include <filesystem>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "keldren/chains.hpp"
#include "keldren/friedrichs.hpp"
#include "keldren/io.hpp"
#include "keldren/kinetics.hpp"
#include "keldren/renorm.hpp"
#include "keldren/trees.hpp"
#include "keldren/two_body.hpp"

namespace keldren {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace config {

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"", {"command", "action", "seed", "threads", "output_dir", "occupation", "potential", "eps_grid", "trees",
            "diagrams", "renorm", "chains", "kinetics", "boundary"}},
      {"trees", {"vertices", "shoots"}},
      {"diagrams", {"vertices", "shoots", "ends", "labeled"}},
      {"renorm", {"points_per_axis", "order", "pinch", "slope_tolerance"}},
      {"chains", {"order", "p", "sigma", "samples", "slope_tolerance"}},
      {"kinetics", {"alphas", "betas", "momenta", "kernel", "tolerance"}},
      {"boundary", {"distributions", "R", "b_points", "p_max", "tolerance", "null_tolerance"}},
  };
  return s;
}

template <class T>
T get(const nlohmann::json& j, const std::string& section, const std::string& key, T fallback) {
  const nlohmann::json* node = &j;
  if (!section.empty()) {
    if (!j.contains(section)) return fallback;
    node = &j.at(section);
  }
  if (!node->contains(key)) return fallback;
  try {
    return node->at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config /" + (section.empty() ? "" : section + "/") + key + ": wrong type");
  }
}

inline void check_keys(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [section, keys] : schema()) {
    const nlohmann::json* node = &j;
    if (!section.empty()) {
      if (!j.contains(section)) continue;
      node = &j.at(section);
      if (!node->is_object()) throw ConfigError("config /" + section + ": must be an object");
    }
    for (const auto& item : node->items())
      if (!keys.count(item.key()))
        throw ConfigError("config /" + (section.empty() ? "" : section + "/") + item.key() + ": unknown key");
  }
}

inline std::vector<double> eps_grid(const nlohmann::json& j, double lo, double hi, int n) {
  std::vector<double> g;
  if (j.contains("eps_grid") && j.at("eps_grid").is_array()) {
    g = get<std::vector<double>>(j, "", "eps_grid", {});
  } else {
    lo = get<double>(j, "eps_grid", "lo", lo);
    hi = get<double>(j, "eps_grid", "hi", hi);
    n = get<int>(j, "eps_grid", "n", n);
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw ConfigError("config /eps_grid: need 0 < lo < hi and n >= 2");
    g = log_grid(lo, hi, static_cast<std::size_t>(n));
  }
  for (double e : g)
    if (!(e > 0.0)) throw ConfigError("config /eps_grid: entries must be > 0");
  return g;
}

template <class F>
auto parse(const std::string& path, F f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config /" + path + ": " + e.what());
  }
}

}  // namespace config

struct RunContext {
  nlohmann::json config;
  std::string hash;
  std::filesystem::path out;
  unsigned threads = 1;
  std::ostream* log = &std::cout;
};

namespace detail {

inline int run_trees(const RunContext& rc) {
  const int n = config::get<int>(rc.config, "trees", "vertices", 3);
  const int shoots = config::get<int>(rc.config, "trees", "shoots", 1);
  if (n < 1 || n > 6 || shoots < 0) throw ConfigError("config /trees: need 1 <= vertices <= 6, shoots >= 0");
  const auto trees = enumerate_trees(n, shoots);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : trees) list.push_back(t.to_json());
  write_json(rc.out / "trees.json", {{"vertices", n}, {"shoots", shoots}, {"count", trees.size()}, {"trees", list}},
             rc.hash);
  *rc.log << "trees: " << trees.size() << " right trees on " << n << " vertices, " << shoots << " shoots\n";
  return 0;
}

inline int run_diagrams(const RunContext& rc) {
  const int n = config::get<int>(rc.config, "diagrams", "vertices", 2);
  const int shoots = config::get<int>(rc.config, "diagrams", "shoots", 0);
  const int ends = config::get<int>(rc.config, "diagrams", "ends", 4);
  const bool labeled = config::get<bool>(rc.config, "diagrams", "labeled", false);
  if (n < 1 || n > 4 || shoots < 0 || ends < 1 || ends > 6)
    throw ConfigError("config /diagrams: need 1 <= vertices <= 4, 1 <= ends <= 6");
  nlohmann::json list = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& t : enumerate_trees(n, shoots))
    for (const auto& g : enumerate_diagrams(t, ends, labeled)) {
      list.push_back(g.to_json());
      ++total;
    }
  write_json(rc.out / "diagrams.json", {{"vertices", n}, {"ends", ends}, {"count", total}, {"graphs", list}}, rc.hash);
  *rc.log << "diagrams: " << total << " graphs\n";
  return 0;
}

inline int run_renorm(const RunContext& rc) {
  const auto eps = config::eps_grid(rc.config, 1e-3, 1e-1, 5);
  const int points = config::get<int>(rc.config, "renorm", "points_per_axis", 12);
  const int order = config::get<int>(rc.config, "renorm", "order", 2);
  const bool pinch = config::get<bool>(rc.config, "renorm", "pinch", true);
  const double tol = config::get<double>(rc.config, "renorm", "slope_tolerance", 0.1);
  const auto occ = config::parse("occupation", [&] {
    return rc.config.contains("occupation") ? OccupationFunction::from_json(rc.config.at("occupation"))
                                            : OccupationFunction::gaussian(0.8, 1.0);
  });
  if (points < 4 || order < 0 || order > 4) throw ConfigError("config /renorm: need points_per_axis >= 4, 0 <= order <= 4");

  const Vec3 k2{0.3, 0.1, -0.2};
  const std::vector<TestFactor> psi{TestFactor::exp_monomial(0, 1.0)};
  CsvWriter csv(rc.out / "renorm_scan.csv",
                {"eps", "bare_re", "bare_im", "counterterm_re", "counterterm_im", "renormalized_re", "renormalized_im"},
                rc.hash);
  std::vector<double> ren;
  for (double e : eps) {
    PairingContext c;
    c.diagram = two_vertex_loop_diagram(pinch, 1.0);
    c.occupation = occ;
    c.external = two_vertex_loop_externals(k2, pinch ? k2 : Vec3{0.2, -0.4, 0.1}, {-0.1, 0.2, 0.25});
    c.root_tau = {{1, 0.0}};
    c.eps = e;
    c.quadrature.points_per_axis = points;
    c.quadrature.seed = config::get<std::uint64_t>(rc.config, "", "seed", 1);
    Renormalizer r(c, SubtractionScheme{order});
    const auto p = r.all(psi);
    const cplx ct = p.counterterms.count(0) ? p.counterterms.at(0) : cplx(0.0);
    csv.row({e, p.bare.real(), p.bare.imag(), ct.real(), ct.imag(), p.renormalized.real(), p.renormalized.imag()});
    ren.push_back(std::abs(p.renormalized));
  }
  // the finite remainder only dominates once eps is small; fit the last decade
  std::vector<double> fe, fr;
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (eps[i] <= 10 * *std::min_element(eps.begin(), eps.end())) {
      fe.push_back(eps[i]);
      fr.push_back(ren[i]);
    }
  const double slope = fe.size() >= 2 ? log_slope(fe, fr) : log_slope(eps, ren);
  const bool ok = std::abs(slope) < tol;
  *rc.log << "renorm scan: renormalized slope " << format_number(slope) << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? 0 : 1;
}

inline SelfEnergyModel chains_sigma(const RunContext& rc, const OccupationFunction& occ, double p) {
  const auto name = config::get<std::string>(rc.config, "chains", "sigma", "builtin");
  if (name == "zero") return SelfEnergyModel::zero();
  if (name == "parametric") return SelfEnergyModel::parametric(0.2, 0.5, 0.1);
  if (name == "builtin") {
    SunsetSpec spec;
    spec.samples = config::get<std::size_t>(rc.config, "chains", "samples", 4000);
    spec.seed = config::get<std::uint64_t>(rc.config, "", "seed", 1);
    return SunsetSelfEnergy(occ, p, spec).model();
  }
  return SelfEnergyModel::from_csv(name);
}

inline int run_chains(const RunContext& rc, const std::string& action) {
  const auto eps = config::eps_grid(rc.config, 1e-3, 1e-1, 9);
  const int order = action == "cancel" ? 1 : config::get<int>(rc.config, "chains", "order", 1);
  const double p = config::get<double>(rc.config, "chains", "p", 1.0);
  const double tol = config::get<double>(rc.config, "chains", "slope_tolerance", 0.1);
  if (order != 1 && order != 2) throw ConfigError("config /chains/order: must be 1 or 2");
  if (!(p > 0.0)) throw ConfigError("config /chains/p: must be > 0");
  const auto occ = config::parse("occupation", [&] {
    return rc.config.contains("occupation") ? OccupationFunction::from_json(rc.config.at("occupation"))
                                            : OccupationFunction::shell(0.5, 1.5, 0.4);
  });
  const auto sigma = chains_sigma(rc, occ, p);
  const auto scan = chain_scan(order, sigma, occ, p, eps, {}, rc.threads);

  CsvWriter csv(rc.out / ("chains_" + action + ".csv"),
                {"eps", "bare_re", "bare_im", "corrected_re", "corrected_im"}, rc.hash);
  bool all_zero = true;
  for (const auto& r : scan.rows) {
    csv.row({r.eps, r.bare.real(), r.bare.imag(), r.corrected.real(), r.corrected.imag()});
    all_zero = all_zero && r.bare == cplx(0.0);
  }
  write_json(rc.out / ("chains_" + action + "_counterterm.json"), scan.h.to_json(), rc.hash);
  *rc.log << "chains " << action << ": order " << order << " sigma " << sigma.source();
  if (all_zero) {
    *rc.log << " (identically zero)\n";
    return 0;
  }
  *rc.log << " bare slope " << format_number(scan.bare_slope) << " corrected slope "
          << format_number(scan.corrected_slope);
  if (action != "cancel") {
    *rc.log << "\n";
    return 0;
  }
  const bool ok = std::abs(scan.corrected_slope) < tol;
  *rc.log << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? 0 : 1;
}

inline int run_fixed_point(const RunContext& rc) {
  const auto alphas = config::get<std::vector<double>>(rc.config, "kinetics", "alphas", {0.5, 1.0, 2.0});
  const auto betas = config::get<std::vector<double>>(rc.config, "kinetics", "betas", {0.2, 0.5, 1.0});
  const auto momenta = config::get<std::vector<double>>(rc.config, "kinetics", "momenta", {0.0, 0.8, 2.0});
  const double tol = config::get<double>(rc.config, "kinetics", "tolerance", 1e-6);
  for (double a : alphas)
    if (!(a > 0.0)) throw ConfigError("config /kinetics/alphas: must be > 0");
  for (double b : betas)
    if (!(b > 0.0)) throw ConfigError("config /kinetics/betas: must be > 0");
  const auto kernel = config::parse("kinetics/kernel", [&] {
    return rc.config.contains("kinetics") && rc.config.at("kinetics").contains("kernel")
               ? ScatteringKernel::from_json(rc.config.at("kinetics").at("kernel"))
               : ScatteringKernel::born(1.0, 1.0);
  });
  const auto rows = fixed_point_table(alphas, betas, momenta, kernel);
  CsvWriter csv(rc.out / "kinetics_fixed_point.csv", {"alpha", "beta", "p", "st", "gain", "relative"}, rc.hash);
  double worst = 0.0;
  for (const auto& r : rows) {
    csv.row({r.alpha, r.beta, r.p, r.st, r.gain, r.relative});
    worst = std::max(worst, r.relative);
  }
  const bool ok = worst < tol;
  *rc.log << "kinetics fixed-point: max |St|/gain " << format_number(worst) << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? 0 : 1;
}

inline int run_boundary(const RunContext& rc) {
  const auto Rs = config::get<std::vector<double>>(rc.config, "boundary", "R", {10.0, 20.0});
  const int bpts = config::get<int>(rc.config, "boundary", "b_points", 48);
  const double pmax = config::get<double>(rc.config, "boundary", "p_max", 6.0);
  const double tol = config::get<double>(rc.config, "boundary", "tolerance", 0.02);
  const double null_tol = config::get<double>(rc.config, "boundary", "null_tolerance", 1e-3);
  if (Rs.empty() || bpts < 4 || !(pmax > 0.0)) throw ConfigError("config /boundary: need R values, b_points >= 4, p_max > 0");
  const auto v = config::parse("potential", [&] {
    return rc.config.contains("potential") ? PairPotential::from_json(rc.config.at("potential"))
                                           : PairPotential::bump(0.5, 1.0);
  });
  for (double R : Rs)
    if (!(R > 0.0) || v.radius() / R > 0.5) throw ConfigError("config /boundary/R: need R >= 2 * potential radius");
  std::vector<nlohmann::json> specs;
  if (rc.config.contains("boundary") && rc.config.at("boundary").contains("distributions")) {
    for (const auto& d : rc.config.at("boundary").at("distributions")) specs.push_back(d);
  } else {
    specs = {{{"kind", "two_temperature"}}, {{"kind", "shell"}}, {{"kind", "quartic"}}, {{"kind", "maxwellian"}}};
  }
  std::vector<ClassicalDistribution> hs;
  for (const auto& s : specs) hs.push_back(config::parse("boundary/distributions", [&] { return ClassicalDistribution::from_json(s); }));

  BoundaryQuadrature q;
  q.cap_points = static_cast<std::size_t>(bpts);
  q.p_max = pmax;
  CsvWriter csv(rc.out / "kinetics_boundary.csv",
                {"distribution", "R", "gauss", "impact", "relative", "null", "pass"}, rc.hash);
  bool all_ok = true;
  for (const auto& h : hs) {
    const bool null = v.vanishes() || h.name == "maxwellian" || h.name == "zero";
    const double impact = scattering_integral_classical(h, v, Rs.front(), q);
    double first = 0.0;
    for (std::size_t i = 0; i < Rs.size(); ++i) {
      const double g = boundary_integral_gauss(h, v, Rs[i], q);
      if (i == 0) first = g;
      const double rel = impact != 0.0 ? std::abs(g - impact) / std::abs(impact) : std::abs(g);
      bool ok = null ? (std::abs(g) < null_tol && std::abs(impact) < null_tol)
                     : (rel < tol && std::abs(g - first) <= tol * std::abs(first));
      all_ok = all_ok && ok;
      csv.row({h.name, Rs[i], g, impact, rel, null ? "1" : "0", ok ? "1" : "0"});
      *rc.log << "boundary " << h.name << " R=" << format_number(Rs[i]) << " surface " << format_number(g)
              << " impact " << format_number(impact) << (ok ? " PASS" : " FAIL") << "\n";
    }
  }
  return all_ok ? 0 : 1;
}

}  // namespace detail

/// Validate `cfg` and run the selected command. Diagnostics go to `err`.
inline int run(const nlohmann::json& cfg, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    config::check_keys(cfg);
    const auto command = config::get<std::string>(cfg, "", "command", "");
    const auto action = config::get<std::string>(cfg, "", "action", "");
    static const std::map<std::string, std::set<std::string>> actions{
        {"trees", {"enumerate"}},      {"diagrams", {"build"}},
        {"renorm", {"scan"}},          {"chains", {"scan", "cancel"}},
        {"kinetics", {"fixed-point", "boundary-check"}}};
    if (!actions.count(command)) throw ConfigError("config /command: unknown command '" + command + "'");
    if (!actions.at(command).count(action))
      throw ConfigError("config /action: '" + action + "' is not an action of " + command);
    RunContext rc;
    rc.config = cfg;
    // where and how fast a run executes does not change what it computes
    auto hashed = cfg;
    hashed.erase("output_dir");
    hashed.erase("threads");
    rc.hash = config_hash(hashed);
    rc.threads = static_cast<unsigned>(std::max(1, config::get<int>(cfg, "", "threads", 1)));
    rc.log = &log;
    rc.out = output_dir(config::get<std::string>(cfg, "", "output_dir", ""));
    if (command == "trees") return detail::run_trees(rc);
    if (command == "diagrams") return detail::run_diagrams(rc);
    if (command == "renorm") return detail::run_renorm(rc);
    if (command == "chains") return detail::run_chains(rc, action);
    return action == "fixed-point" ? detail::run_fixed_point(rc) : detail::run_boundary(rc);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace keldren
