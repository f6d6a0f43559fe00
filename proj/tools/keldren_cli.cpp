#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "keldren/run.hpp"

namespace {

// Flag values override file keys; only flags the user actually passed are written.
template <class T>
void put(nlohmann::json& cfg, const CLI::Option* opt, const std::string& section, const std::string& key, const T& v) {
  if (!opt || opt->count() == 0) return;
  if (section.empty())
    cfg[key] = v;
  else
    cfg[section][key] = v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keldren: nonequilibrium diagram renormalization toolkit"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::uint64_t seed = 1;
  int threads = 1;
  auto* o_config = app.add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  auto* o_threads = app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
  auto* o_out = app.add_option("-o,--out", out_dir, "output directory (default $KELDREN_OUT_DIR or .)");

  double eps_lo = 0, eps_hi = 0;
  int eps_n = 0;
  auto* o_lo = app.add_option("--eps-lo", eps_lo, "smallest regulator");
  auto* o_hi = app.add_option("--eps-hi", eps_hi, "largest regulator");
  auto* o_n = app.add_option("--eps-n", eps_n, "number of regulators (log spaced)");

  auto* trees = app.add_subcommand("trees", "rooted tree combinatorics");
  trees->require_subcommand(1);
  trees->fallthrough();
  auto* t_enum = trees->add_subcommand("enumerate", "list right trees as JSON");
  int vertices = 3, shoots = 1;
  auto* o_tv = t_enum->add_option("--vertices", vertices);
  auto* o_ts = t_enum->add_option("--shoots", shoots);

  auto* diagrams = app.add_subcommand("diagrams", "Friedrichs graphs");
  diagrams->require_subcommand(1);
  diagrams->fallthrough();
  auto* d_build = diagrams->add_subcommand("build", "enumerate line topologies as JSON");
  int dv = 2, ds = 0, ends = 4;
  bool labeled = false;
  auto* o_dv = d_build->add_option("--vertices", dv);
  auto* o_ds = d_build->add_option("--shoots", ds);
  auto* o_de = d_build->add_option("--ends", ends);
  auto* o_dl = d_build->add_flag("--labeled", labeled);

  auto* renorm = app.add_subcommand("renorm", "forest subtraction");
  renorm->require_subcommand(1);
  renorm->fallthrough();
  auto* r_scan = renorm->add_subcommand("scan", "bare / counterterm / renormalized pairing versus eps");
  int r_points = 12, r_order = 2;
  auto* o_rp = r_scan->add_option("--points", r_points, "tensor points per momentum axis");
  auto* o_ro = r_scan->add_option("--order", r_order, "Taylor subtraction order");

  auto* chains = app.add_subcommand("chains", "one- and two-chain divergences");
  chains->require_subcommand(1);
  chains->fallthrough();
  std::string sigma;
  int c_order = 1;
  double c_p = 1.0;
  std::size_t samples = 4000;
  auto* c_scan = chains->add_subcommand("scan", "bare and corrected chain pairings versus eps");
  auto* c_cancel = chains->add_subcommand("cancel", "one-chain cancellation check");
  std::vector<CLI::Option*> o_sigma, o_p, o_samples;
  for (auto* sc : {c_scan, c_cancel}) {
    o_sigma.push_back(sc->add_option("--sigma", sigma, "builtin | parametric | zero | path to CSV table"));
    o_p.push_back(sc->add_option("--p", c_p, "external |p|"));
    o_samples.push_back(sc->add_option("--samples", samples, "sunset Monte Carlo samples"));
  }
  auto* o_corder = c_scan->add_option("--order", c_order, "1 or 2");

  auto* kinetics = app.add_subcommand("kinetics", "kinetic equation checks");
  kinetics->require_subcommand(1);
  kinetics->fallthrough();
  auto* k_fixed = kinetics->add_subcommand("fixed-point", "collision integral of Bose-Einstein states");
  double k_tol = 1e-6;
  auto* o_ktol = k_fixed->add_option("--tol", k_tol);
  auto* k_bound = kinetics->add_subcommand("boundary-check", "surface versus impact-parameter boundary term");
  std::string h_kind;
  double strength = 0.5, radius = 1.0, b_tol = 0.02;
  std::vector<double> Rs;
  int b_points = 48;
  auto* o_h = k_bound->add_option("--distribution", h_kind, "two_temperature | shell | quartic | maxwellian | zero");
  auto* o_vs = k_bound->add_option("--strength", strength, "potential height (0 disables the potential)");
  auto* o_vr = k_bound->add_option("--radius", radius, "potential support radius");
  auto* o_R = k_bound->add_option("--R", Rs, "sphere radii");
  auto* o_b = k_bound->add_option("--b-points", b_points, "impact-parameter / cap nodes");
  auto* o_btol = k_bound->add_option("--tol", b_tol, "relative tolerance between the two forms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  nlohmann::json cfg = nlohmann::json::object();
  if (o_config->count()) {
    std::ifstream in(config_path);
    try {
      cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      std::cerr << "usage error: " << config_path << ": " << e.what() << "\n";
      return 2;
    }
  }
  put(cfg, o_seed, "", "seed", seed);
  put(cfg, o_threads, "", "threads", threads);
  put(cfg, o_out, "", "output_dir", out_dir);
  if (o_lo->count() || o_hi->count() || o_n->count()) {
    if (cfg.contains("eps_grid") && cfg["eps_grid"].is_array()) cfg.erase("eps_grid");
    put(cfg, o_lo, "eps_grid", "lo", eps_lo);
    put(cfg, o_hi, "eps_grid", "hi", eps_hi);
    put(cfg, o_n, "eps_grid", "n", eps_n);
  }

  auto chosen = [](CLI::App* parent) { return parent->get_subcommands().front()->get_name(); };
  if (app.get_subcommands().empty()) {
    // the config file names the command and action
    if (!cfg.contains("command")) {
      std::cerr << "usage error: give a subcommand or a config with \"command\"\n";
      return 2;
    }
    return keldren::run(cfg);
  }
  const auto* top = app.get_subcommands().front();
  cfg["command"] = top->get_name();
  if (top == trees) {
    cfg["action"] = chosen(trees);
    put(cfg, o_tv, "trees", "vertices", vertices);
    put(cfg, o_ts, "trees", "shoots", shoots);
  } else if (top == diagrams) {
    cfg["action"] = chosen(diagrams);
    put(cfg, o_dv, "diagrams", "vertices", dv);
    put(cfg, o_ds, "diagrams", "shoots", ds);
    put(cfg, o_de, "diagrams", "ends", ends);
    put(cfg, o_dl, "diagrams", "labeled", labeled);
  } else if (top == renorm) {
    cfg["action"] = chosen(renorm);
    put(cfg, o_rp, "renorm", "points_per_axis", r_points);
    put(cfg, o_ro, "renorm", "order", r_order);
  } else if (top == chains) {
    cfg["action"] = chosen(chains);
    for (std::size_t i = 0; i < o_sigma.size(); ++i) {
      put(cfg, o_sigma[i], "chains", "sigma", sigma);
      put(cfg, o_p[i], "chains", "p", c_p);
      put(cfg, o_samples[i], "chains", "samples", samples);
    }
    put(cfg, o_corder, "chains", "order", c_order);
  } else {
    cfg["action"] = chosen(kinetics);
    put(cfg, o_ktol, "kinetics", "tolerance", k_tol);
    if (o_h->count()) cfg["boundary"]["distributions"] = nlohmann::json::array({{{"kind", h_kind}}});
    if (o_vs->count() || o_vr->count()) {
      if (!cfg.contains("potential")) cfg["potential"] = {{"kind", "bump"}, {"strength", 0.5}, {"radius", 1.0}};
      put(cfg, o_vs, "potential", "strength", strength);
      put(cfg, o_vr, "potential", "radius", radius);
      if (cfg["potential"].value("strength", 0.5) == 0.0) cfg["potential"]["kind"] = "none";
    }
    put(cfg, o_R, "boundary", "R", Rs);
    put(cfg, o_b, "boundary", "b_points", b_points);
    put(cfg, o_btol, "boundary", "tolerance", b_tol);
  }
  return keldren::run(cfg);
}
