#include <gtest/gtest.h>

#include <random>
#include <set>

#include "keldren/friedrichs.hpp"

using namespace keldren;

namespace {

// Pairing oracle: every end either goes to oplus or is matched with an end of
// a comparable, distinct vertex. Topologies are identified by their
// multiplicity of lines per (head, tail) pair.
std::size_t pairing_oracle(const DirectedTree& t, int ends) {
  const int n = t.vertex_count();
  const auto par = t.parents();
  auto above = [&](int lo, int hi) {
    for (int x = par[lo]; x >= 0; x = par[x])
      if (x == hi) return true;
    return false;
  };
  std::vector<int> owner;
  for (int v = 0; v < n; ++v)
    for (int e = 0; e < ends; ++e) owner.push_back(v);
  std::set<std::vector<int>> keys;
  std::vector<int> match(owner.size(), -2);  // -2 unset, -1 oplus
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == owner.size()) {
      std::vector<int> mult(static_cast<std::size_t>(n * n), 0);
      std::vector<int> uf(static_cast<std::size_t>(n + 1));
      std::iota(uf.begin(), uf.end(), 0);
      auto find = [&](int x) {
        while (uf[x] != x) x = uf[x];
        return x;
      };
      for (std::size_t a = 0; a < owner.size(); ++a) {
        if (match[a] == -1) uf[find(owner[a])] = find(n);
        else if (match[a] > static_cast<int>(a)) {
          ++mult[owner[a] * n + owner[match[a]]];
          uf[find(owner[a])] = find(owner[match[a]]);
        }
      }
      for (int v = 0; v < n; ++v)
        if (find(v) != find(n)) return;
      // normalize: (a,b) and (b,a) are the same pair
      std::vector<int> key;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) key.push_back(mult[a * n + b] + mult[b * n + a]);
      keys.insert(key);
      return;
    }
    if (match[i] != -2) {
      self(self, i + 1);
      return;
    }
    match[i] = -1;
    self(self, i + 1);
    for (std::size_t j = i + 1; j < owner.size(); ++j) {
      if (match[j] != -2) continue;
      const int a = owner[i], b = owner[j];
      if (a == b || !(above(a, b) || above(b, a))) continue;
      match[i] = static_cast<int>(j);
      match[j] = static_cast<int>(i);
      self(self, i + 1);
      match[j] = -2;
    }
    match[i] = -2;
  };
  rec(rec, 0);
  return keys.size();
}

FriedrichsDiagram single_vertex_diagram() {
  DirectedTree t(1, {{0, LineKind::root, 0, -1, 0}});
  using enum Sign;
  std::vector<DiagramLine> ls{{0, oplus, 0, plus, minus, minus},
                              {1, oplus, 0, minus, minus, plus},
                              {2, oplus, 0, plus, minus, plus},
                              {3, oplus, 0, minus, minus, minus}};
  return default_diagram(FriedrichsGraph(t, ls));
}

// three-vertex chain 2 -> 1 -> 0 with a diagram line from 2 to 0
FriedrichsDiagram chain_diagram() {
  DirectedTree t(3, {{0, LineKind::internal, 0, 1, 0}, {1, LineKind::internal, 1, 2, 0}, {2, LineKind::root, 0, -1, 0}});
  using enum Sign;
  std::vector<DiagramLine> ls{{0, 0, 2, plus, minus, minus},
                              {1, oplus, 2, minus, minus, minus},
                              {2, oplus, 1, plus, plus, plus},
                              {3, oplus, 1, minus, plus, plus},
                              {4, oplus, 0, minus, minus, minus}};
  FriedrichsGraph g(t, ls);
  auto d = default_diagram(g);
  d.delay[{2, 0}] = 0.1;
  d.delay[{1, 0}] = 0.2;
  d.delay[{0, 0}] = 0.4;
  d.delay[{1, 1}] = 0.05;
  d.validate();
  return d;
}

}  // namespace

TEST(Enumerate, SingleVertexAllExternal) {
  DirectedTree t(1, {{0, LineKind::root, 0, -1, 0}});
  auto topo = enumerate_diagrams(t, 4);
  ASSERT_EQ(topo.size(), 1u);
  EXPECT_EQ(topo[0].external_lines().size(), 4u);
  // labeled: brute force over the 4^4 label words, identified as multisets
  std::set<std::vector<int>> words;
  for (int w = 0; w < 256; ++w) {
    std::vector<int> x{w & 3, (w >> 2) & 3, (w >> 4) & 3, (w >> 6) & 3};
    std::sort(x.begin(), x.end());
    words.insert(x);
  }
  EXPECT_EQ(enumerate_diagrams(t, 4, true).size(), words.size());
  EXPECT_EQ(words.size(), 35u);
}

TEST(Enumerate, MatchesPairingOracle) {
  for (int n = 1; n <= 3; ++n)
    for (const auto& t : enumerate_trees(n, 0))
      for (int ends : {1, 2, 3, 4}) {
        if (n == 3 && ends == 4 && t.encoding() != enumerate_trees(3, 0).front().encoding()) continue;
        EXPECT_EQ(enumerate_diagrams(t, ends).size(), pairing_oracle(t, ends)) << "n=" << n << " ends=" << ends;
      }
  auto two = enumerate_trees(2, 0)[0];
  EXPECT_EQ(enumerate_diagrams(two, 4).size(), 4u);  // 0..3 shared lines; 4 would strand oplus
}

TEST(Enumerate, HeadsAboveTails) {
  for (int n = 2; n <= 3; ++n)
    for (const auto& t : enumerate_trees(n, 0)) {
      const auto leq = partial_order(t);
      for (const auto& g : enumerate_diagrams(t, 4))
        for (const auto& l : g.lines())
          if (!l.external()) EXPECT_TRUE(l.head != l.tail && leq[l.tail][l.head]);
    }
  EXPECT_THROW(enumerate_diagrams(enumerate_trees(5, 0, 6)[0], 4), DiagramError);
}

TEST(Enumerate, AdmissibilityFlag) {
  auto two = enumerate_trees(2, 0)[0];
  int flagged = 0;
  for (const auto& g : enumerate_diagrams(two, 4)) flagged += !g.admissible();
  // with k shared lines there are 8 - 2k external lines: k = 3 leaves 2
  EXPECT_EQ(flagged, 1);
}

TEST(Graph, RejectsBadLines) {
  DirectedTree t(2, {{0, LineKind::internal, 0, 1, 0}, {1, LineKind::root, 0, -1, 0}});
  using enum Sign;
  EXPECT_THROW(FriedrichsGraph(t, {{0, 1, 0, plus, minus, minus}, {1, oplus, 1, plus, minus, minus}}), DiagramError);
  EXPECT_THROW(FriedrichsGraph(t, {{0, 0, 1, plus, minus, minus}}), DiagramError);  // oplus unreachable
  EXPECT_NO_THROW(FriedrichsGraph(t, {{0, 0, 1, plus, minus, minus}, {1, oplus, 0, plus, minus, minus}}));
}

TEST(Routing, InconsistentExternalsRejected) {
  auto d = two_vertex_loop_diagram(true);
  auto ext = two_vertex_loop_externals({0.3, 0, 0}, {0.1, 0, 0}, {0, 0.2, 0});
  EXPECT_THROW(route_momenta(d, ext), RoutingError);
  auto ok = two_vertex_loop_externals({0.3, 0, 0}, {0.3, 0, 0}, {0, 0.2, 0});
  auto r = route_momenta(d, ok);
  EXPECT_EQ(r.loops, 1u);
  EXPECT_DOUBLE_EQ(r.jacobian, 1.0);
}

TEST(Routing, SampledExternalsAreConsistent) {
  std::mt19937_64 rng(3);
  for (int n = 1; n <= 3; ++n)
    for (const auto& t : enumerate_trees(n, 0))
      for (const auto& g : enumerate_diagrams(t, 4)) {
        FriedrichsDiagram d;
        try {
          d = default_diagram(g);
        } catch (const DiagramError&) {
          continue;  // some vertex has only incoming ends
        }
        auto ext = sample_external_momenta(d, rng);
        EXPECT_NO_THROW(route_momenta(d, ext));
      }
}

TEST(Amplitude, ZeroKernelGivesZero) {
  auto d = two_vertex_loop_diagram(false);
  d.vertex_functions[1][0].amplitude = 0.0;
  auto n = OccupationFunction::gaussian(0.5, 1.0);
  auto ext = two_vertex_loop_externals({0.2, 0, 0}, {0, 0.3, 0}, {0.1, 0.1, 0});
  EXPECT_EQ(evaluate_amplitude(d, n, ext, {{0, 1.0}, {1, 0.5}}, 0.1).value, 0.0);
}

TEST(Amplitude, SingleVertexNoIntegration) {
  auto d = single_vertex_diagram();
  auto n = OccupationFunction::gaussian(0.5, 1.0);
  std::map<int, Vec3> ext{{0, {0.1, 0.2, 0}}, {1, {0.3, 0, 0}}, {2, {0, 0.4, 0.1}}, {3, {0, 0, 0}}};
  // conservation at the vertex: lines 0, 2 (Or +) leave, 1, 3 (Or -) enter
  ext[3] = ext[0] + ext[2] - ext[1];
  const double t = 0.8;
  auto v = evaluate_amplitude(d, n, ext, {{0, t}}, 0.05);
  double psi_arg = 0, omega = 0;
  for (const auto& [id, p] : ext) {
    psi_arg += norm2(p);
    omega += as_int(d.graph.line(id).orient) * dispersion(p);
  }
  const cplx expect = std::exp(-psi_arg / 2) * std::exp(I * omega * t);
  EXPECT_LT(std::abs(v.value - expect), 1e-14);
  EXPECT_EQ(v.points, 1u);
}

TEST(Amplitude, OneLoopMatchesDenseGridOracle) {
  auto d = two_vertex_loop_diagram(false);
  auto n = OccupationFunction::gaussian(0.6, 1.0);
  const Vec3 k2{0.3, 0.1, 0}, k3{-0.2, 0.2, 0.1}, k4{0, 0.25, -0.1};
  auto ext = two_vertex_loop_externals(k2, k3, k4);
  const Vec3 k5 = k4 + k2 - k3;
  const std::map<int, double> tau{{0, 0.7}, {1, 0.3}};
  for (std::map<int, double> tt : {std::map<int, double>{{0, 0.0}, {1, 0.0}}, tau}) {
    // oracle: p_a = q, p_b = q + k2 - k3 (conservation at vertex 1)
    cplx oracle = 0;
    const double h = 0.08, L = 6.0;
    for (double x = -L; x <= L; x += h)
      for (double y = -L; y <= L; y += h)
        for (double z = -L; z <= L; z += h) {
          const Vec3 a{x, y, z}, b = a + k2 - k3;
          const double psi = std::exp(-(2 * norm2(a) + 2 * norm2(b) + norm2(k2) + norm2(k3) + norm2(k4) + norm2(k5)) / 2);
          const double G = n(a) * (1 + n(b));  // rho(a+ a) for Or=+, rho(a a+) for Or=-
          const double w_line = dispersion(a) - dispersion(b) + dispersion(k2) - dispersion(k3);
          const double w_root = dispersion(k2) - dispersion(k3) + dispersion(k4) - dispersion(k5);
          oracle += psi * G * std::exp(I * (w_line * tt[0] + w_root * tt[1]));
        }
    oracle *= h * h * h;
    oracle *= std::exp(-0.1 * tt[0]);
    QuadratureSpec grid;
    grid.points_per_axis = 40;
    grid.extent = 5.0;
    auto g = evaluate_amplitude(d, n, ext, tt, 0.1, grid);
    EXPECT_LT(std::abs(g.value - oracle), 1e-6 * std::abs(oracle));
    QuadratureSpec mc;
    mc.max_tensor_points = 0;
    mc.mc_samples = 40000;
    mc.mc_width = 0.8;
    auto m = evaluate_amplitude(d, n, ext, tt, 0.1, mc);
    EXPECT_TRUE(m.monte_carlo);
    EXPECT_LT(std::abs(m.value - oracle), 3 * m.mc_sigma + 1e-12);
    EXPECT_LT(m.mc_sigma, 0.05 * std::abs(oracle));
  }
}

TEST(Amplitude, McIsDeterministicAndBudgetChecked) {
  auto d = two_vertex_loop_diagram(false);
  auto n = OccupationFunction::gaussian(0.6, 1.0);
  auto ext = two_vertex_loop_externals({0.3, 0, 0}, {0, 0.2, 0}, {0, 0, 0.1});
  QuadratureSpec mc;
  mc.max_tensor_points = 0;
  mc.mc_samples = 500;
  auto a = evaluate_amplitude(d, n, ext, {{0, 1.0}, {1, 0.0}}, 0.1, mc);
  mc.threads = 3;
  auto b = evaluate_amplitude(d, n, ext, {{0, 1.0}, {1, 0.0}}, 0.1, mc);
  EXPECT_EQ(a.value, b.value);
  mc.target_rel_sigma = 1e-6;
  EXPECT_THROW(evaluate_amplitude(d, n, ext, {{0, 1.0}, {1, 0.0}}, 0.1, mc), QuadratureError);
}

TEST(Amplitude, StarGivesComplexConjugate) {
  auto n = OccupationFunction::gaussian(0.6, 1.0);
  for (bool pinch : {false, true}) {
    auto d = two_vertex_loop_diagram(pinch);
    auto ext = pinch ? two_vertex_loop_externals({0.3, 0, 0}, {0.3, 0, 0}, {0, 0.1, 0})
                     : two_vertex_loop_externals({0.3, 0, 0}, {0, 0.2, 0}, {0, 0.1, 0});
    d.delay[{1, 0}] = 0.3;
    for (double t : {0.0, 0.9, 4.0}) {
      auto a = evaluate_amplitude(d, n, ext, {{0, t}, {1, 0.4}}, 0.05);
      auto b = evaluate_amplitude(d.star(), n, ext, {{0, t}, {1, 0.4}}, 0.05);
      EXPECT_LT(std::abs(a.value - std::conj(b.value)), 1e-12 * (1 + std::abs(a.value)));
    }
  }
}

TEST(Amplitude, BoundedInTau) {
  auto d = two_vertex_loop_diagram(false);
  auto n = OccupationFunction::gaussian(0.6, 1.0);
  auto ext = two_vertex_loop_externals({0.3, 0, 0}, {0, 0.2, 0}, {0, 0.1, 0});
  const double a0 = std::abs(evaluate_amplitude(d, n, ext, {{0, 0.0}, {1, 0.0}}, 0.01).value);
  for (double t : log_grid(1e-2, 1e4, 13)) {
    const double a = std::abs(evaluate_amplitude(d, n, ext, {{0, t}, {1, t}}, 0.01).value);
    EXPECT_LE(a, a0 * (1 + 1e-9));
  }
}

TEST(Quotient, EmptySetIsIdentity) {
  auto d = chain_diagram();
  std::map<int, double> tau{{0, 0.5}, {1, 0.25}, {2, 1.0}};
  auto q = quotient_diagram(d, {}, tau);
  EXPECT_EQ(q.diagram.graph.lines(), d.graph.lines());
  EXPECT_EQ(q.diagram.delay, d.delay);
  EXPECT_EQ(q.tau, tau);
  EXPECT_EQ(q.diagram.absorbed_time, 0.0);
}

TEST(Quotient, DelaysAccumulateAlongContractedPath) {
  auto d = chain_diagram();
  std::map<int, double> tau{{0, 0.5}, {1, 0.25}, {2, 1.0}};
  auto q = quotient_diagram(d, {0, 1}, tau);
  EXPECT_EQ(q.diagram.graph.tree().vertex_count(), 1);
  // line 0 runs 2 -> 0: h sums 0.1 + 0.2 + 0.4 and both contracted times
  EXPECT_NEAR(q.diagram.delay_of(0, 0), 0.1 + 0.2 + 0.4 + 0.5 + 0.25, 1e-15);
  // line 1 runs 2 -> oplus: both contracted lines lie on its path
  EXPECT_NEAR(q.diagram.delay_of(0, 1), 0.05 + 0.5 + 0.25, 1e-15);
  // line 2 starts at vertex 1: only the upper contracted line is on its path
  EXPECT_NEAR(q.diagram.delay_of(0, 2), 0.5, 1e-15);
  EXPECT_NEAR(q.diagram.delay_of(0, 4), 0.0, 1e-15);
  EXPECT_EQ(q.tau, (std::map<int, double>{{2, 1.0}}));
  EXPECT_EQ(q.diagram.graph.lines().size(), d.graph.lines().size());
  EXPECT_EQ(q.diagram.graph.external_lines(), d.graph.external_lines());
  // stepwise contraction agrees
  auto q1 = quotient_diagram(d, {1}, tau);
  auto q2 = quotient_diagram(q1.diagram, {0}, q1.tau);
  EXPECT_EQ(q2.diagram.delay.size(), q.diagram.delay.size());
  for (const auto& [k, h] : q.diagram.delay) EXPECT_NEAR(q2.diagram.delay.at(k), h, 1e-15);
}

TEST(Quotient, AmplitudeMatchesBaseDiagram) {
  auto n = OccupationFunction::gaussian(0.6, 1.0);
  auto d = two_vertex_loop_diagram(false);
  d.delay[{1, 0}] = 0.2;
  d.delay[{0, 2}] = 0.1;
  auto ext = two_vertex_loop_externals({0.3, 0, 0}, {0, 0.2, 0}, {0, 0.1, 0});
  std::map<int, double> tau{{0, 1.3}, {1, 0.6}};
  auto q = quotient_diagram(d, {0}, tau);
  EXPECT_EQ(q.diagram.graph.tree().vertex_count(), 1);
  auto base = evaluate_amplitude(d, n, ext, tau, 0.05);
  auto quot = evaluate_amplitude(q.diagram, n, ext, q.tau, 0.05);
  EXPECT_LT(std::abs(base.value - quot.value), 1e-13 * std::abs(base.value));
  // chain: contract one line at a time
  auto c = chain_diagram();
  std::mt19937_64 rng(5);
  auto cext = sample_external_momenta(c, rng);
  std::map<int, double> ct{{0, 0.5}, {1, 0.25}, {2, 1.0}};
  const auto full = evaluate_amplitude(c, n, cext, ct, 0.05).value;
  for (std::vector<int> A : {std::vector<int>{0}, {1}, {0, 1}}) {
    auto qc = quotient_diagram(c, A, ct);
    EXPECT_LT(std::abs(evaluate_amplitude(qc.diagram, n, cext, qc.tau, 0.05).value - full), 1e-13);
  }
}

TEST(Diagram, JsonHasStructure) {
  auto d = chain_diagram();
  auto j = d.to_json();
  EXPECT_EQ(j["graph"]["lines"].size(), 5u);
  auto g = FriedrichsGraph::from_json(j["graph"]);
  EXPECT_EQ(g.lines(), d.graph.lines());
  EXPECT_EQ(j["delay"].size(), 4u);
}
