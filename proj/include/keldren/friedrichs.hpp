#pragma once
// Friedrichs diagrams: momentum lines drawn over a correlation tree plus the
// external vertex (oplus), their enumeration, and numeric evaluation of the
// regularized amplitude
//
//   A(tau) = int dq  prod_v psi_v  prod_{r internal} G_r(p_r)
//            exp(i sum_r Or(r) omega(p_r) T_r)  exp(-eps * sum_i tau_i)
//
// where T_r is the time accumulated along the increasing tree path of r plus
// the delays h(v, r), and the damping runs over internal tree lines.
//
// Momentum flow convention: a line with Or = + carries p_r from its tail
// into its head; Or = - reverses the arrow.

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "keldren/numerics.hpp"
#include "keldren/occupancy.hpp"
#include "keldren/trees.hpp"

namespace keldren {

inline constexpr int oplus = -1;

class DiagramError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DiagramLine {
  int id = 0;
  int head = oplus;  // upper end: tree vertex or oplus
  int tail = 0;      // lower end: tree vertex
  Sign orient = Sign::plus;
  Sign g_head = Sign::minus;  // ignored for external lines
  Sign g_tail = Sign::minus;

  bool external() const { return head == oplus; }
  /// +1 when momentum flows into the given end.
  int sign_at(bool at_head) const { return at_head ? as_int(orient) : -as_int(orient); }
  bool operator==(const DiagramLine&) const = default;
};

struct LineEnd {
  int line = 0;
  bool head = false;
  auto operator<=>(const LineEnd&) const = default;
};

class FriedrichsGraph {
 public:
  FriedrichsGraph() = default;
  FriedrichsGraph(DirectedTree tree, std::vector<DiagramLine> lines, bool allow_loops = false)
      : tree_(std::move(tree)), lines_(std::move(lines)), loops_(allow_loops) {
    validate();
  }

  const DirectedTree& tree() const { return tree_; }
  const std::vector<DiagramLine>& lines() const { return lines_; }
  bool allows_loops() const { return loops_; }

  const DiagramLine& line(int id) const {
    for (const auto& l : lines_)
      if (l.id == id) return l;
    throw DiagramError("no diagram line " + std::to_string(id));
  }
  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < lines_.size(); ++i)
      if (lines_[i].id == id) return i;
    throw DiagramError("no diagram line " + std::to_string(id));
  }

  std::vector<int> external_lines() const {
    std::vector<int> out;
    for (const auto& l : lines_)
      if (l.external()) out.push_back(l.id);
    return out;
  }

  /// Every line crosses the root line of its component when it goes to
  /// oplus; the admissible diagrams have at least three of them per root.
  bool admissible() const {
    for (int root : tree_.root_lines()) {
      int crossing = 0;
      for (const auto& l : lines_) {
        const auto p = tree_path(l);
        crossing += std::count(p.begin(), p.end(), root) > 0;
      }
      if (crossing < 3) return false;
    }
    return true;
  }

  /// Tree lines on the increasing path from tail to head (the root line is
  /// included when the head is oplus).
  std::vector<int> tree_path(const DiagramLine& l) const {
    std::vector<int> path;
    const auto par = tree_.parents();
    int v = l.tail;
    while (v != l.head) {
      path.push_back(tree_.up_line(v));
      if (par[v] < 0) {
        if (l.head != oplus) throw DiagramError("line head is not above its tail");
        break;
      }
      v = par[v];
    }
    return path;
  }

  /// Tree vertices v with head >= v >= tail.
  std::vector<int> path_vertices(const DiagramLine& l) const {
    std::vector<int> vs;
    const auto par = tree_.parents();
    for (int v = l.tail; v >= 0; v = par[v]) {
      vs.push_back(v);
      if (v == l.head) break;
    }
    return vs;
  }

  /// The conjugate graph: every orientation and end sign flipped.
  FriedrichsGraph star() const {
    auto ls = lines_;
    for (auto& l : ls) {
      l.orient = flip(l.orient);
      l.g_head = flip(l.g_head);
      l.g_tail = flip(l.g_tail);
    }
    return FriedrichsGraph(tree_, ls, loops_);
  }

  /// Ends of all lines attached to vertex v.
  std::vector<LineEnd> ends_at(int v) const {
    std::vector<LineEnd> e;
    for (const auto& l : lines_) {
      if (l.head == v) e.push_back({l.id, true});
      if (l.tail == v) e.push_back({l.id, false});
    }
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : lines_) {
      nlohmann::json j{{"id", l.id},
                       {"head", l.head == oplus ? nlohmann::json("oplus") : nlohmann::json(l.head + 1)},
                       {"tail", l.tail + 1},
                       {"or", std::string(1, as_char(l.orient))},
                       {"g_tail", std::string(1, as_char(l.g_tail))}};
      j["g_head"] = std::string(1, as_char(l.g_head));
      ls.push_back(j);
    }
    return {{"tree", tree_.to_json()}, {"lines", ls}, {"admissible", admissible()}};
  }

  static FriedrichsGraph from_json(const nlohmann::json& j) {
    std::vector<DiagramLine> ls;
    for (const auto& jl : j.at("lines")) {
      DiagramLine l;
      l.id = jl.at("id").get<int>();
      const auto& h = jl.at("head");
      l.head = h.is_string() ? oplus : h.get<int>() - 1;
      l.tail = jl.at("tail").get<int>() - 1;
      l.orient = sign_from_char(jl.at("or").get<std::string>().at(0));
      l.g_tail = sign_from_char(jl.at("g_tail").get<std::string>().at(0));
      if (jl.contains("g_head")) l.g_head = sign_from_char(jl.at("g_head").get<std::string>().at(0));
      ls.push_back(l);
    }
    return FriedrichsGraph(DirectedTree::from_json(j.at("tree")), ls);
  }

 private:
  void validate() const {
    tree_.require_right();
    const int n = tree_.vertex_count();
    const auto leq = partial_order(tree_);
    std::set<int> ids;
    for (const auto& l : lines_) {
      if (!ids.insert(l.id).second) throw DiagramError("duplicate diagram line id");
      if (l.tail < 0 || l.tail >= n) throw DiagramError("line tail must be a tree vertex");
      if (l.head != oplus) {
        if (l.head < 0 || l.head >= n) throw DiagramError("line head out of range");
        const bool loop = l.head == l.tail;
        if (loop && !loops_) throw DiagramError("loops are only allowed in quotient diagrams");
        if (!loop && !leq[l.tail][l.head]) throw DiagramError("line head must lie strictly above its tail");
      }
    }
    // connected once oplus is added as an extra vertex (index n)
    std::vector<int> uf(static_cast<std::size_t>(n + 1));
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](int x) {
      while (uf[x] != x) x = uf[x] = uf[uf[x]];
      return x;
    };
    for (const auto& l : lines_) uf[find(l.tail)] = find(l.head == oplus ? n : l.head);
    for (int v = 0; v < n; ++v)
      if (find(v) != find(n)) throw DiagramError("diagram graph is not connected through oplus");
  }

  DirectedTree tree_;
  std::vector<DiagramLine> lines_;
  bool loops_ = false;
};

/// All line topologies over the tree with exactly `ends` line ends per
/// vertex, ordered by the multiplicity vector. With `labeled` every
/// distinct assignment of (Or, g) labels is produced as well.
inline std::vector<FriedrichsGraph> enumerate_diagrams(const DirectedTree& t, int ends = 4, bool labeled = false,
                                                       int vertex_cap = 4, int ends_cap = 6) {
  if (t.vertex_count() > vertex_cap) throw DiagramError("enumerate_diagrams: vertex cap exceeded");
  if (ends > ends_cap || ends < 1) throw DiagramError("enumerate_diagrams: line-end cap exceeded");
  t.require_right();
  const int n = t.vertex_count();
  const auto leq = partial_order(t);
  std::vector<std::pair<int, int>> pairs;  // (head, tail)
  for (int tail = 0; tail < n; ++tail)
    for (int head = 0; head < n; ++head)
      if (head != tail && leq[tail][head]) pairs.emplace_back(head, tail);

  std::vector<std::vector<int>> topologies;
  std::vector<int> k(pairs.size(), 0), used(static_cast<std::size_t>(n), 0);
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == pairs.size()) {
      topologies.push_back(k);
      return;
    }
    auto [h, tl] = pairs[i];
    for (int c = 0; used[h] + c <= ends && used[tl] + c <= ends; ++c) {
      k[i] = c;
      used[h] += c;
      used[tl] += c;
      self(self, i + 1);
      used[h] -= c;
      used[tl] -= c;
    }
    k[i] = 0;
  };
  rec(rec, 0);

  std::vector<FriedrichsGraph> out;
  for (const auto& kv : topologies) {
    // groups of interchangeable lines: (head, tail) with multiplicity
    std::vector<std::pair<std::pair<int, int>, int>> groups;
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (kv[i] > 0) {
        groups.push_back({pairs[i], kv[i]});
        deg[pairs[i].first] += kv[i];
        deg[pairs[i].second] += kv[i];
      }
    for (int v = 0; v < n; ++v)
      if (ends - deg[v] > 0) groups.push_back({{oplus, v}, ends - deg[v]});

    // label choices: 8 for internal lines, 4 for external lines, chosen as multisets
    std::vector<std::vector<std::vector<int>>> choices;
    for (const auto& [hp, mult] : groups) {
      const int nlab = labeled ? (hp.first == oplus ? 4 : 8) : 1;
      std::vector<std::vector<int>> ms;
      std::vector<int> cur;
      auto mrec = [&](auto&& self, int start) -> void {
        if (static_cast<int>(cur.size()) == mult) {
          ms.push_back(cur);
          return;
        }
        for (int x = start; x < nlab; ++x) {
          cur.push_back(x);
          self(self, x);
          cur.pop_back();
        }
      };
      mrec(mrec, 0);
      choices.push_back(ms);
    }
    std::vector<std::size_t> pick(choices.size(), 0);
    while (true) {
      std::vector<DiagramLine> ls;
      int id = 0;
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto [hp, mult] = groups[gi];
        for (int lab : choices[gi][pick[gi]]) {
          DiagramLine l;
          l.id = id++;
          l.head = hp.first;
          l.tail = hp.second;
          l.orient = (lab & 1) ? Sign::minus : Sign::plus;
          l.g_tail = (lab & 2) ? Sign::plus : Sign::minus;
          l.g_head = (lab & 4) ? Sign::plus : Sign::minus;
          ls.push_back(l);
        }
      }
      try {
        out.emplace_back(t, ls);
      } catch (const DiagramError&) {
        // disconnected through oplus
      }
      std::size_t i = 0;
      while (i < pick.size() && ++pick[i] == choices[i].size()) pick[i++] = 0;
      if (i == pick.size()) break;
    }
  }
  return out;
}

/// Smooth kernel psi_v with one momentum-conservation delta per block.
/// Default kernel: amplitude * exp(-sum |p|^2 / (2 width^2)) over the
/// momenta of the listed ends.
struct VertexFunction {
  std::vector<std::vector<LineEnd>> blocks;
  double amplitude = 1.0;
  double width = 1.0;
  std::function<double(const std::vector<Vec3>&)> kernel;  // optional override, momenta in end order

  std::vector<LineEnd> ends() const {
    std::vector<LineEnd> e;
    for (const auto& b : blocks) e.insert(e.end(), b.begin(), b.end());
    return e;
  }

  double operator()(const std::vector<Vec3>& p) const {
    if (kernel) return kernel(p);
    double s = 0;
    for (const auto& x : p) s += norm2(x);
    return amplitude * std::exp(-s / (2.0 * width * width));
  }
};

struct FriedrichsDiagram {
  FriedrichsGraph graph;
  std::map<int, std::vector<VertexFunction>> vertex_functions;  // tree vertex -> factors
  std::map<std::pair<int, int>, double> delay;                   // (vertex, line) -> h
  double absorbed_time = 0.0;  // total time of contracted tree lines (regulator bookkeeping)

  /// Checks the per-vertex block structure and the delay domain.
  void validate() const {
    const int n = graph.tree().vertex_count();
    for (int v = 0; v < n; ++v) {
      std::vector<LineEnd> want = graph.ends_at(v), have;
      auto it = vertex_functions.find(v);
      if (it != vertex_functions.end())
        for (const auto& f : it->second) {
          for (const auto& b : f.blocks) {
            if (b.empty()) throw DiagramError("empty conservation block");
            if (!graph.allows_loops() &&
                std::none_of(b.begin(), b.end(), [](const LineEnd& e) { return !e.head; }))
              throw DiagramError("every block needs an end (r, f-(r)) at vertex " + std::to_string(v + 1));
          }
          auto e = f.ends();
          have.insert(have.end(), e.begin(), e.end());
        }
      std::sort(want.begin(), want.end());
      std::sort(have.begin(), have.end());
      if (want != have) throw DiagramError("vertex function blocks must cover the ends at vertex " + std::to_string(v + 1));
    }
    std::set<std::pair<int, int>> domain;
    for (const auto& l : graph.lines())
      for (int v : graph.path_vertices(l)) domain.insert({v, l.id});
    for (const auto& [key, h] : delay) {
      if (!domain.count(key)) throw DiagramError("delay defined outside head >= v >= tail");
      if (!(h >= 0.0)) throw DiagramError("delays must be >= 0");
    }
  }

  double delay_of(int v, int line) const {
    auto it = delay.find({v, line});
    return it == delay.end() ? 0.0 : it->second;
  }

  /// Same diagram with every orientation and end sign flipped.
  FriedrichsDiagram star() const {
    FriedrichsDiagram d = *this;
    d.graph = graph.star();
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json vf = nlohmann::json::array();
    for (const auto& [v, fs] : vertex_functions)
      for (const auto& f : fs) {
        nlohmann::json blocks = nlohmann::json::array();
        for (const auto& b : f.blocks) {
          nlohmann::json jb = nlohmann::json::array();
          for (const auto& e : b) jb.push_back({{"line", e.line}, {"end", e.head ? "head" : "tail"}});
          blocks.push_back(jb);
        }
        vf.push_back({{"vertex", v + 1}, {"amplitude", f.amplitude}, {"width", f.width}, {"blocks", blocks},
                      {"custom_kernel", static_cast<bool>(f.kernel)}});
      }
    nlohmann::json dl = nlohmann::json::array();
    for (const auto& [key, h] : delay) dl.push_back({{"vertex", key.first + 1}, {"line", key.second}, {"h", h}});
    return {{"graph", graph.to_json()}, {"vertex_functions", vf}, {"delay", dl}, {"absorbed_time", absorbed_time}};
  }
};

/// One Gaussian factor per vertex with a single block holding all its ends.
inline FriedrichsDiagram default_diagram(const FriedrichsGraph& g, double width = 1.0) {
  FriedrichsDiagram d{g, {}, {}, 0.0};
  for (int v = 0; v < g.tree().vertex_count(); ++v) {
    VertexFunction f;
    f.width = width;
    f.blocks.push_back(g.ends_at(v));
    d.vertex_functions[v].push_back(f);
  }
  d.validate();
  return d;
}

struct QuotientDiagram {
  FriedrichsDiagram diagram;
  std::map<int, double> tau;  // times of the surviving tree lines
  std::vector<int> merge;     // old vertex -> new vertex
};

/// Contracts the tree lines in A. Diagram lines keep their ids; lines whose
/// ends merge become loops of the new vertex. Their accumulated time moves
/// into the delays: h_A(v0, r) = sum_{v in v0, v in V_r} h(v, r) + sum of
/// tau over lines of A inside v0 on the path of r.
inline QuotientDiagram quotient_diagram(const FriedrichsDiagram& d, const std::vector<int>& A,
                                        const std::map<int, double>& tau) {
  const auto& g = d.graph;
  const auto q = quotient_tree(g.tree(), A);
  std::set<int> aset(A.begin(), A.end());
  std::vector<DiagramLine> ls;
  for (auto l : g.lines()) {
    l.tail = q.merge[l.tail];
    if (l.head != oplus) l.head = q.merge[l.head];
    ls.push_back(l);
  }
  QuotientDiagram out;
  out.merge = q.merge;
  out.diagram.graph = FriedrichsGraph(q.tree, ls, true);
  for (const auto& [v, fs] : d.vertex_functions) {
    auto& dst = out.diagram.vertex_functions[q.merge[v]];
    dst.insert(dst.end(), fs.begin(), fs.end());
  }
  for (const auto& l : g.lines()) {
    std::map<int, double> acc;
    for (int v : g.path_vertices(l)) {
      const double h = d.delay_of(v, l.id);
      if (h != 0.0) acc[q.merge[v]] += h;
    }
    for (int tl : g.tree_path(l))
      if (aset.count(tl)) acc[q.merge[g.tree().lower_vertex(tl)]] += tau.at(tl);
    for (const auto& [v0, h] : acc) out.diagram.delay[{v0, l.id}] = h;
  }
  out.diagram.absorbed_time = d.absorbed_time;
  for (int a : A) out.diagram.absorbed_time += tau.at(a);
  for (const auto& [id, t] : tau)
    if (!aset.count(id)) out.tau[id] = t;
  out.diagram.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Momentum routing

class RoutingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solution of the vertex conservation system: every line momentum as
/// base + sum_j coeff[j] * q_j over the free loop momenta q_j.
struct MomentumRouting {
  std::size_t loops = 0;
  std::vector<Vec3> base;                   // per line index
  std::vector<std::vector<double>> coeff;   // per line index, per loop
  double jacobian = 1.0;                    // 1/|det|^3 of the eliminated deltas

  std::vector<Vec3> momenta(const std::vector<Vec3>& q) const {
    std::vector<Vec3> p = base;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < loops; ++j)
        if (coeff[i][j] != 0.0) p[i] += coeff[i][j] * q[j];
    return p;
  }
};

namespace detail {
// Rows: one per conservation block; columns: line indices; entries: +-1.
inline std::vector<std::vector<double>> conservation_matrix(const FriedrichsDiagram& d) {
  const auto& g = d.graph;
  std::vector<std::vector<double>> rows;
  for (const auto& [v, fs] : d.vertex_functions)
    for (const auto& f : fs)
      for (const auto& b : f.blocks) {
        std::vector<double> row(g.lines().size(), 0.0);
        for (const auto& e : b) row[g.index_of(e.line)] += g.line(e.line).sign_at(e.head);
        rows.push_back(row);
      }
  return rows;
}
}  // namespace detail

inline MomentumRouting route_momenta(const FriedrichsDiagram& d, const std::map<int, Vec3>& ext) {
  const auto& g = d.graph;
  const std::size_t m = g.lines().size();
  std::vector<int> unknown;
  std::vector<bool> is_unknown(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& l = g.lines()[i];
    if (l.external()) {
      if (!ext.count(l.id)) throw RoutingError("missing external momentum for line " + std::to_string(l.id));
    } else {
      unknown.push_back(static_cast<int>(i));
      is_unknown[i] = true;
    }
  }
  auto M = detail::conservation_matrix(d);
  // augment with the known right-hand side: row . p = 0  =>  row_U p_U = -row_E p_E
  const std::size_t R = M.size(), U = unknown.size();
  std::vector<std::vector<double>> A(R, std::vector<double>(U, 0.0));
  std::vector<Vec3> rhs(R, Vec3{0, 0, 0});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < U; ++c) A[r][c] = M[r][unknown[c]];
    for (std::size_t i = 0; i < m; ++i)
      if (!is_unknown[i] && M[r][i] != 0.0) rhs[r] += (-M[r][i]) * ext.at(g.lines()[i].id);
  }
  // forward elimination with partial pivoting
  std::vector<int> pivot_col;
  double det = 1.0;
  std::size_t row = 0;
  for (std::size_t c = 0; c < U && row < R; ++c) {
    std::size_t best = row;
    for (std::size_t r = row; r < R; ++r)
      if (std::abs(A[r][c]) > std::abs(A[best][c])) best = r;
    if (std::abs(A[best][c]) < 1e-12) continue;
    std::swap(A[best], A[row]);
    std::swap(rhs[best], rhs[row]);
    det *= A[row][c];
    for (std::size_t r = row + 1; r < R; ++r) {
      const double f = A[r][c] / A[row][c];
      if (f == 0.0) continue;
      for (std::size_t cc = c; cc < U; ++cc) A[r][cc] -= f * A[row][cc];
      rhs[r] += (-f) * rhs[row];
    }
    pivot_col.push_back(static_cast<int>(c));
    ++row;
  }
  double scale = 1.0;
  for (const auto& [id, p] : ext) scale = std::max(scale, norm(p));
  for (std::size_t r = row; r < R; ++r)
    if (norm(rhs[r]) > 1e-9 * scale)
      throw RoutingError("external momenta violate momentum conservation");
  // free columns are loop momenta
  std::vector<int> free_cols;
  for (std::size_t c = 0; c < U; ++c)
    if (std::find(pivot_col.begin(), pivot_col.end(), static_cast<int>(c)) == pivot_col.end())
      free_cols.push_back(static_cast<int>(c));
  MomentumRouting out;
  out.loops = free_cols.size();
  out.base.assign(m, Vec3{0, 0, 0});
  out.coeff.assign(m, std::vector<double>(out.loops, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    if (!is_unknown[i]) out.base[i] = ext.at(g.lines()[i].id);
  for (std::size_t j = 0; j < free_cols.size(); ++j) out.coeff[unknown[free_cols[j]]][j] = 1.0;
  // back substitution
  for (std::size_t k = pivot_col.size(); k-- > 0;) {
    const int c = pivot_col[k];
    Vec3 b = rhs[k];
    std::vector<double> co(out.loops, 0.0);
    for (std::size_t cc = static_cast<std::size_t>(c) + 1; cc < U; ++cc) {
      if (A[k][cc] == 0.0) continue;
      const auto li = static_cast<std::size_t>(unknown[cc]);
      b += (-A[k][cc]) * out.base[li];
      for (std::size_t j = 0; j < out.loops; ++j) co[j] -= A[k][cc] * out.coeff[li][j];
    }
    const auto li = static_cast<std::size_t>(unknown[c]);
    out.base[li] = (1.0 / A[k][c]) * b;
    for (std::size_t j = 0; j < out.loops; ++j) out.coeff[li][j] = co[j] / A[k][c];
  }
  out.jacobian = 1.0 / std::pow(std::abs(det), 3);
  return out;
}

/// Random external momenta satisfying every conservation block.
template <class Rng>
std::map<int, Vec3> sample_external_momenta(const FriedrichsDiagram& d, Rng& rng, double scale = 0.5) {
  const auto& g = d.graph;
  auto M = detail::conservation_matrix(d);
  const std::size_t m = g.lines().size();
  // reduced row echelon form over all line columns; free columns get random values
  std::vector<int> piv;
  std::size_t row = 0;
  for (std::size_t c = 0; c < m && row < M.size(); ++c) {
    std::size_t best = row;
    for (std::size_t r = row; r < M.size(); ++r)
      if (std::abs(M[r][c]) > std::abs(M[best][c])) best = r;
    if (std::abs(M[best][c]) < 1e-12) continue;
    std::swap(M[best], M[row]);
    const double p = M[row][c];
    for (auto& x : M[row]) x /= p;
    for (std::size_t r = 0; r < M.size(); ++r)
      if (r != row && M[r][c] != 0.0) {
        const double f = M[r][c];
        for (std::size_t cc = 0; cc < m; ++cc) M[r][cc] -= f * M[row][cc];
      }
    piv.push_back(static_cast<int>(c));
    ++row;
  }
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<Vec3> p(m, Vec3{0, 0, 0});
  std::vector<bool> is_piv(m, false);
  for (int c : piv) is_piv[c] = true;
  for (std::size_t c = 0; c < m; ++c)
    if (!is_piv[c]) p[c] = {nd(rng), nd(rng), nd(rng)};
  for (std::size_t k = 0; k < piv.size(); ++k) {
    Vec3 s{0, 0, 0};
    for (std::size_t c = 0; c < m; ++c)
      if (static_cast<int>(c) != piv[k] && M[k][c] != 0.0) s += (-M[k][c]) * p[c];
    p[piv[k]] = s;
  }
  std::map<int, Vec3> ext;
  for (std::size_t i = 0; i < m; ++i)
    if (g.lines()[i].external()) ext[g.lines()[i].id] = p[i];
  return ext;
}

// ---------------------------------------------------------------------------
// Integrand pieces

/// psi products, G-factors and the routing Jacobian at given line momenta.
inline double static_factor(const FriedrichsDiagram& d, const OccupationFunction& n,
                            const std::vector<Vec3>& p, double jacobian) {
  const auto& g = d.graph;
  double f = jacobian;
  for (const auto& [v, fs] : d.vertex_functions)
    for (const auto& vf : fs) {
      std::vector<Vec3> args;
      for (const auto& e : vf.ends()) args.push_back(p[g.index_of(e.line)]);
      f *= vf(args);
      if (f == 0.0) return 0.0;
    }
  for (std::size_t i = 0; i < g.lines().size(); ++i) {
    const auto& l = g.lines()[i];
    if (l.external()) continue;
    f *= g_factor(l.orient, l.g_head, l.g_tail, n(p[i]));
    if (f == 0.0) return 0.0;
  }
  return f;
}

/// Precomputed per-line bookkeeping: the tree lines each diagram line crosses
/// and its summed delay.
struct LineBook {
  std::vector<std::vector<int>> paths;  // per line index
  std::vector<double> delays;           // per line index
  std::vector<int> tree_lines;          // all non-shoot tree lines
  std::vector<int> internal_tree_lines;

  explicit LineBook(const FriedrichsDiagram& d) {
    const auto& g = d.graph;
    for (const auto& l : g.lines()) {
      paths.push_back(l.head == l.tail ? std::vector<int>{} : g.tree_path(l));
      double h = 0;
      for (int v : g.path_vertices(l)) h += d.delay_of(v, l.id);
      delays.push_back(h);
    }
    internal_tree_lines = g.tree().internal_lines();
    tree_lines = internal_tree_lines;
    for (int r : g.tree().root_lines()) tree_lines.push_back(r);
  }

  /// Omega_l = sum over diagram lines crossing tree line l of Or * omega(p).
  std::map<int, double> frequencies(const FriedrichsDiagram& d, const std::vector<Vec3>& p) const {
    std::map<int, double> w;
    for (int t : tree_lines) w[t] = 0.0;
    const auto& ls = d.graph.lines();
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const double e = as_int(ls[i].orient) * dispersion(p[i]);
      for (int t : paths[i]) w[t] += e;
    }
    return w;
  }

  double delay_phase(const FriedrichsDiagram& d, const std::vector<Vec3>& p) const {
    double s = 0;
    const auto& ls = d.graph.lines();
    for (std::size_t i = 0; i < ls.size(); ++i) s += as_int(ls[i].orient) * dispersion(p[i]) * delays[i];
    return s;
  }
};

// ---------------------------------------------------------------------------
// Quadrature over loop momenta

struct QuadratureSpec {
  int points_per_axis = 20;
  double extent = 4.5;                  // tensor grid covers [-extent, extent] per component
  std::size_t max_tensor_points = 1'000'000;
  std::size_t mc_samples = 20000;
  double mc_width = 1.0;                // Gaussian importance density per component
  std::uint64_t seed = 1;
  double target_rel_sigma = std::numeric_limits<double>::infinity();
  unsigned threads = 1;

  nlohmann::json to_json() const {
    return {{"points_per_axis", points_per_axis}, {"extent", extent}, {"max_tensor_points", max_tensor_points},
            {"mc_samples", mc_samples}, {"mc_width", mc_width}, {"seed", seed}};
  }
};

struct IntegralResult {
  cplx value;
  double mc_sigma = 0.0;  // zero for deterministic grids
  std::size_t points = 0;
  bool monte_carlo = false;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integrates fn(line momenta) -> complex vector (fixed length) over the
/// loop momenta. Vector-valued so several pairings share the same points.
template <class F>
std::vector<IntegralResult> integrate_loops_multi(const MomentumRouting& r, const QuadratureSpec& spec,
                                                  std::size_t width, F&& fn) {
  const std::size_t dim = 3 * r.loops;
  std::vector<IntegralResult> out(width);
  if (dim == 0) {
    auto v = fn(r.base);
    for (std::size_t k = 0; k < width; ++k) out[k] = {v[k] * r.jacobian, 0.0, 1, false};
    return out;
  }
  const double pts = std::pow(static_cast<double>(spec.points_per_axis), static_cast<double>(dim));
  auto loop_vec = [&](const std::vector<double>& x) {
    std::vector<Vec3> q(r.loops);
    for (std::size_t j = 0; j < r.loops; ++j) q[j] = {x[3 * j], x[3 * j + 1], x[3 * j + 2]};
    return q;
  };
  if (pts <= static_cast<double>(spec.max_tensor_points)) {
    const auto rule = gauss_legendre(static_cast<std::size_t>(spec.points_per_axis), -spec.extent, spec.extent);
    const auto total = static_cast<std::size_t>(pts);
    std::vector<std::vector<cplx>> partial(total);
    parallel_for(total, spec.threads, [&](std::size_t idx) {
      std::vector<double> x(dim);
      double w = 1.0;
      std::size_t rest = idx;
      for (std::size_t a = 0; a < dim; ++a) {
        const std::size_t k = rest % rule.nodes.size();
        rest /= rule.nodes.size();
        x[a] = rule.nodes[k];
        w *= rule.weights[k];
      }
      auto v = fn(r.momenta(loop_vec(x)));
      for (auto& z : v) z *= w;
      partial[idx] = std::move(v);
    });
    std::vector<cplx> sum(width, 0.0);
    for (const auto& v : partial)
      for (std::size_t k = 0; k < width; ++k) sum[k] += v[k];
    for (std::size_t k = 0; k < width; ++k) out[k] = {sum[k] * r.jacobian, 0.0, total, false};
    return out;
  }
  // Monte Carlo with a Gaussian importance density; one seeded stream per sample
  const std::size_t N = spec.mc_samples;
  if (N < 2) throw QuadratureError("Monte Carlo needs at least 2 samples");
  std::vector<std::vector<cplx>> samples(N);
  const double s2 = spec.mc_width * spec.mc_width;
  parallel_for(N, spec.threads, [&](std::size_t i) {
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + i);
    std::normal_distribution<double> nd(0.0, spec.mc_width);
    std::vector<double> x(dim);
    double log_pdf = 0;
    for (auto& c : x) {
      c = nd(rng);
      log_pdf += -c * c / (2 * s2) - 0.5 * std::log(2 * pi * s2);
    }
    auto v = fn(r.momenta(loop_vec(x)));
    const double w = std::exp(-log_pdf);
    for (auto& z : v) z *= w;
    samples[i] = std::move(v);
  });
  for (std::size_t k = 0; k < width; ++k) {
    cplx mean = 0;
    for (const auto& v : samples) mean += v[k];
    mean /= static_cast<double>(N);
    double var = 0;
    for (const auto& v : samples) var += std::norm(v[k] - mean);
    var /= static_cast<double>(N - 1);
    const double sigma = std::sqrt(var / static_cast<double>(N)) * r.jacobian;
    out[k] = {mean * r.jacobian, sigma, N, true};
    if (std::isfinite(spec.target_rel_sigma) && sigma > spec.target_rel_sigma * std::abs(out[k].value))
      throw QuadratureError("Monte Carlo budget exhausted before reaching target variance");
  }
  return out;
}

template <class F>
IntegralResult integrate_loops(const MomentumRouting& r, const QuadratureSpec& spec, F&& fn) {
  return integrate_loops_multi(r, spec, 1, [&](const std::vector<Vec3>& p) { return std::vector<cplx>{fn(p)}; })[0];
}

/// Regularized amplitude at external momenta and tree-line times tau
/// (tau must cover every non-shoot tree line).
inline IntegralResult evaluate_amplitude(const FriedrichsDiagram& d, const OccupationFunction& n,
                                         const std::map<int, Vec3>& ext, const std::map<int, double>& tau,
                                         double eps, const QuadratureSpec& spec = {}) {
  require_positive_eps(eps);
  const LineBook book(d);
  for (int t : book.tree_lines)
    if (!tau.count(t) || !(tau.at(t) >= 0.0)) throw DiagramError("tau missing or negative on tree line " + std::to_string(t));
  const auto routing = route_momenta(d, ext);
  double damp_time = d.absorbed_time;
  for (int t : book.internal_tree_lines) damp_time += tau.at(t);
  const double damping = std::exp(-eps * damp_time);
  return integrate_loops(routing, spec, [&](const std::vector<Vec3>& p) -> cplx {
    const double f = static_factor(d, n, p, 1.0);
    if (f == 0.0) return 0.0;
    double phase = book.delay_phase(d, p);
    for (const auto& [t, w] : book.frequencies(d, p)) phase += w * tau.at(t);
    return f * damping * std::exp(I * phase);
  });
}

// ---------------------------------------------------------------------------
// Ready-made diagrams used by tests, the CLI and the renormalization demos.

/// Two-vertex tree (vertex 0 on top) with one internal tree line and the
/// root line on vertex 0. Loop lines a (Or=+) and b (Or=-) run from vertex 1
/// to vertex 0; each vertex also emits two external lines. With
/// `pinch` the lines a, b form their own block at vertex 1 so p_a = p_b and
/// the frequency across the tree line vanishes identically whenever the
/// two external lines at vertex 1 carry opposite orientation and equal |p|.
inline FriedrichsDiagram two_vertex_loop_diagram(bool pinch, double width = 1.0) {
  DirectedTree t(2, {{0, LineKind::internal, 0, 1, 0}, {1, LineKind::root, 0, -1, 0}});
  using enum Sign;
  std::vector<DiagramLine> ls{
      {0, 0, 1, plus, minus, minus},   // a
      {1, 0, 1, minus, minus, minus},  // b
      {2, oplus, 1, plus, minus, minus},
      {3, oplus, 1, minus, minus, minus},
      {4, oplus, 0, plus, minus, minus},
      {5, oplus, 0, minus, minus, minus},
  };
  FriedrichsGraph g(t, ls);
  FriedrichsDiagram d{g, {}, {}, 0.0};
  VertexFunction top, bottom;
  top.width = bottom.width = width;
  top.blocks = {g.ends_at(0)};
  if (pinch) {
    bottom.blocks = {{{0, false}, {1, false}}, {{2, false}, {3, false}}};
  } else {
    bottom.blocks = {g.ends_at(1)};
  }
  d.vertex_functions[0] = {top};
  d.vertex_functions[1] = {bottom};
  d.validate();
  return d;
}

/// Conserving external momenta for two_vertex_loop_diagram: lines 2, 3
/// leave vertex 1 with k2, k3 and line 5 is fixed by conservation at
/// vertex 0. The pinch variant needs k2 == k3.
inline std::map<int, Vec3> two_vertex_loop_externals(const Vec3& k2, const Vec3& k3, const Vec3& k4) {
  return {{2, k2}, {3, k3}, {4, k4}, {5, k4 + k2 - k3}};
}

}  // namespace keldren
