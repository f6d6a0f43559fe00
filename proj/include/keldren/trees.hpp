#pragma once
// Directed trees of correlations: vertices 0..V-1, internal lines joining
// two vertices, root lines (v,+) and labeled shoot lines (v,-). A "right"
// tree has exactly one root line per connected component; the root vertex
// is the maximum of the induced partial order.

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace keldren {

enum class LineKind { internal, root, shoot };

inline std::string to_string(LineKind k) {
  switch (k) {
    case LineKind::internal: return "internal";
    case LineKind::root: return "root";
    case LineKind::shoot: return "shoot";
  }
  return "?";
}

struct TreeLine {
  int id = 0;
  LineKind kind = LineKind::internal;
  int u = 0;       // attached vertex (internal: one end)
  int v = -1;      // other end for internal lines, -1 otherwise
  int label = 0;   // shoot label 1..#shoots, 0 for other kinds

  bool operator==(const TreeLine&) const = default;
};

class TreeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DirectedTree {
 public:
  DirectedTree() = default;
  DirectedTree(int n_vertices, std::vector<TreeLine> lines) : n_(n_vertices), lines_(std::move(lines)) { validate(); }

  int vertex_count() const { return n_; }
  const std::vector<TreeLine>& lines() const { return lines_; }

  const TreeLine& line(int id) const {
    for (const auto& l : lines_)
      if (l.id == id) return l;
    throw TreeError("no line with id " + std::to_string(id));
  }
  bool has_line(int id) const {
    return std::any_of(lines_.begin(), lines_.end(), [&](const TreeLine& l) { return l.id == id; });
  }

  std::vector<int> line_ids(LineKind k) const {
    std::vector<int> out;
    for (const auto& l : lines_)
      if (l.kind == k) out.push_back(l.id);
    return out;
  }
  std::vector<int> internal_lines() const { return line_ids(LineKind::internal); }
  std::vector<int> root_lines() const { return line_ids(LineKind::root); }
  std::vector<int> shoot_lines() const { return line_ids(LineKind::shoot); }

  /// Component index per vertex (components numbered by smallest vertex).
  std::vector<int> components() const {
    std::vector<int> parent(static_cast<std::size_t>(n_));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& l : lines_)
      if (l.kind == LineKind::internal) parent[find(l.u)] = find(l.v);
    std::map<int, int> index;
    std::vector<int> comp(static_cast<std::size_t>(n_));
    for (int x = 0; x < n_; ++x) {
      const int r = find(x);
      auto it = index.find(r);
      if (it == index.end()) it = index.emplace(r, static_cast<int>(index.size())).first;
      comp[x] = it->second;
    }
    return comp;
  }
  int component_count() const {
    auto c = components();
    return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
  }

  /// Exactly one root line in every connected component.
  bool is_right() const {
    if (n_ == 0) return lines_.empty();
    auto comp = components();
    std::vector<int> roots(static_cast<std::size_t>(component_count()), 0);
    for (const auto& l : lines_)
      if (l.kind == LineKind::root) ++roots[comp[l.u]];
    return std::all_of(roots.begin(), roots.end(), [](int r) { return r == 1; });
  }

  /// Parent vertex along the unique path to the component root (-1 for root vertices).
  std::vector<int> parents() const {
    require_right();
    std::vector<int> par(static_cast<std::size_t>(n_), -2);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_));
    for (const auto& l : lines_)
      if (l.kind == LineKind::internal) {
        adj[l.u].push_back(l.v);
        adj[l.v].push_back(l.u);
      }
    for (const auto& l : lines_) {
      if (l.kind != LineKind::root) continue;
      std::vector<int> stack{l.u};
      par[l.u] = -1;
      while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        for (int y : adj[x])
          if (par[y] == -2) {
            par[y] = x;
            stack.push_back(y);
          }
      }
    }
    return par;
  }

  /// Line joining v to its parent, or v's root line when v is a root vertex.
  int up_line(int v) const {
    const auto par = parents();
    for (const auto& l : lines_) {
      if (par[v] == -1 && l.kind == LineKind::root && l.u == v) return l.id;
      if (par[v] >= 0 && l.kind == LineKind::internal &&
          ((l.u == v && l.v == par[v]) || (l.v == v && l.u == par[v])))
        return l.id;
    }
    throw TreeError("vertex has no upward line");
  }

  /// Upper (closer to root) end of an internal line.
  int upper_vertex(int line_id) const {
    const auto& l = line(line_id);
    if (l.kind != LineKind::internal) return l.kind == LineKind::shoot ? l.u : -1;
    const auto par = parents();
    return par[l.v] == l.u ? l.u : l.v;
  }
  /// Lower end of an internal or root line; -1 for shoots.
  int lower_vertex(int line_id) const {
    const auto& l = line(line_id);
    if (l.kind == LineKind::shoot) return -1;
    if (l.kind == LineKind::root) return l.u;
    const auto par = parents();
    return par[l.v] == l.u ? l.v : l.u;
  }

  void require_right() const {
    if (!is_right()) throw TreeError("tree is not a right tree (need exactly one root line per component)");
  }

  /// Canonical encoding: vertex count, parent array, sorted shoot attachments
  /// in label order. Line ids are not part of identity.
  std::vector<int> encoding() const {
    std::vector<int> e{n_};
    auto par = parents();
    e.insert(e.end(), par.begin(), par.end());
    std::vector<std::pair<int, int>> sh;
    for (const auto& l : lines_)
      if (l.kind == LineKind::shoot) sh.emplace_back(l.label, l.u);
    std::sort(sh.begin(), sh.end());
    for (auto [lab, v] : sh) e.push_back(v);
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& l : lines_) {
      nlohmann::json j{{"id", l.id}, {"kind", to_string(l.kind)}};
      if (l.kind == LineKind::internal) j["vertices"] = {l.u + 1, l.v + 1};
      else j["vertex"] = l.u + 1;
      if (l.kind == LineKind::shoot) j["label"] = l.label;
      lines.push_back(j);
    }
    return {{"vertices", n_}, {"lines", lines}};
  }

  static DirectedTree from_json(const nlohmann::json& j) {
    std::vector<TreeLine> ls;
    for (const auto& jl : j.at("lines")) {
      TreeLine l;
      l.id = jl.at("id").get<int>();
      const auto kind = jl.at("kind").get<std::string>();
      if (kind == "internal") {
        l.kind = LineKind::internal;
        l.u = jl.at("vertices")[0].get<int>() - 1;
        l.v = jl.at("vertices")[1].get<int>() - 1;
      } else {
        l.kind = kind == "root" ? LineKind::root : kind == "shoot" ? LineKind::shoot
                                                                   : throw TreeError("bad line kind " + kind);
        l.u = jl.at("vertex").get<int>() - 1;
        l.label = jl.value("label", 0);
      }
      ls.push_back(l);
    }
    return DirectedTree(j.at("vertices").get<int>(), ls);
  }

 private:
  void validate() const {
    if (n_ < 0) throw TreeError("negative vertex count");
    std::set<int> ids, labels;
    int shoots = 0, internal = 0;
    for (const auto& l : lines_) {
      if (!ids.insert(l.id).second) throw TreeError("duplicate line id " + std::to_string(l.id));
      if (l.u < 0 || l.u >= n_) throw TreeError("line attached outside vertex range");
      if (l.kind == LineKind::internal) {
        if (l.v < 0 || l.v >= n_ || l.v == l.u) throw TreeError("bad internal line endpoints");
        ++internal;
      } else if (l.v != -1) {
        throw TreeError("root/shoot lines attach to a single vertex");
      }
      if (l.kind == LineKind::shoot) {
        ++shoots;
        labels.insert(l.label);
      } else if (l.label != 0) {
        throw TreeError("only shoots carry labels");
      }
    }
    for (int k = 1; k <= shoots; ++k)
      if (!labels.count(k)) throw TreeError("shoot labels must be a bijection onto 1..#shoots");
    // acyclic: internal line count equals V - #components
    if (internal != n_ - component_count()) throw TreeError("internal lines contain a cycle");
  }

  int n_ = 0;
  std::vector<TreeLine> lines_;
};

/// A tree with time variables on all non-shoot lines.
struct CorrelationTree {
  DirectedTree tree;
  std::map<int, double> tau;

  CorrelationTree(DirectedTree t, std::map<int, double> times) : tree(std::move(t)), tau(std::move(times)) {
    for (const auto& l : tree.lines()) {
      const bool needs = l.kind != LineKind::shoot;
      if (needs != static_cast<bool>(tau.count(l.id))) throw TreeError("tau must be defined exactly on non-shoot lines");
      if (needs && !(tau.at(l.id) >= 0.0)) throw TreeError("tau values must be >= 0");
    }
  }
};

/// Builds a right tree from a parent array (-1 marks the single root vertex)
/// and shoot attachments in label order. Line ids: internal lines first
/// ordered by child, then the root line, then shoots.
inline DirectedTree tree_from_parents(const std::vector<int>& parent, const std::vector<int>& shoot_vertices) {
  const int n = static_cast<int>(parent.size());
  std::vector<TreeLine> ls;
  int id = 0;
  for (int v = 0; v < n; ++v)
    if (parent[v] >= 0) ls.push_back({id++, LineKind::internal, parent[v], v, 0});
  for (int v = 0; v < n; ++v)
    if (parent[v] < 0) ls.push_back({id++, LineKind::root, v, -1, 0});
  for (std::size_t s = 0; s < shoot_vertices.size(); ++s)
    ls.push_back({id++, LineKind::shoot, shoot_vertices[s], -1, static_cast<int>(s + 1)});
  return DirectedTree(n, ls);
}

namespace detail {
inline std::vector<std::pair<int, int>> prufer_edges(const std::vector<int>& seq, int n) {
  std::vector<int> degree(static_cast<std::size_t>(n), 1);
  for (int x : seq) ++degree[x];
  std::vector<std::pair<int, int>> edges;
  for (int x : seq) {
    for (int leaf = 0; leaf < n; ++leaf)
      if (degree[leaf] == 1) {
        edges.emplace_back(leaf, x);
        --degree[leaf];
        --degree[x];
        break;
      }
  }
  int a = -1, b = -1;
  for (int v = 0; v < n; ++v)
    if (degree[v] == 1) (a < 0 ? a : b) = v;
  edges.emplace_back(a, b);
  return edges;
}

inline std::vector<int> orient(const std::vector<std::pair<int, int>>& edges, int n, int root) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> par(static_cast<std::size_t>(n), -2);
  par[root] = -1;
  std::vector<int> st{root};
  while (!st.empty()) {
    int x = st.back();
    st.pop_back();
    for (int y : adj[x])
      if (par[y] == -2) {
        par[y] = x;
        st.push_back(y);
      }
  }
  return par;
}

// Calls fn(digits) for every vector in {0..base-1}^len, lexicographic.
template <class F>
void for_each_word(int len, int base, F&& fn) {
  std::vector<int> w(static_cast<std::size_t>(len), 0);
  while (true) {
    fn(w);
    int i = len - 1;
    while (i >= 0 && ++w[i] == base) w[i--] = 0;
    if (i < 0) break;
  }
}
}  // namespace detail

/// All connected right trees on n labeled vertices with `shoots` labeled
/// shoot lines, each exactly once, sorted by canonical encoding.
/// There are n^(n-1+shoots) of them.
inline std::vector<DirectedTree> enumerate_trees(int n_vertices, int shoots, int cap = 6) {
  if (n_vertices > cap) throw TreeError("enumerate_trees: vertex count exceeds cap " + std::to_string(cap));
  if (n_vertices < 0 || shoots < 0) throw TreeError("enumerate_trees: negative argument");
  if (n_vertices == 0) return {};
  const int n = n_vertices;
  std::vector<std::vector<int>> parent_arrays;
  if (n == 1) {
    parent_arrays.push_back({-1});
  } else {
    detail::for_each_word(n - 2, n, [&](const std::vector<int>& seq) {
      const auto edges = detail::prufer_edges(seq, n);
      for (int r = 0; r < n; ++r) parent_arrays.push_back(detail::orient(edges, n, r));
    });
  }
  std::vector<std::pair<std::vector<int>, DirectedTree>> keyed;
  for (const auto& par : parent_arrays) {
    detail::for_each_word(shoots, n, [&](const std::vector<int>& sv) {
      auto t = tree_from_parents(par, sv);
      keyed.emplace_back(t.encoding(), std::move(t));
    });
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<DirectedTree> out;
  for (auto& [k, t] : keyed) out.push_back(std::move(t));
  return out;
}

/// leq[a][b] is true when a <= b: b lies on the path from a to its
/// component's root vertex.
inline std::vector<std::vector<bool>> partial_order(const DirectedTree& t) {
  const auto par = t.parents();
  const int n = t.vertex_count();
  std::vector<std::vector<bool>> leq(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int a = 0; a < n; ++a)
    for (int b = a; b >= 0; b = par[b]) leq[a][b] = true;
  return leq;
}

/// Antichains of the tree order (including the empty one), each sorted,
/// listed in lexicographic order of their bitmask.
inline std::vector<std::vector<int>> antichains(const DirectedTree& t) {
  const auto leq = partial_order(t);
  const int n = t.vertex_count();
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int next) -> void {
    out.push_back(cur);
    for (int v = next; v < n; ++v) {
      bool ok = true;
      for (int w : cur)
        if (leq[v][w] || leq[w][v]) ok = false;
      if (!ok) continue;
      cur.push_back(v);
      self(self, v + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

struct RightSubtree {
  std::vector<int> antichain;    // generating vertices (original labels)
  DirectedTree tree;             // vertices relabeled 0..k-1 in increasing original order
  std::vector<int> vertex_map;   // new label -> original label
};

/// The subtree generated by an antichain: every vertex below some v_i,
/// with the line leaving each v_i upward promoted to a root line.
inline RightSubtree right_subtree(const DirectedTree& t, const std::vector<int>& chain) {
  const auto leq = partial_order(t);
  const int n = t.vertex_count();
  std::vector<int> keep;
  for (int v = 0; v < n; ++v)
    for (int w : chain)
      if (leq[v][w]) {
        keep.push_back(v);
        break;
      }
  std::vector<int> newlab(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) newlab[keep[i]] = static_cast<int>(i);
  std::set<int> cut;
  for (int w : chain) cut.insert(t.up_line(w));
  std::vector<TreeLine> ls;
  std::vector<std::pair<int, TreeLine>> shoots;
  for (const auto& l : t.lines()) {
    if (cut.count(l.id)) {
      const int w = t.lower_vertex(l.id);
      ls.push_back({l.id, LineKind::root, newlab[w], -1, 0});
    } else if (l.kind == LineKind::internal) {
      if (newlab[l.u] >= 0 && newlab[l.v] >= 0) ls.push_back({l.id, LineKind::internal, newlab[l.u], newlab[l.v], 0});
    } else if (l.kind == LineKind::shoot && newlab[l.u] >= 0) {
      shoots.push_back({l.label, {l.id, LineKind::shoot, newlab[l.u], -1, 0}});
    }
  }
  std::sort(shoots.begin(), shoots.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < shoots.size(); ++i) {
    shoots[i].second.label = static_cast<int>(i + 1);
    ls.push_back(shoots[i].second);
  }
  std::vector<int> sorted_chain = chain;
  std::sort(sorted_chain.begin(), sorted_chain.end());
  return {sorted_chain, DirectedTree(static_cast<int>(keep.size()), ls), keep};
}

inline std::vector<RightSubtree> right_subtrees(const DirectedTree& t) {
  std::vector<RightSubtree> out;
  for (const auto& a : antichains(t)) out.push_back(right_subtree(t, a));
  return out;
}

struct QuotientTree {
  DirectedTree tree;
  std::vector<int> merge;  // old vertex -> new vertex
};

/// Contracts every line of A into a point. Classes are numbered by their
/// smallest original vertex; surviving lines keep their ids.
inline QuotientTree quotient_tree(const DirectedTree& t, const std::vector<int>& A) {
  const int n = t.vertex_count();
  std::set<int> a(A.begin(), A.end());
  std::vector<int> uf(static_cast<std::size_t>(n));
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](int x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };
  for (int id : a) {
    const auto& l = t.line(id);
    if (l.kind != LineKind::internal) throw TreeError("quotient_tree: only internal lines can be contracted");
    const int x = find(l.u), y = find(l.v);
    uf[std::max(x, y)] = std::min(x, y);
  }
  std::map<int, int> cls;
  std::vector<int> merge(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const int r = find(v);
    auto it = cls.find(r);
    if (it == cls.end()) it = cls.emplace(r, static_cast<int>(cls.size())).first;
    merge[v] = it->second;
  }
  std::vector<TreeLine> ls;
  for (const auto& l : t.lines()) {
    if (a.count(l.id)) continue;
    TreeLine m = l;
    m.u = merge[l.u];
    if (l.kind == LineKind::internal) m.v = merge[l.v];
    ls.push_back(m);
  }
  return {DirectedTree(static_cast<int>(cls.size()), ls), merge};
}

/// Uniformly random connected right tree (random Pruefer code, root, shoots).
template <class Rng>
DirectedTree random_tree(int n, int shoots, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> par;
  if (n == 1) {
    par = {-1};
  } else {
    std::vector<int> seq(static_cast<std::size_t>(n - 2));
    for (auto& x : seq) x = pick(rng);
    par = detail::orient(detail::prufer_edges(seq, n), n, pick(rng));
  }
  std::vector<int> sv(static_cast<std::size_t>(shoots));
  for (auto& x : sv) x = pick(rng);
  return tree_from_parents(par, sv);
}

}  // namespace keldren
