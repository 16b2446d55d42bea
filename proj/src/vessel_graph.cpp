#include "vseg/vessel_graph.hpp"

#include <array>
#include <cstdint>
#include <cstdlib>
#include <string>

#include "vseg/error.hpp"

namespace vseg {
namespace {

void require_binary(const Volume& v, const char* what) {
  if (v.kind() != VolumeKind::binary) {
    throw ArgumentError(std::string(what) + " expects a BINARY volume, got " +
                        std::string(to_string(v.kind())));
  }
}

// The 3x3x3 neighborhood: cell (dx+1) + 3(dy+1) + 9(dz+1); 13 is the center.
struct Neighborhood {
  std::array<std::array<int, 3>, 27> offset{};
  std::array<std::vector<int>, 27> adj26;    // 26-adjacent cells, center excluded
  std::array<std::vector<int>, 27> adj6n18;  // 6-adjacent cells inside N18
  std::array<bool, 27> in_n18{};
  std::array<bool, 27> face{};

  Neighborhood() {
    for (int c = 0; c < 27; ++c) offset[c] = {c % 3 - 1, (c / 3) % 3 - 1, c / 9 - 1};
    for (int c = 0; c < 27; ++c) {
      const int m = std::abs(offset[c][0]) + std::abs(offset[c][1]) + std::abs(offset[c][2]);
      in_n18[c] = c != 13 && m <= 2;
      face[c] = m == 1;
    }
    for (int a = 0; a < 27; ++a) {
      if (a == 13) continue;
      for (int b = 0; b < 27; ++b) {
        if (b == 13 || b == a) continue;
        const int dx = std::abs(offset[a][0] - offset[b][0]);
        const int dy = std::abs(offset[a][1] - offset[b][1]);
        const int dz = std::abs(offset[a][2] - offset[b][2]);
        if (dx <= 1 && dy <= 1 && dz <= 1) adj26[a].push_back(b);
        if (in_n18[a] && in_n18[b] && dx + dy + dz == 1) adj6n18[a].push_back(b);
      }
    }
  }
};

const Neighborhood& neighborhood() {
  static const Neighborhood n;
  return n;
}

// A point is simple when its foreground 26-neighbors form one 26-component
// and the background of N18 has exactly one 6-component 6-adjacent to it.
bool is_simple(const std::array<bool, 27>& fg) {
  const Neighborhood& n = neighborhood();
  std::array<bool, 27> seen{};
  std::array<int, 27> stack{};

  int components = 0;
  for (int c = 0; c < 27; ++c) {
    if (c == 13 || !fg[c] || seen[c]) continue;
    if (++components > 1) return false;
    int top = 0;
    stack[top++] = c;
    seen[c] = true;
    while (top > 0) {
      const int u = stack[--top];
      for (int v : n.adj26[u]) {
        if (fg[v] && !seen[v]) {
          seen[v] = true;
          stack[top++] = v;
        }
      }
    }
  }
  if (components != 1) return false;

  seen.fill(false);
  int background = 0;
  for (int c = 0; c < 27; ++c) {
    if (!n.face[c] || fg[c] || seen[c]) continue;
    if (++background > 1) return false;
    int top = 0;
    stack[top++] = c;
    seen[c] = true;
    while (top > 0) {
      const int u = stack[--top];
      for (int v : n.adj6n18[u]) {
        if (!fg[v] && !seen[v]) {
          seen[v] = true;
          stack[top++] = v;
        }
      }
    }
  }
  return background == 1;
}

// Binary grid with a one-voxel background border.
class PaddedGrid {
 public:
  explicit PaddedGrid(const Volume& v)
      : nx_(v.dims().nx + 2), ny_(v.dims().ny + 2), nz_(v.dims().nz + 2),
        cells_(static_cast<std::size_t>(nx_) * ny_ * nz_, 0) {
    const Dims& d = v.dims();
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x)
          cells_[index(x + 1, y + 1, z + 1)] = v.at(x, y, z) != 0.0f;
    for (int c = 0; c < 27; ++c) {
      const auto& o = neighborhood().offset[c];
      delta_[c] = o[0] + static_cast<std::ptrdiff_t>(nx_) * (o[1] + static_cast<std::ptrdiff_t>(ny_) * o[2]);
    }
  }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx_) * (static_cast<std::size_t>(y) +
                                            static_cast<std::size_t>(ny_) * z);
  }
  std::uint8_t& operator[](std::size_t i) { return cells_[i]; }
  std::uint8_t operator[](std::size_t i) const { return cells_[i]; }

  std::array<bool, 27> window(std::size_t i) const {
    std::array<bool, 27> w{};
    for (int c = 0; c < 27; ++c) w[c] = cells_[i + delta_[c]] != 0;
    return w;
  }
  int foreground_neighbors(std::size_t i) const {
    int count = 0;
    for (int c = 0; c < 27; ++c)
      if (c != 13) count += cells_[i + delta_[c]];
    return count;
  }
  std::ptrdiff_t delta(int dx, int dy, int dz) const {
    return dx + static_cast<std::ptrdiff_t>(nx_) * (dy + static_cast<std::ptrdiff_t>(ny_) * dz);
  }

  Volume to_volume(const Volume& like) const {
    const Dims& d = like.dims();
    std::vector<float> out(d.voxels());
    std::size_t o = 0;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) out[o++] = cells_[index(x + 1, y + 1, z + 1)];
    return like.with_data(std::move(out), VolumeKind::binary);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }

 private:
  int nx_, ny_, nz_;
  std::vector<std::uint8_t> cells_;
  std::array<std::ptrdiff_t, 27> delta_{};
};

}  // namespace

ComponentLabels label_components(const Volume& mask) {
  require_binary(mask, "label_components");
  const Dims& d = mask.dims();
  ComponentLabels out;
  out.labels.assign(d.voxels(), -1);
  std::vector<std::size_t> queue;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t start = mask.index(x, y, z);
        if (mask[start] == 0.0f || out.labels[start] >= 0) continue;
        const int label = static_cast<int>(out.sizes.size());
        out.sizes.push_back(0);
        queue.assign(1, start);
        out.labels[start] = label;
        while (!queue.empty()) {
          const std::size_t cur = queue.back();
          queue.pop_back();
          ++out.sizes[label];
          const int cx = static_cast<int>(cur % d.nx);
          const int cy = static_cast<int>((cur / d.nx) % d.ny);
          const int cz = static_cast<int>(cur / (static_cast<std::size_t>(d.nx) * d.ny));
          for (int dz = -1; dz <= 1; ++dz) {
            const int zz = cz + dz;
            if (zz < 0 || zz >= d.nz) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              const int yy = cy + dy;
              if (yy < 0 || yy >= d.ny) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                const int xx = cx + dx;
                if (xx < 0 || xx >= d.nx) continue;
                const std::size_t n = mask.index(xx, yy, zz);
                if (mask[n] != 0.0f && out.labels[n] < 0) {
                  out.labels[n] = label;
                  queue.push_back(n);
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Volume skeletonize(const Volume& mask) {
  require_binary(mask, "skeletonize");
  PaddedGrid grid(mask);
  const std::array<std::array<int, 3>, 6> directions{{
      {0, -1, 0}, {0, 1, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 0, 1}, {0, 0, -1}}};

  std::vector<std::size_t> foreground;
  for (int z = 1; z < grid.nz() - 1; ++z)
    for (int y = 1; y < grid.ny() - 1; ++y)
      for (int x = 1; x < grid.nx() - 1; ++x)
        if (grid[grid.index(x, y, z)]) foreground.push_back(grid.index(x, y, z));

  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : directions) {
      const std::ptrdiff_t step = grid.delta(dir[0], dir[1], dir[2]);
      candidates.clear();
      for (std::size_t i : foreground) {
        if (!grid[i] || grid[i + step]) continue;
        if (grid.foreground_neighbors(i) == 1) continue;
        if (is_simple(grid.window(i))) candidates.push_back(i);
      }
      for (std::size_t i : candidates) {
        if (grid.foreground_neighbors(i) == 1) continue;
        if (!is_simple(grid.window(i))) continue;
        grid[i] = 0;
        changed = true;
      }
      std::erase_if(foreground, [&](std::size_t i) { return grid[i] == 0; });
    }
  }
  return grid.to_volume(mask);
}

SkeletonGraph build_graph(const Volume& skeleton) {
  require_binary(skeleton, "build_graph");
  const Dims& d = skeleton.dims();
  SkeletonGraph g;
  g.dims = d;
  std::vector<int> node_of(d.voxels(), -1);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (skeleton.at(x, y, z) != 0.0f) {
          node_of[skeleton.index(x, y, z)] = static_cast<int>(g.nodes.size());
          g.nodes.push_back({x, y, z});
        }

  for (int n = 0; n < static_cast<int>(g.nodes.size()); ++n) {
    const Voxel& v = g.nodes[n];
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = v.x + dx, y = v.y + dy, z = v.z + dz;
          if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) continue;
          const int m = node_of[skeleton.index(x, y, z)];
          if (m > n) g.edges.emplace_back(n, m);
        }
  }

  // Components by union-find over the edges, relabeled by lowest node index.
  std::vector<int> parent(g.nodes.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& [a, b] : g.edges) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> label_of_root(g.nodes.size(), -1);
  g.component.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const int r = find(static_cast<int>(i));
    if (label_of_root[r] < 0) {
      label_of_root[r] = static_cast<int>(g.component_sizes.size());
      g.component_sizes.push_back(0);
    }
    g.component[i] = label_of_root[r];
    ++g.component_sizes[label_of_root[r]];
  }
  return g;
}

SkeletonGraph prune_components(const SkeletonGraph& graph, int min_nodes) {
  SkeletonGraph out;
  out.dims = graph.dims;
  std::vector<int> new_label(graph.component_sizes.size(), -1);
  for (std::size_t c = 0; c < graph.component_sizes.size(); ++c) {
    if (static_cast<long>(graph.component_sizes[c]) >= min_nodes) {
      new_label[c] = static_cast<int>(out.component_sizes.size());
      out.component_sizes.push_back(graph.component_sizes[c]);
    }
  }
  std::vector<int> new_index(graph.nodes.size(), -1);
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    const int label = new_label[graph.component[n]];
    if (label < 0) continue;
    new_index[n] = static_cast<int>(out.nodes.size());
    out.nodes.push_back(graph.nodes[n]);
    out.component.push_back(label);
  }
  for (const auto& [a, b] : graph.edges) {
    if (new_index[a] >= 0 && new_index[b] >= 0) out.edges.emplace_back(new_index[a], new_index[b]);
  }
  return out;
}

Volume refine_segmentation(const Volume& mask, const SkeletonGraph& pruned) {
  require_binary(mask, "refine_segmentation");
  if (pruned.dims != mask.dims()) {
    throw ConsistencyError("skeleton graph dims do not match the mask");
  }
  const ComponentLabels labels = label_components(mask);
  std::vector<bool> keep(labels.count(), false);
  for (const Voxel& v : pruned.nodes) {
    const int label = labels.labels[mask.index(v.x, v.y, v.z)];
    if (label < 0) {
      throw ConsistencyError("skeleton node (" + std::to_string(v.x) + ", " +
                             std::to_string(v.y) + ", " + std::to_string(v.z) +
                             ") lies outside the mask");
    }
    keep[label] = true;
  }
  std::vector<float> out(mask.size(), 0.0f);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int label = labels.labels[i];
    if (label >= 0 && keep[label]) out[i] = 1.0f;
  }
  return mask.with_data(std::move(out), VolumeKind::binary);
}

Volume refine(const Volume& mask, int min_nodes) {
  return refine_segmentation(mask, prune_components(build_graph(skeletonize(mask)), min_nodes));
}

GraphStats graph_stats(const SkeletonGraph& graph) {
  GraphStats s;
  s.components = graph.component_sizes.size();
  s.nodes = graph.nodes.size();
  s.edges = graph.edges.size();
  s.per_component.resize(s.components);

  std::vector<std::vector<std::pair<int, int>>> adjacency(graph.nodes.size());  // (node, edge)
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    const auto& [a, b] = graph.edges[e];
    adjacency[a].emplace_back(b, e);
    adjacency[b].emplace_back(a, e);
  }
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    auto& c = s.per_component[graph.component[n]];
    ++c.nodes;
    if (adjacency[n].size() >= 3) ++c.junctions;
    if (adjacency[n].size() == 1) ++c.endpoints;
  }

  // Walk chains between nodes of degree != 2; leftover edges form pure cycles.
  std::vector<bool> used(graph.edges.size(), false);
  auto walk = [&](int to, int edge) {
    used[edge] = true;
    int cur = to;
    while (adjacency[cur].size() == 2) {
      const auto& a = adjacency[cur];
      const int pick = !used[a[0].second] ? 0 : (!used[a[1].second] ? 1 : -1);
      if (pick < 0) break;
      used[a[pick].second] = true;
      cur = a[pick].first;
    }
  };
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    if (adjacency[n].size() == 2) continue;
    for (const auto& [m, e] : adjacency[n]) {
      if (used[e]) continue;
      walk(m, e);
      ++s.per_component[graph.component[n]].branches;
    }
  }
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    if (used[e]) continue;
    walk(graph.edges[e].second, e);
    ++s.per_component[graph.component[graph.edges[e].first]].branches;
  }

  for (const auto& c : s.per_component) {
    s.junctions += c.junctions;
    s.endpoints += c.endpoints;
    s.branches += c.branches;
  }
  return s;
}

nlohmann::ordered_json to_json(const GraphStats& s) {
  nlohmann::ordered_json j;
  j["components"] = s.components;
  j["nodes"] = s.nodes;
  j["edges"] = s.edges;
  j["junctions"] = s.junctions;
  j["endpoints"] = s.endpoints;
  j["branches"] = s.branches;
  j["per_component"] = nlohmann::ordered_json::array();
  for (const auto& c : s.per_component) {
    j["per_component"].push_back({{"nodes", c.nodes},
                                  {"junctions", c.junctions},
                                  {"endpoints", c.endpoints},
                                  {"branches", c.branches}});
  }
  return j;
}

}  // namespace vseg
