#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vseg/volume.hpp"

namespace vseg {

struct Voxel {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

// 26-connected components of the foreground of a BINARY volume, labeled
// 0, 1, ... in raster order of their first voxel; background is -1.
struct ComponentLabels {
  std::vector<int> labels;
  std::vector<std::size_t> sizes;
  std::size_t count() const { return sizes.size(); }
};

ComponentLabels label_components(const Volume& mask);

// Topology-preserving thinning to a one-voxel-thin curve skeleton.
//
// Border points are peeled in six directional sub-passes (-y, +y, +x, -x, +z,
// -z). A voxel is deleted only if it is a simple point (26-connected
// foreground, 6-connected background) and not an end point (exactly one
// foreground 26-neighbor). Candidates of a sub-pass are collected first and
// then re-checked one at a time before deletion, which keeps the number of
// 26-connected components unchanged. Passes repeat until nothing changes.
Volume skeletonize(const Volume& mask);

// Nodes are the foreground voxels (raster order), edges join 26-adjacent
// nodes, components are labeled in order of their lowest node index.
struct SkeletonGraph {
  Dims dims;
  std::vector<Voxel> nodes;
  std::vector<std::pair<int, int>> edges;  // first < second
  std::vector<int> component;
  std::vector<std::size_t> component_sizes;
};

SkeletonGraph build_graph(const Volume& skeleton);

// Drops every component with fewer than `min_nodes` nodes; surviving nodes
// keep their relative order and are re-indexed.
SkeletonGraph prune_components(const SkeletonGraph& graph, int min_nodes = 10);

// Keeps the 26-connected components of `mask` that contain at least one
// node of `pruned`. Throws ConsistencyError if a node falls outside the mask.
Volume refine_segmentation(const Volume& mask, const SkeletonGraph& pruned);

// skeletonize -> build_graph -> prune_components -> refine_segmentation.
Volume refine(const Volume& mask, int min_nodes = 10);

struct ComponentStats {
  std::size_t nodes = 0;
  std::size_t junctions = 0;  // degree >= 3
  std::size_t endpoints = 0;  // degree == 1
  std::size_t branches = 0;   // maximal chains between non-degree-2 nodes
};

struct GraphStats {
  std::size_t components = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t junctions = 0;
  std::size_t endpoints = 0;
  std::size_t branches = 0;
  std::vector<ComponentStats> per_component;
};

GraphStats graph_stats(const SkeletonGraph& graph);

nlohmann::ordered_json to_json(const GraphStats& stats);

}  // namespace vseg
