#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvgmn/autograd.hpp"
#include "mvgmn/random.hpp"

namespace mvgmn {

/// Vertex-index pair. Vertex (v, t) has index v * T + t.
using Edge = std::pair<std::size_t, std::size_t>;

struct RuleEdges {
  std::vector<Edge> time;  // same view, different time; stored with first < second
  std::vector<Edge> view;  // same time, different view; stored with first < second
};

/// All unordered same-view and same-time pairs of a V x T grid.
RuleEdges rule_edges(std::size_t views, std::size_t steps);

/// Directed edges from every vertex to its k most similar other vertices.
/// Similarity is cosine; if any row has zero norm the whole selection uses
/// negative Euclidean distance instead. Ties go to the lower index. Output
/// is ordered by source vertex, then by rank.
std::vector<Edge> knn_edges(const Tensor& features, std::size_t k);

/// Self-looped adjacency Ã = A + I of the symmetrised union of edge sets and
/// its diagonal degree matrix D̃.
struct Adjacency {
  Tensor a_tilde;  // [n, n]
  Tensor degree;   // [n, n], diagonal

  /// D̃^{-1/2} Ã D̃^{-1/2}
  Tensor normalized() const;
};

Adjacency assemble_adjacency(std::initializer_list<std::span<const Edge>> edge_sets, std::size_t n);

/// Undirected edge list (first < second, sorted, deduplicated) of the union.
std::vector<Edge> undirected_union(std::initializer_list<std::span<const Edge>> edge_sets,
                                   std::size_t n);

/// Vertex-by-edge 0/1 membership matrix of an undirected edge list.
Tensor incidence_matrix(std::span<const Edge> edges, std::size_t n);

/// Edge sets of one view-time graph together with its plain 0/1 adjacency.
struct ViewTemporalGraph {
  std::size_t views = 0;
  std::size_t steps = 0;
  std::vector<Edge> rule_time;
  std::vector<Edge> rule_view;
  std::vector<Edge> knn;

  std::size_t vertices() const { return views * steps; }
  Adjacency adjacency() const;
};

/// Rule edges of the grid plus, when k > 0, KNN edges over `features`.
ViewTemporalGraph build_graph(std::size_t views, std::size_t steps, const Tensor* features,
                              std::size_t k, bool with_rule = true);

struct GcnLayerParams {
  ParamId w = 0;  // [d_in, d_out]

  static GcnLayerParams create(ParamStore& store, std::size_t d_in, std::size_t d_out, Rng& rng,
                               const std::string& prefix);
};

/// ReLU(Â X W) for a normalized adjacency Â.
Var gcn_propagate(const Var& x, const Tensor& normalized_adjacency, const Var& w);
Var gcn_propagate(const Var& x, const Tensor& normalized_adjacency, const GcnLayerParams& params,
                  Tape& tape);

}  // namespace mvgmn
