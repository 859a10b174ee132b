#include "mvgmn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvgmn/errors.hpp"
#include "mvgmn/init.hpp"
#include "mvgmn/ops.hpp"

namespace mvgmn {

RuleEdges rule_edges(std::size_t views, std::size_t steps) {
  if (views == 0 || steps == 0) throw InputError("rule_edges: V and T must be >= 1");
  RuleEdges out;
  out.time.reserve(views * steps * (steps - 1) / 2);
  out.view.reserve(steps * views * (views - 1) / 2);
  for (std::size_t v = 0; v < views; ++v)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t t2 = t + 1; t2 < steps; ++t2) out.time.emplace_back(v * steps + t, v * steps + t2);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t v = 0; v < views; ++v)
      for (std::size_t v2 = v + 1; v2 < views; ++v2) out.view.emplace_back(v * steps + t, v2 * steps + t);
  return out;
}

std::vector<Edge> knn_edges(const Tensor& features, std::size_t k) {
  if (features.rank() != 2) throw DimensionError("knn_edges: features must be [n, D]");
  const std::size_t n = features.rows(), d = features.cols();
  if (k < 1 || k + 1 > n) {
    throw ConfigError("knn_edges: k = " + std::to_string(k) + " must lie in [1, " +
                      std::to_string(n > 0 ? n - 1 : 0) + "]");
  }
  std::vector<double> norms(n);
  bool zero_row = false;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : features.row_span(i)) s += v * v;
    norms[i] = std::sqrt(s);
    zero_row = zero_row || norms[i] < 1e-12;
  }

  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = features.row_span(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto b = features.row_span(j);
      if (zero_row) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
        sim[i * n + j] = -std::sqrt(s);
      } else {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += a[c] * b[c];
        sim[i * n + j] = dot / (norms[i] * norms[j]);
      }
    }
  }

  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<std::size_t> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) candidates[c++] = j;
    const double* row = sim.data() + i * n;
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), [row](std::size_t x, std::size_t y) {
                        return row[x] > row[y] || (row[x] == row[y] && x < y);
                      });
    for (std::size_t r = 0; r < k; ++r) edges.emplace_back(i, candidates[r]);
  }
  return edges;
}

std::vector<Edge> undirected_union(std::initializer_list<std::span<const Edge>> edge_sets,
                                   std::size_t n) {
  std::vector<Edge> all;
  for (const auto& set : edge_sets) {
    for (const auto& [a, b] : set) {
      if (a >= n || b >= n) {
        throw InputError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                         ") out of range for " + std::to_string(n) + " vertices");
      }
      if (a == b) continue;
      all.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

Adjacency assemble_adjacency(std::initializer_list<std::span<const Edge>> edge_sets, std::size_t n) {
  Adjacency adj{Tensor::identity(n), Tensor({n, n})};
  for (const auto& [a, b] : undirected_union(edge_sets, n)) {
    adj.a_tilde(a, b) = 1.0;
    adj.a_tilde(b, a) = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (double v : adj.a_tilde.row_span(i)) deg += v;
    adj.degree(i, i) = deg;
  }
  return adj;
}

Tensor Adjacency::normalized() const {
  const std::size_t n = a_tilde.rows();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree(i, i));
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * a_tilde(i, j) * inv_sqrt[j];
  return out;
}

Tensor incidence_matrix(std::span<const Edge> edges, std::size_t n) {
  Tensor h({n, edges.size()});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    if (a >= n || b >= n) throw InputError("incidence_matrix: vertex out of range");
    h(a, e) = 1.0;
    h(b, e) = 1.0;
  }
  return h;
}

Adjacency ViewTemporalGraph::adjacency() const {
  return assemble_adjacency({rule_time, rule_view, knn}, vertices());
}

ViewTemporalGraph build_graph(std::size_t views, std::size_t steps, const Tensor* features,
                              std::size_t k, bool with_rule) {
  ViewTemporalGraph g;
  g.views = views;
  g.steps = steps;
  if (with_rule) {
    auto rule = rule_edges(views, steps);
    g.rule_time = std::move(rule.time);
    g.rule_view = std::move(rule.view);
  }
  if (k > 0) {
    if (!features) throw InputError("build_graph: KNN edges need features");
    if (features->rows() != views * steps) {
      throw DimensionError("build_graph: features must have V*T rows");
    }
    g.knn = knn_edges(*features, k);
  }
  return g;
}

GcnLayerParams GcnLayerParams::create(ParamStore& store, std::size_t d_in, std::size_t d_out,
                                      Rng& rng, const std::string& prefix) {
  return GcnLayerParams{store.add(prefix + ".w", init::he_uniform({d_in, d_out}, rng))};
}

Var gcn_propagate(const Var& x, const Tensor& normalized_adjacency, const Var& w) {
  if (normalized_adjacency.rank() != 2 || normalized_adjacency.rows() != x.rows() ||
      normalized_adjacency.cols() != x.rows()) {
    throw DimensionError("gcn_propagate: adjacency " + shape_string(normalized_adjacency.shape()) +
                         " does not match " + std::to_string(x.rows()) + " vertices");
  }
  return relu(matmul(Var::constant(normalized_adjacency), matmul(x, w)));
}

Var gcn_propagate(const Var& x, const Tensor& normalized_adjacency, const GcnLayerParams& params,
                  Tape& tape) {
  return gcn_propagate(x, normalized_adjacency, tape.param(params.w));
}

}  // namespace mvgmn
