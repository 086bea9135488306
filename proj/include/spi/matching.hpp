#pragma once

// Maximum-weight (not necessarily perfect) bipartite matching by successive
// shortest augmenting paths with Johnson potentials.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "spi/error.hpp"

namespace spi {

struct WeightedEdge {
  std::size_t left;
  std::size_t right;
  double weight;
};

struct MatchingResult {
  double value = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (left, right), sorted by left
};

inline MatchingResult max_weight_matching(std::size_t num_left, std::size_t num_right,
                                          const std::vector<WeightedEdge>& edges) {
  // nodes: source, left block, right block, sink; edge costs are -weight
  const std::size_t source = 0;
  const std::size_t sink = num_left + num_right + 1;
  const std::size_t nodes = sink + 1;
  const auto lnode = [](std::size_t l) { return 1 + l; };
  const auto rnode = [num_left](std::size_t r) { return 1 + num_left + r; };

  struct Arc {
    std::size_t to;
    std::size_t rev;
    double cost;
    int cap;
  };
  std::vector<std::vector<Arc>> graph(nodes);
  const auto add_arc = [&](std::size_t u, std::size_t v, double cost) {
    graph[u].push_back({v, graph[v].size(), cost, 1});
    graph[v].push_back({u, graph[u].size() - 1, -cost, 0});
  };

  std::vector<double> potential(nodes, 0.0);
  for (const auto& e : edges) {
    if (e.left >= num_left || e.right >= num_right) throw ValidationError("matching edge endpoint out of range");
    if (!(e.weight > 0.0)) continue;  // never improves a maximum-weight matching
    add_arc(lnode(e.left), rnode(e.right), -e.weight);
    potential[rnode(e.right)] = std::min(potential[rnode(e.right)], -e.weight);
  }
  for (std::size_t l = 0; l < num_left; ++l) add_arc(source, lnode(l), 0.0);
  for (std::size_t r = 0; r < num_right; ++r) {
    add_arc(rnode(r), sink, 0.0);
    potential[sink] = std::min(potential[sink], potential[rnode(r)]);
  }
  // the layered graph is a DAG, so the above are exact shortest distances from source

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(nodes);
  std::vector<std::size_t> prev_node(nodes), prev_arc(nodes);
  using Item = std::pair<double, std::size_t>;

  MatchingResult result;
  for (;;) {
    std::fill(dist.begin(), dist.end(), kInf);
    dist[source] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.push({0.0, source});
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (std::size_t k = 0; k < graph[u].size(); ++k) {
        const Arc& a = graph[u][k];
        if (a.cap == 0 || potential[a.to] == kInf) continue;
        const double reduced = std::max(0.0, a.cost + potential[u] - potential[a.to]);
        if (d + reduced < dist[a.to]) {
          dist[a.to] = d + reduced;
          prev_node[a.to] = u;
          prev_arc[a.to] = k;
          heap.push({dist[a.to], a.to});
        }
      }
    }
    if (dist[sink] == kInf) break;
    const double path_cost = dist[sink] + potential[sink] - potential[source];
    if (path_cost >= 0.0) break;  // augmenting would not increase the matched weight
    for (std::size_t v = 0; v < nodes; ++v)
      if (dist[v] < kInf) potential[v] += dist[v];
    for (std::size_t v = sink; v != source; v = prev_node[v]) {
      Arc& a = graph[prev_node[v]][prev_arc[v]];
      a.cap -= 1;
      graph[v][a.rev].cap += 1;
    }
  }

  for (std::size_t l = 0; l < num_left; ++l) {
    for (const Arc& a : graph[lnode(l)]) {
      if (a.to >= rnode(0) && a.to < sink && a.cap == 0 && a.cost < 0.0) {
        result.pairs.emplace_back(l, a.to - rnode(0));
        result.value -= a.cost;
      }
    }
  }
  return result;
}

}  // namespace spi
