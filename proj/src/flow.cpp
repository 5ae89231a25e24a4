#include "p2pbackup/flow.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace p2pbackup {

std::size_t FlowNetwork::add_arc(FlowArc arc) {
  if (arc.from >= num_nodes || arc.to >= num_nodes)
    throw std::out_of_range("arc endpoint is not a node of the network");
  if (arc.capacity < 0) throw std::invalid_argument("negative arc capacity");
  arcs.push_back(arc);
  return arcs.size() - 1;
}

namespace {

class Dinic {
 public:
  explicit Dinic(const FlowNetwork& net)
      : adjacency_(net.num_nodes), level_(net.num_nodes), next_(net.num_nodes) {
    edges_.reserve(net.arcs.size() * 2);
    for (const auto& arc : net.arcs) {
      adjacency_[arc.from].push_back(edges_.size());
      edges_.push_back({arc.to, arc.capacity});
      adjacency_[arc.to].push_back(edges_.size());
      edges_.push_back({arc.from, 0});
    }
  }

  std::int64_t run(std::size_t s, std::size_t t) {
    if (s == t) return 0;
    std::int64_t total = 0;
    while (bfs(s, t)) {
      std::fill(next_.begin(), next_.end(), 0);
      while (const std::int64_t pushed = dfs(s, t, std::numeric_limits<std::int64_t>::max()))
        total += pushed;
    }
    return total;
  }

  // Flow on original arc i is the residual capacity of its reverse edge.
  std::int64_t flow_on(std::size_t arc) const { return edges_[2 * arc + 1].residual; }

 private:
  struct Edge {
    std::size_t to;
    std::int64_t residual;
  };

  bool bfs(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::vector<std::size_t> queue{s};
    level_[s] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t v = queue[head];
      for (std::size_t e : adjacency_[v]) {
        const auto& edge = edges_[e];
        if (edge.residual > 0 && level_[edge.to] < 0) {
          level_[edge.to] = level_[v] + 1;
          queue.push_back(edge.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  std::int64_t dfs(std::size_t v, std::size_t t, std::int64_t limit) {
    if (v == t) return limit;
    for (auto& i = next_[v]; i < adjacency_[v].size(); ++i) {
      const std::size_t e = adjacency_[v][i];
      auto& edge = edges_[e];
      if (edge.residual <= 0 || level_[edge.to] != level_[v] + 1) continue;
      if (const std::int64_t pushed = dfs(edge.to, t, std::min(limit, edge.residual))) {
        edge.residual -= pushed;
        edges_[e ^ 1].residual += pushed;
        return pushed;
      }
    }
    return 0;
  }

  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
};

}  // namespace

MaxFlowResult max_flow(const FlowNetwork& network) {
  if (network.source >= network.num_nodes || network.sink >= network.num_nodes)
    throw std::out_of_range("source or sink is not a node of the network");
  Dinic solver(network);
  MaxFlowResult result;
  result.value = solver.run(network.source, network.sink);
  result.arc_flow.resize(network.arcs.size());
  for (std::size_t i = 0; i < network.arcs.size(); ++i) result.arc_flow[i] = solver.flow_on(i);
  return result;
}

}  // namespace p2pbackup
