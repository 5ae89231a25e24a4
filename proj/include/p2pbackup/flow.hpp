#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace p2pbackup {

enum class ArcKind { source_to_slot, slot_to_peer, peer_to_sink, other };

struct FlowArc {
  std::size_t from = 0;
  std::size_t to = 0;
  std::int64_t capacity = 0;
  ArcKind kind = ArcKind::other;
  // Provenance: matrix column for slot arcs, matrix row for peer arcs; -1 if unused.
  std::int64_t slot = -1;
  std::int64_t peer = -1;
};

/// Directed network with integer capacities. Node 0 and 1 are conventionally
/// the source and sink for networks built by build_flow_network, but any pair
/// may be used.
struct FlowNetwork {
  std::size_t num_nodes = 0;
  std::size_t source = 0;
  std::size_t sink = 1;
  std::vector<FlowArc> arcs;

  std::size_t add_node() { return num_nodes++; }
  std::size_t add_arc(FlowArc arc);
};

struct MaxFlowResult {
  std::int64_t value = 0;
  std::vector<std::int64_t> arc_flow;  // parallel to FlowNetwork::arcs
};

/// Dinic's blocking-flow algorithm: O(V^2 E) in general, O(E sqrt(V)) on
/// the unit-capacity bipartite networks built for scheduling.
MaxFlowResult max_flow(const FlowNetwork& network);

}  // namespace p2pbackup
