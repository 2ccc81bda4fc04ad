#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

namespace pageleap {

// NUMA layout as seen by this process. When the host has a single physical
// node, detection falls back to two simulated nodes that alias it, so the
// full migration path stays exercisable on laptop-class machines.
struct Topology {
  std::vector<int> nodes;
  std::map<int, std::vector<int>> cpus;  // node -> cpu ids
  bool simulated = false;
  int physical_nodes = 0;

  bool has_node(int node) const;
  const std::vector<int>& cpus_of(int node) const;
};

Topology detect_topology(bool force_simulated = false);

// Process-wide topology used by default throughout the library. Detected
// lazily; replaceable (e.g. the benchmark's --mode flag).
const Topology& process_topology();
void set_process_topology(const Topology& topo);

void pin_current_thread(int cpu);

// Where a page physically lives right now. nullopt: the page is valid but no
// physical frame backs it yet. Simulated-node answers come from the mapping
// tables of registered regions; anything else is asked of the kernel.
std::optional<int> node_of_page(const void* addr);

}  // namespace pageleap
