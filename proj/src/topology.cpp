#include "pageleap/topology.hpp"

#include <cerrno>
#include <mutex>
#include <stdexcept>

#include "pageleap/errors.hpp"
#include "pageleap/mem_file.hpp"
#include "pageleap/os.hpp"
#include "pageleap/vmap.hpp"

namespace pageleap {

bool Topology::has_node(int node) const {
  for (int n : nodes)
    if (n == node) return true;
  return false;
}

const std::vector<int>& Topology::cpus_of(int node) const {
  auto it = cpus.find(node);
  if (it == cpus.end()) throw std::invalid_argument("unknown node");
  return it->second;
}

Topology detect_topology(bool force_simulated) {
  Topology t;
  auto online = os::online_nodes();
  t.physical_nodes = static_cast<int>(online.size());
  if (!force_simulated && online.size() >= 2) {
    t.nodes = online;
    for (int n : online) t.cpus[n] = os::cpus_of_node(n);
    t.simulated = false;
    return t;
  }
  // Single physical node: expose two simulated nodes backed by it. CPUs of
  // the real node are split between them; with one CPU both share it.
  t.simulated = true;
  t.nodes = {0, 1};
  auto cpus = os::cpus_of_node(online.empty() ? 0 : online.front());
  if (cpus.empty()) cpus = {0};
  if (cpus.size() == 1) {
    t.cpus[0] = cpus;
    t.cpus[1] = cpus;
  } else {
    size_t half = cpus.size() / 2;
    t.cpus[0] = std::vector<int>(cpus.begin(), cpus.begin() + half);
    t.cpus[1] = std::vector<int>(cpus.begin() + half, cpus.end());
  }
  return t;
}

namespace {
std::mutex g_topo_mu;
Topology g_topology;
bool g_topology_set = false;
}  // namespace

const Topology& process_topology() {
  std::lock_guard<std::mutex> lk(g_topo_mu);
  if (!g_topology_set) {
    g_topology = detect_topology();
    g_topology_set = true;
  }
  return g_topology;
}

void set_process_topology(const Topology& topo) {
  std::lock_guard<std::mutex> lk(g_topo_mu);
  g_topology = topo;
  g_topology_set = true;
}

void pin_current_thread(int cpu) { os::pin_thread_to_cpu(cpu); }

std::optional<int> node_of_page(const void* addr) {
  const Topology& topo = process_topology();
  if (topo.simulated) {
    if (VirtualRegion* region = find_region(addr)) {
      size_t voffset = static_cast<size_t>(
          static_cast<const std::byte*>(addr) - region->base());
      voffset -= voffset % region->page_size();
      auto m = region->mapping_of(voffset);
      if (!m) return std::nullopt;  // reserved but never rewired
      return m->store->node();
    }
  }
  void* page = const_cast<void*>(addr);
  int status = 0;
  os::query_pages(&page, &status, 1);
  if (status >= 0) return status;
  if (status == -ENOENT) return std::nullopt;  // valid but not resident
  throw std::invalid_argument("node_of_page: address not mapped");
}

}  // namespace pageleap
