#include "pageleap/baselines.hpp"

#include <sys/mman.h>

#include <cstring>
#include <stdexcept>
#include <thread>

#include "pageleap/errors.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"

namespace pageleap {

BaselineResult raw_copy(VirtualRegion& region, PhysicalStore& dst, bool pooled) {
  BaselineResult r;
  if (region.length() == 0) return r;
  // A pooled run measures reuse of already-faulted pages; a cold pool would
  // silently turn it into a fresh run under the wrong label.
  if (pooled && dst.prefaulted_free_bytes() < region.length())
    throw PoolExhausted("raw_copy: pooled run needs " +
                        std::to_string(region.length()) +
                        " pre-faulted free bytes");
  Extent e = dst.allocate(region.length(), pooled);
  auto t0 = std::chrono::steady_clock::now();
  std::memcpy(dst.base() + e.offset, region.base(), region.length());
  r.elapsed = std::chrono::steady_clock::now() - t0;
  dst.release(e);
  r.page_outcome.assign(region.page_count(), PageOutcome::Moved);
  r.page_error.assign(region.page_count(), 0);
  return r;
}

BaselineResult os_move_pages(VirtualRegion& region, int dst_node) {
  BaselineResult r;
  const Topology& topo = process_topology();
  if (topo.simulated) {
    r.skipped = true;
    r.skip_reason = "requires multiple physical NUMA nodes";
    return r;
  }
  if (!topo.has_node(dst_node)) throw std::invalid_argument("os_move_pages: unknown node");
  if (region.length() == 0) return r;

  size_t pages = region.page_count();
  std::vector<void*> addrs(pages);
  std::vector<int> nodes(pages, dst_node);
  std::vector<int> status(pages, 0);
  for (size_t i = 0; i < pages; ++i) addrs[i] = region.base() + i * region.page_size();

  auto t0 = std::chrono::steady_clock::now();
  os::move_pages_to(addrs.data(), nodes.data(), status.data(), pages);
  r.elapsed = std::chrono::steady_clock::now() - t0;

  r.page_outcome.resize(pages);
  r.page_error.assign(pages, 0);
  for (size_t i = 0; i < pages; ++i) {
    if (status[i] == dst_node) {
      r.page_outcome[i] = PageOutcome::Moved;
    } else if (status[i] >= 0) {
      r.page_outcome[i] = PageOutcome::NotMoved;
    } else {
      r.page_outcome[i] = PageOutcome::Failed;
      r.page_error[i] = -status[i];
    }
  }
  return r;
}

AnonArea::AnonArea(size_t length, int bind_node, bool touch) {
  if (length == 0) throw std::invalid_argument("AnonArea: zero length");
  base_ = static_cast<std::byte*>(os::map_anon_private(length));
  length_ = length;
  if (bind_node >= 0 && !process_topology().simulated)
    os::bind_to_node(base_, length, bind_node);
  if (touch) {
    size_t page = os::small_page_size();
    for (size_t off = 0; off < length; off += page) base_[off] = std::byte{1};
  }
}

AnonArea::~AnonArea() {
  if (base_) munmap(base_, length_);
}

BaselineResult observe_autobalance(std::byte* base, size_t length, int dst_node,
                                   std::chrono::milliseconds poll,
                                   std::chrono::nanoseconds timeout) {
  if (poll <= std::chrono::milliseconds::zero())
    throw std::invalid_argument("observe_autobalance: poll period must be positive");
  BaselineResult r;
  const Topology& topo = process_topology();
  if (topo.simulated) {
    r.skipped = true;
    r.skip_reason = "requires multiple physical NUMA nodes";
    return r;
  }
  if (!os::numa_balancing_enabled()) {
    r.skipped = true;
    r.skip_reason = "kernel automatic NUMA balancing is disabled";
    return r;
  }

  size_t page = os::small_page_size();
  size_t pages = length / page;
  std::vector<void*> addrs(pages);
  std::vector<int> status(pages, 0);
  for (size_t i = 0; i < pages; ++i) addrs[i] = base + i * page;

  for (uint64_t tick = 1;; ++tick) {
    std::this_thread::sleep_for(poll);
    os::query_pages(addrs.data(), status.data(), pages);
    bool all_there = true;
    for (size_t i = 0; i < pages; ++i)
      if (status[i] != dst_node) {
        all_there = false;
        break;
      }
    if (all_there) {
      r.elapsed = tick * std::chrono::nanoseconds(poll);
      return r;
    }
    if (tick * std::chrono::nanoseconds(poll) >= timeout) {
      r.timed_out = true;
      r.elapsed = tick * std::chrono::nanoseconds(poll);
      for (size_t i = 0; i < pages; ++i) r.final_node_histogram[status[i]] += 1;
      return r;
    }
  }
}

}  // namespace pageleap
