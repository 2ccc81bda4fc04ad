#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "pageleap/mem_file.hpp"
#include "pageleap/vmap.hpp"

namespace pageleap {

enum class PageOutcome : uint8_t { Moved, NotMoved, Failed };

struct BaselineResult {
  bool skipped = false;
  std::string skip_reason;
  std::chrono::nanoseconds elapsed{0};
  bool timed_out = false;
  std::vector<PageOutcome> page_outcome;
  std::vector<int> page_error;            // errno per page where Failed
  std::map<int, size_t> final_node_histogram;  // filled on autobalance timeout
};

// Plain memcpy of the region into a destination extent; timing covers the
// copy, so fault cost shows up only when the extent was not pre-faulted.
// `pooled` selects pre-faulted allocation. The extent is released afterwards
// (its pages stay faulted, which is exactly the pooling effect).
BaselineResult raw_copy(VirtualRegion& region, PhysicalStore& dst, bool pooled);

// Kernel page migration via move_pages(2), one entry per region page.
// Per-page kernel statuses are reported verbatim. Skipped on simulated
// topologies: the kernel cannot move pages between nodes that do not exist.
BaselineResult os_move_pages(VirtualRegion& region, int dst_node);

// Anonymous memory for the automatic-balancing observer (rewired file pages
// are not what the kernel's balancer works on).
class AnonArea {
 public:
  AnonArea(size_t length, int bind_node, bool touch);
  ~AnonArea();
  AnonArea(const AnonArea&) = delete;
  AnonArea& operator=(const AnonArea&) = delete;
  std::byte* base() const { return base_; }
  size_t length() const { return length_; }

 private:
  std::byte* base_ = nullptr;
  size_t length_ = 0;
};

// Polls page locations until everything sits on dst_node or the timeout
// passes. Elapsed time is quantised to whole polling ticks. Skipped when the
// kernel balancer is off or the topology is simulated.
BaselineResult observe_autobalance(std::byte* base, size_t length, int dst_node,
                                   std::chrono::milliseconds poll,
                                   std::chrono::nanoseconds timeout);

}  // namespace pageleap
