#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "pageleap/mem_file.hpp"

namespace pageleap {

enum class Protection { ReadOnly, ReadWrite };

struct Mapping {
  std::shared_ptr<PhysicalStore> store;
  size_t offset = 0;  // byte offset inside the store
};

// A contiguous virtual address range whose pages are individually rewirable
// to physical-store extents. Reserved PROT_NONE up front so the range never
// collides with other mappings; map_range() then splices file pages in with
// a single fixed-address remap per call, applying the requested protection
// in that same call.
class VirtualRegion {
 public:
  static std::unique_ptr<VirtualRegion> reserve(size_t length, size_t page_size);
  ~VirtualRegion();

  VirtualRegion(const VirtualRegion&) = delete;
  VirtualRegion& operator=(const VirtualRegion&) = delete;

  std::byte* base() const { return base_; }
  size_t length() const { return length_; }
  size_t page_size() const { return page_size_; }
  size_t page_count() const { return page_size_ ? length_ / page_size_ : 0; }

  // Rewires [voffset, voffset+extent.length) to the extent, atomically per
  // page and with exactly one remap call for the whole range.
  void map_range(size_t voffset, const Extent& extent, Protection prot);

  void protect_range(size_t voffset, size_t length, Protection prot);

  std::optional<Mapping> mapping_of(size_t voffset) const;
  bool fully_mapped() const;

 private:
  VirtualRegion() = default;
  void check_range(size_t voffset, size_t len, const char* op) const;

  std::byte* base_ = nullptr;
  size_t length_ = 0;
  size_t page_size_ = 0;

  struct PageEntry {
    PhysicalStore* store = nullptr;
    size_t offset = 0;
  };
  mutable std::mutex mu_;
  std::vector<PageEntry> table_;
  std::set<std::shared_ptr<PhysicalStore>> keepalive_;
  size_t mapped_pages_ = 0;
};

// Registry of live regions, used to answer simulated-topology page-location
// queries. Not consulted from signal context.
VirtualRegion* find_region(const void* addr);

}  // namespace pageleap
