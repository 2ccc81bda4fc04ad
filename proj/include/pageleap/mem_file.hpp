#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace pageleap {

class PhysicalStore;

// A run of physical pages inside a store's file. Offsets and lengths are in
// bytes and always page-aligned.
struct Extent {
  std::shared_ptr<PhysicalStore> store;
  size_t offset = 0;
  size_t length = 0;
};

struct PoolStats {
  size_t capacity_bytes = 0;
  size_t free_bytes = 0;
  size_t used_bytes = 0;
  size_t prefaulted_pages = 0;
};

enum class Backing { ShmFile, HugetlbFile };

struct StoreOptions {
  // hugetlbfs mount to place huge-page files in; autodetected when empty.
  std::optional<std::string> hugetlb_mount;
};

// A main-memory file pinned to one node: the process-visible handle to a pool
// of physical pages. Extents handed out from it can be mapped anywhere in the
// address space, which is what makes page remapping possible without copying
// through the kernel.
//
// Free space is kept as an offset-ordered list; allocation is first-fit at
// the lowest offset and release coalesces with both neighbours eagerly.
// Pages stay faulted in once touched, including across release/reuse, so a
// pooled extent can be handed out pre-faulted with zero page-fault cost.
class PhysicalStore : public std::enable_shared_from_this<PhysicalStore> {
 public:
  static std::shared_ptr<PhysicalStore> create(int node, size_t page_size,
                                               size_t capacity, Backing backing,
                                               const StoreOptions& opts = {});
  ~PhysicalStore();

  PhysicalStore(const PhysicalStore&) = delete;
  PhysicalStore& operator=(const PhysicalStore&) = delete;

  int node() const { return node_; }
  size_t page_size() const { return page_size_; }
  size_t capacity() const { return capacity_; }
  Backing backing() const { return backing_; }
  int fd() const { return fd_; }
  // Whole-file private window used for prefaulting and direct inspection.
  std::byte* base() const { return base_; }
  // True when the node binding was skipped (simulated topology).
  bool binding_simulated() const { return binding_simulated_; }

  // First-fit allocation; prefault touches every not-yet-faulted page of the
  // result before returning. Throws PoolExhausted when nothing fits.
  Extent allocate(size_t length, bool prefault);

  // Releases a range back to the pool. Any page-aligned subrange of what is
  // currently allocated is accepted, so callers may return an allocation in
  // pieces. Pages keep their faulted state.
  void release(const Extent& extent);

  PoolStats stats() const;

  // Faulted-page count within [offset, offset+length).
  size_t prefaulted_in(size_t offset, size_t length) const;
  // Largest allocation that could currently be satisfied by pre-faulted free
  // space alone (sum over free extents of their faulted bytes).
  size_t prefaulted_free_bytes() const;

 private:
  PhysicalStore() = default;
  void touch_pages(size_t offset, size_t length);

  int node_ = -1;
  size_t page_size_ = 0;
  size_t capacity_ = 0;
  Backing backing_ = Backing::ShmFile;
  int fd_ = -1;
  std::byte* base_ = nullptr;
  bool binding_simulated_ = false;

  mutable std::mutex mu_;
  std::map<size_t, size_t> free_;       // offset -> length, coalesced
  std::map<size_t, size_t> allocated_;  // offset -> length, coalesced
  std::vector<bool> faulted_;           // per page
  size_t free_bytes_ = 0;
  size_t faulted_pages_ = 0;
};

Extent allocate_extent(PhysicalStore& store, size_t length, bool prefault);
void release_extent(const Extent& extent);

}  // namespace pageleap
