#include "pageleap/mem_file.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <cerrno>
#include <stdexcept>

#include "pageleap/errors.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"

namespace pageleap {

std::shared_ptr<PhysicalStore> PhysicalStore::create(int node, size_t page_size,
                                                     size_t capacity,
                                                     Backing backing,
                                                     const StoreOptions& opts) {
  const Topology& topo = process_topology();
  if (!topo.has_node(node)) throw std::invalid_argument("store: unknown node");
  size_t expected =
      backing == Backing::ShmFile ? os::small_page_size() : os::default_huge_page_size();
  if (page_size != expected)
    throw std::invalid_argument("store: page size does not match backing");
  if (capacity == 0 || capacity % page_size != 0)
    throw std::invalid_argument("store: capacity must be a positive multiple of the page size");

  auto store = std::shared_ptr<PhysicalStore>(new PhysicalStore());
  store->node_ = node;
  store->page_size_ = page_size;
  store->capacity_ = capacity;
  store->backing_ = backing;

  if (backing == Backing::ShmFile) {
    store->fd_ = os::memfd("pageleap-node" + std::to_string(node), capacity);
  } else {
    auto mount = opts.hugetlb_mount ? opts.hugetlb_mount : os::hugetlbfs_mount();
    if (!mount)
      throw Error("store: no hugetlbfs mount available");
    size_t need = capacity / page_size;
    size_t avail = topo.simulated ? os::free_huge_pages() : os::free_huge_pages(node);
    if (avail < need)
      throw Error("store: insufficient free huge pages reserved (" +
                  std::to_string(avail) + " < " + std::to_string(need) + ")");
    store->fd_ = os::hugetlb_file(*mount, capacity);
  }

  void* base = mmap(nullptr, capacity, PROT_READ | PROT_WRITE, MAP_SHARED,
                    store->fd_, 0);
  if (base == MAP_FAILED) {
    int err = errno;
    close(store->fd_);
    store->fd_ = -1;
    throw_errno("store: mmap of backing file", err);
  }
  store->base_ = static_cast<std::byte*>(base);

  // Pin the file's pages to the node. With a simulated topology there is only
  // one physical node, so the binding is recorded as skipped rather than lied
  // about.
  if (topo.simulated) {
    store->binding_simulated_ = true;
  } else {
    os::bind_to_node(base, capacity, node);
  }

  store->free_[0] = capacity;
  store->free_bytes_ = capacity;
  store->faulted_.assign(capacity / page_size, false);
  return store;
}

PhysicalStore::~PhysicalStore() {
  if (base_) munmap(base_, capacity_);
  if (fd_ >= 0) close(fd_);
}

void PhysicalStore::touch_pages(size_t offset, size_t length) {
  for (size_t off = offset; off < offset + length; off += page_size_) {
    size_t idx = off / page_size_;
    if (faulted_[idx]) continue;
    // A read-modify-write forces the kernel to materialise the page in the
    // shared file rather than a zero-page alias.
    volatile std::byte* p = base_ + off;
    std::byte v = *p;
    *p = v;
    faulted_[idx] = true;
    ++faulted_pages_;
  }
}

Extent PhysicalStore::allocate(size_t length, bool prefault) {
  if (length == 0 || length % page_size_ != 0)
    throw std::invalid_argument("allocate: length must be a positive multiple of the page size");
  std::lock_guard<std::mutex> lk(mu_);
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second < length) continue;
    size_t offset = it->first;
    size_t rest = it->second - length;
    free_.erase(it);
    if (rest > 0) free_[offset + length] = rest;
    free_bytes_ -= length;

    // Record as allocated, merging with an adjacent allocated run.
    auto next = allocated_.lower_bound(offset);
    size_t a_off = offset, a_len = length;
    if (next != allocated_.end() && offset + length == next->first) {
      a_len += next->second;
      next = allocated_.erase(next);
    }
    if (next != allocated_.begin()) {
      auto prev = std::prev(next);
      if (prev->first + prev->second == a_off) {
        a_off = prev->first;
        a_len += prev->second;
        allocated_.erase(prev);
      }
    }
    allocated_[a_off] = a_len;

    if (prefault) touch_pages(offset, length);
    return Extent{shared_from_this(), offset, length};
  }
  throw PoolExhausted("allocate: no free extent of " + std::to_string(length) + " bytes");
}

void PhysicalStore::release(const Extent& extent) {
  if (extent.store.get() != this)
    throw std::invalid_argument("release: extent belongs to another store");
  if (extent.length == 0 || extent.length % page_size_ != 0 ||
      extent.offset % page_size_ != 0 ||
      extent.offset + extent.length > capacity_)
    throw std::invalid_argument("release: malformed extent");
  std::lock_guard<std::mutex> lk(mu_);

  // The whole range must currently be allocated; since allocated_ is
  // coalesced, that means one entry covers it.
  auto it = allocated_.upper_bound(extent.offset);
  if (it == allocated_.begin())
    throw std::invalid_argument("release: range is not allocated");
  --it;
  size_t run_off = it->first, run_len = it->second;
  if (extent.offset < run_off || extent.offset + extent.length > run_off + run_len)
    throw std::invalid_argument("release: range is not allocated");

  allocated_.erase(it);
  if (extent.offset > run_off) allocated_[run_off] = extent.offset - run_off;
  size_t tail = run_off + run_len - (extent.offset + extent.length);
  if (tail > 0) allocated_[extent.offset + extent.length] = tail;

  // Insert into the free list, coalescing with both neighbours.
  size_t f_off = extent.offset, f_len = extent.length;
  auto next = free_.lower_bound(f_off);
  if (next != free_.end() && f_off + f_len == next->first) {
    f_len += next->second;
    next = free_.erase(next);
  }
  if (next != free_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == f_off) {
      f_off = prev->first;
      f_len += prev->second;
      free_.erase(prev);
    }
  }
  free_[f_off] = f_len;
  free_bytes_ += extent.length;
}

PoolStats PhysicalStore::stats() const {
  std::lock_guard<std::mutex> lk(mu_);
  PoolStats s;
  s.capacity_bytes = capacity_;
  s.free_bytes = free_bytes_;
  s.used_bytes = capacity_ - free_bytes_;
  s.prefaulted_pages = faulted_pages_;
  return s;
}

size_t PhysicalStore::prefaulted_in(size_t offset, size_t length) const {
  std::lock_guard<std::mutex> lk(mu_);
  size_t n = 0;
  for (size_t off = offset; off < offset + length; off += page_size_)
    if (faulted_[off / page_size_]) ++n;
  return n;
}

size_t PhysicalStore::prefaulted_free_bytes() const {
  std::lock_guard<std::mutex> lk(mu_);
  size_t bytes = 0;
  for (const auto& [off, len] : free_)
    for (size_t o = off; o < off + len; o += page_size_)
      if (faulted_[o / page_size_]) bytes += page_size_;
  return bytes;
}

Extent allocate_extent(PhysicalStore& store, size_t length, bool prefault) {
  return store.allocate(length, prefault);
}

void release_extent(const Extent& extent) {
  if (!extent.store) throw std::invalid_argument("release: extent has no store");
  extent.store->release(extent);
}

}  // namespace pageleap
