#include "pageleap/vmap.hpp"

#include <map>
#include <stdexcept>

#include "pageleap/errors.hpp"
#include "pageleap/os.hpp"

namespace pageleap {

namespace {
std::mutex g_regions_mu;
std::map<uintptr_t, VirtualRegion*> g_regions;  // base -> region
}  // namespace

VirtualRegion* find_region(const void* addr) {
  std::lock_guard<std::mutex> lk(g_regions_mu);
  auto p = reinterpret_cast<uintptr_t>(addr);
  auto it = g_regions.upper_bound(p);
  if (it == g_regions.begin()) return nullptr;
  --it;
  VirtualRegion* r = it->second;
  if (p < it->first + r->length()) return r;
  return nullptr;
}

std::unique_ptr<VirtualRegion> VirtualRegion::reserve(size_t length, size_t page_size) {
  if (page_size == 0 || (page_size & (page_size - 1)) != 0 ||
      page_size % os::small_page_size() != 0)
    throw std::invalid_argument("reserve: bad page size");
  if (length % page_size != 0)
    throw std::invalid_argument("reserve: length must be a multiple of the page size");

  auto region = std::unique_ptr<VirtualRegion>(new VirtualRegion());
  region->length_ = length;
  region->page_size_ = page_size;
  if (length > 0) {
    region->base_ = static_cast<std::byte*>(os::reserve(length, page_size));
    region->table_.assign(length / page_size, PageEntry{});
    std::lock_guard<std::mutex> lk(g_regions_mu);
    g_regions[reinterpret_cast<uintptr_t>(region->base_)] = region.get();
  }
  return region;
}

VirtualRegion::~VirtualRegion() {
  if (!base_) return;
  {
    std::lock_guard<std::mutex> lk(g_regions_mu);
    g_regions.erase(reinterpret_cast<uintptr_t>(base_));
  }
  os::unmap(base_, length_);
}

void VirtualRegion::check_range(size_t voffset, size_t len, const char* op) const {
  if (voffset % page_size_ != 0 || len % page_size_ != 0)
    throw std::invalid_argument(std::string(op) + ": offsets must be page aligned");
  if (len == 0 || voffset + len > length_ || voffset + len < voffset)
    throw std::invalid_argument(std::string(op) + ": range outside region");
}

void VirtualRegion::map_range(size_t voffset, const Extent& extent, Protection prot) {
  if (!extent.store) throw std::invalid_argument("map_range: extent has no store");
  check_range(voffset, extent.length, "map_range");
  if (extent.store->page_size() != page_size_)
    throw std::invalid_argument("map_range: extent page size differs from region");

  std::lock_guard<std::mutex> lk(mu_);
  // Protection is applied by the remap itself: one OS call rewires the pages
  // and sets their access rights together.
  os::map_shared_fixed(base_ + voffset, extent.length,
                       prot == Protection::ReadWrite, extent.store->fd(),
                       extent.offset);
  keepalive_.insert(extent.store);
  size_t first = voffset / page_size_;
  size_t pages = extent.length / page_size_;
  for (size_t i = 0; i < pages; ++i) {
    PageEntry& e = table_[first + i];
    if (e.store == nullptr) ++mapped_pages_;
    e.store = extent.store.get();
    e.offset = extent.offset + i * page_size_;
  }
}

void VirtualRegion::protect_range(size_t voffset, size_t len, Protection prot) {
  check_range(voffset, len, "protect_range");
  {
    std::lock_guard<std::mutex> lk(mu_);
    size_t first = voffset / page_size_;
    for (size_t i = 0; i < len / page_size_; ++i)
      if (table_[first + i].store == nullptr)
        throw Error("protect_range: range is not mapped");
  }
  os::protect(base_ + voffset, len, prot == Protection::ReadWrite);
}

std::optional<Mapping> VirtualRegion::mapping_of(size_t voffset) const {
  if (voffset % page_size_ != 0 || voffset >= length_)
    throw std::invalid_argument("mapping_of: bad offset");
  std::lock_guard<std::mutex> lk(mu_);
  const PageEntry& e = table_[voffset / page_size_];
  if (e.store == nullptr) return std::nullopt;
  for (const auto& sp : keepalive_)
    if (sp.get() == e.store) return Mapping{sp, e.offset};
  return std::nullopt;  // unreachable: keepalive_ holds every mapped store
}

bool VirtualRegion::fully_mapped() const {
  std::lock_guard<std::mutex> lk(mu_);
  return mapped_pages_ == table_.size();
}

}  // namespace pageleap
