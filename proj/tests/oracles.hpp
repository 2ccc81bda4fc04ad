#pragma once

// Reference implementations used only by tests: deliberately naive, written
// independently of the library code they check.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "pageleap/engine.hpp"
#include "pageleap/workload.hpp"

namespace oracle {

// Page-granular bitmap simulation of a first-fit, lowest-offset pool with
// eager coalescing (coalescing is implicit in a bitmap). Mirrors the
// observable behaviour of PhysicalStore's extent allocator.
class FreeListModel {
 public:
  FreeListModel(size_t capacity, size_t page_size)
      : page_(page_size), pages_(capacity / page_size, true) {}

  std::optional<size_t> alloc(size_t length) {
    size_t need = length / page_;
    if (need == 0 || need > pages_.size()) return std::nullopt;
    size_t run = 0;
    for (size_t i = 0; i < pages_.size(); ++i) {
      run = pages_[i] ? run + 1 : 0;
      if (run == need) {
        size_t first = i + 1 - need;
        for (size_t p = first; p <= i; ++p) pages_[p] = false;
        return first * page_;
      }
    }
    return std::nullopt;
  }

  bool release(size_t offset, size_t length) {
    size_t first = offset / page_, n = length / page_;
    for (size_t p = first; p < first + n; ++p)
      if (p >= pages_.size() || pages_[p]) return false;  // double free / OOB
    for (size_t p = first; p < first + n; ++p) pages_[p] = true;
    return true;
  }

  size_t free_bytes() const {
    size_t n = 0;
    for (bool b : pages_) n += b;
    return n * page_;
  }

 private:
  size_t page_;
  std::vector<bool> pages_;
};

// Applies journal entries (already sorted by seq) on top of a snapshot.
inline void replay_journal(std::vector<std::byte>& snapshot,
                           const std::vector<pageleap::JournalEntry>& entries) {
  for (const auto& e : entries) {
    uint64_t v = e.new_value;
    std::memcpy(snapshot.data() + e.offset, &v, sizeof(v));
  }
}

// Row-at-a-time evaluation of the grouped pricing summary, using a map and
// 128-bit accumulation.
struct NaiveQ1Row {
  long long sum_qty = 0, sum_base = 0, sum_disc_price = 0, sum_charge = 0,
            sum_disc = 0, count = 0;
};

inline std::map<std::pair<char, char>, NaiveQ1Row> naive_q1(
    const pageleap::LineitemTable& t, int32_t cutoff) {
  std::map<std::pair<char, char>, NaiveQ1Row> groups;
  for (size_t i = 0; i < t.row_count; ++i) {
    if (t.shipdate[i] > cutoff) continue;
    auto& g = groups[{char(t.returnflag[i]), char(t.linestatus[i])}];
    __int128 price = t.extendedprice[i];
    __int128 dp = price * (100 - t.discount[i]);
    __int128 ch = dp * (100 + t.tax[i]);
    g.sum_qty += t.quantity[i];
    g.sum_base += t.extendedprice[i];
    g.sum_disc_price += (long long)dp;
    g.sum_charge += (long long)ch;
    g.sum_disc += t.discount[i];
    g.count += 1;
  }
  return groups;
}

inline long long naive_q6(const pageleap::LineitemTable& t, int32_t lo, int32_t hi,
                          long long dlo, long long dhi, long long qty_below) {
  long long revenue = 0;
  for (size_t i = 0; i < t.row_count; ++i) {
    bool in = t.shipdate[i] >= lo && t.shipdate[i] < hi && t.discount[i] >= dlo &&
              t.discount[i] <= dhi && t.quantity[i] < qty_below;
    if (in) revenue += t.extendedprice[i] * t.discount[i];
  }
  return revenue;
}

// Structural validation of an area split.
inline bool check_split(size_t voffset, size_t length, unsigned factor,
                        size_t page_size,
                        const std::vector<pageleap::AreaSpan>& children) {
  size_t pages = length / page_size;
  if (pages == 1)
    return children.size() == 1 && children[0].voffset == voffset &&
           children[0].length == length;
  size_t expect_n = std::min<size_t>(factor, pages);
  if (children.size() != expect_n) return false;
  size_t cursor = voffset, min_len = SIZE_MAX, max_len = 0;
  for (const auto& c : children) {
    if (c.voffset != cursor) return false;           // contiguous, in order
    if (c.length == 0 || c.length % page_size != 0) return false;
    min_len = std::min(min_len, c.length);
    max_len = std::max(max_len, c.length);
    cursor += c.length;
  }
  if (cursor != voffset + length) return false;      // exact cover
  return max_len - min_len <= page_size;             // near-even
}

// Legal transitions of the area lifecycle, for validating logged histories.
inline bool legal_transition(pageleap::AreaState from, pageleap::AreaState to) {
  using S = pageleap::AreaState;
  static const std::set<std::pair<S, S>> legal = {
      {S::Idle, S::Copying},     {S::Copying, S::Sealed}, {S::Copying, S::Dirty},
      {S::Sealed, S::Remapping}, {S::Sealed, S::Dirty},   {S::Remapping, S::Remapped},
      {S::Dirty, S::Idle},
  };
  return legal.count({from, to}) > 0;
}

}  // namespace oracle
