#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pageleap {

// --------------------------------------------------------------------------
// Raw access patterns (bandwidth probes).

enum class AccessPattern { SeqRead, SeqWrite, RandRead, RandWrite };

// Sequential patterns make one full pass over the range in 8-byte units;
// random patterns perform `count` accesses at uniform 8-aligned offsets.
std::chrono::nanoseconds run_access_pattern(std::byte* base, size_t length,
                                            AccessPattern pattern, size_t count,
                                            uint64_t seed);

void fill_random(std::byte* base, size_t length, uint64_t seed);

// --------------------------------------------------------------------------
// Journaled write bursts.

struct JournalEntry {
  uint64_t seq = 0;     // global issue order
  uint64_t offset = 0;  // byte offset of the 8-byte cell, base-relative
  uint64_t old_value = 0;
  uint64_t new_value = 0;
  uint32_t thread = 0;
};

// Append-only record of every journaled write. Each write is an atomic
// compare-and-swap that captures the cell's prior value together with a
// fresh global sequence number, re-drawn on every CAS attempt; per cell the
// sequence order therefore matches the order the values actually replaced
// each other, which is what makes offline replay exact.
class WriteJournal {
 public:
  std::vector<JournalEntry> entries;

  void sort_by_seq();
  void save(const std::string& path) const;
  static WriteJournal load(const std::string& path);
};

struct SkewSpec {
  double hot_fraction = 0;  // probability a write targets the hot prefix
  size_t hot_bytes = 0;     // hot prefix [0, hot_bytes)
};

struct BurstSpec {
  double rate = 0;  // writes/second across all threads; must be positive
  std::optional<std::chrono::nanoseconds> duration;  // empty: run until stop
  std::optional<SkewSpec> skew;  // empty: uniform over the whole range
  bool journaled = false;
  unsigned threads = 1;
  uint64_t seed = 0;
};

struct ThroughputSample {
  double requested_rate = 0;
  double achieved_rate = 0;
  double achieved_pct = 0;
};

struct BurstResult {
  uint64_t writes = 0;
  ThroughputSample throughput;
  WriteJournal journal;  // empty unless spec.journaled
};

// Open-loop paced writer threads: each write has a scheduled issue time and
// late writes are issued back-to-back to catch up, so the offered rate is
// held even when individual writes stall in a fault.
BurstResult run_burst(std::byte* base, size_t length, const BurstSpec& spec,
                      std::atomic<bool>* stop = nullptr);

// --------------------------------------------------------------------------
// Columnar lineitem table and the two scan queries over it.

// Money and quantity columns are 64-bit fixed point, two decimal digits
// (value 1.00 stored as 100), so aggregates are exact integers.
struct LineitemTable {
  std::byte* base = nullptr;
  size_t bytes_used = 0;
  size_t row_count = 0;

  int64_t* orderkey = nullptr;
  int64_t* quantity = nullptr;       // x100
  int64_t* extendedprice = nullptr;  // x100
  int64_t* discount = nullptr;       // x100 (0.05 -> 5)
  int64_t* tax = nullptr;            // x100
  uint8_t* returnflag = nullptr;
  uint8_t* linestatus = nullptr;
  int32_t* shipdate = nullptr;  // days since 1992-01-01

  static constexpr size_t kBytesPerRow = 5 * 8 + 1 + 1 + 4;
};

// Lays a table of floor(target_bytes / bytes-per-row) random rows onto
// `base`. Column arrays are packed back to back, 64-byte aligned, which may
// need slightly more room than target_bytes.
LineitemTable gen_lineitem(std::byte* base, size_t region_length,
                           size_t target_bytes, uint64_t seed);

int32_t days_from_ymd(int year, int month, int day);  // since 1992-01-01
int32_t parse_date_days(const std::string& yyyy_mm_dd);

struct Q1Group {
  uint8_t returnflag = 0;
  uint8_t linestatus = 0;
  int64_t sum_qty = 0;         // x100
  int64_t sum_base_price = 0;  // x100
  int64_t sum_disc_price = 0;  // x10^4
  int64_t sum_charge = 0;      // x10^6
  int64_t sum_discount = 0;    // x100
  int64_t count = 0;

  double avg_qty() const { return count ? double(sum_qty) / (100.0 * count) : 0; }
  double avg_price() const { return count ? double(sum_base_price) / (100.0 * count) : 0; }
  double avg_disc() const { return count ? double(sum_discount) / (100.0 * count) : 0; }

  bool operator==(const Q1Group&) const = default;
};

// Grouped pricing summary over rows with shipdate <= cutoff, ordered by
// (returnflag, linestatus).
std::vector<Q1Group> q1_scan(const LineitemTable& table, int32_t shipdate_cutoff);

// Revenue (x10^4) over rows with shipdate in [date_lo, date_hi), discount in
// [disc_lo, disc_hi] (x100) and quantity < qty_below (x100).
int64_t q6_scan(const LineitemTable& table, int32_t date_lo, int32_t date_hi,
                int64_t disc_lo, int64_t disc_hi, int64_t qty_below);

// Standard parameter values for the two scans.
struct QueryDefaults {
  static int32_t q1_cutoff() { return days_from_ymd(1998, 9, 2); }
  static int32_t q6_date_lo() { return days_from_ymd(1994, 1, 1); }
  static int32_t q6_date_hi() { return days_from_ymd(1995, 1, 1); }
  static constexpr int64_t q6_disc_lo = 5;
  static constexpr int64_t q6_disc_hi = 7;
  static constexpr int64_t q6_qty_below = 2400;
};

// Journaled random updates of the orderkey column: `count` writes total,
// split across threads, paced at `rate` writes/second when given, otherwise
// issued flat out. Journal offsets are relative to table.base.
WriteJournal orderkey_writer(LineitemTable& table, size_t count,
                             std::optional<double> rate, uint64_t seed,
                             unsigned threads = 1);

}  // namespace pageleap
