#include "pageleap/workload.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

#include "pageleap/errors.hpp"

namespace pageleap {

namespace {

volatile uint64_t g_sink;  // defeats dead-load elimination in the probes

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::chrono::nanoseconds run_access_pattern(std::byte* base, size_t length,
                                            AccessPattern pattern, size_t count,
                                            uint64_t seed) {
  if (length == 0 || length % 8 != 0)
    throw std::invalid_argument("run_access_pattern: length must be a positive multiple of 8");
  auto* words = reinterpret_cast<uint64_t*>(base);
  size_t cells = length / 8;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, cells - 1);

  auto t0 = Clock::now();
  uint64_t acc = 0;
  switch (pattern) {
    case AccessPattern::SeqRead:
      for (size_t i = 0; i < cells; ++i) acc += words[i];
      break;
    case AccessPattern::SeqWrite:
      for (size_t i = 0; i < cells; ++i) words[i] = i * 0x9e3779b97f4a7c15ull;
      break;
    case AccessPattern::RandRead:
      for (size_t i = 0; i < count; ++i) acc += words[pick(rng)];
      break;
    case AccessPattern::RandWrite:
      for (size_t i = 0; i < count; ++i) words[pick(rng)] = rng();
      break;
  }
  auto elapsed = Clock::now() - t0;
  g_sink = acc;
  return std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed);
}

void fill_random(std::byte* base, size_t length, uint64_t seed) {
  if (length % 8 != 0) throw std::invalid_argument("fill_random: length must be a multiple of 8");
  std::mt19937_64 rng(seed);
  auto* words = reinterpret_cast<uint64_t*>(base);
  for (size_t i = 0; i < length / 8; ++i) words[i] = rng();
}

// --------------------------------------------------------------------------

void WriteJournal::sort_by_seq() {
  std::sort(entries.begin(), entries.end(),
            [](const JournalEntry& a, const JournalEntry& b) { return a.seq < b.seq; });
}

namespace {
constexpr char kJournalMagic[4] = {'P', 'L', 'J', 'L'};
constexpr uint32_t kJournalVersion = 1;

struct PackedEntry {
  uint64_t seq, offset, old_value, new_value;
  uint32_t thread, pad;
};
static_assert(sizeof(PackedEntry) == 40);
}  // namespace

void WriteJournal::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("journal save: cannot open " + path);
  f.write(kJournalMagic, 4);
  uint32_t ver = kJournalVersion;
  uint64_t n = entries.size();
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const JournalEntry& e : entries) {
    PackedEntry p{e.seq, e.offset, e.old_value, e.new_value, e.thread, 0};
    f.write(reinterpret_cast<const char*>(&p), sizeof(p));
  }
  if (!f) throw Error("journal save: write failed for " + path);
}

WriteJournal WriteJournal::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("journal load: cannot open " + path);
  char magic[4];
  uint32_t ver = 0;
  uint64_t n = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!f || std::memcmp(magic, kJournalMagic, 4) != 0 || ver != kJournalVersion)
    throw Error("journal load: bad header in " + path);
  WriteJournal j;
  j.entries.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    PackedEntry p;
    f.read(reinterpret_cast<char*>(&p), sizeof(p));
    if (!f) throw Error("journal load: truncated file " + path);
    j.entries[i] = JournalEntry{p.seq, p.offset, p.old_value, p.new_value, p.thread};
  }
  return j;
}

namespace {

// One journaled write: capture the previous value and a fresh sequence
// number atomically enough for replay (see WriteJournal). seq_cst keeps the
// counter draw ordered against the surrounding loads and CAS.
inline void journaled_write(std::byte* base, uint64_t offset, uint64_t value,
                            std::atomic<uint64_t>& seq_counter, uint32_t tid,
                            std::vector<JournalEntry>& out) {
  auto* cell = reinterpret_cast<std::atomic<uint64_t>*>(base + offset);
  for (;;) {
    uint64_t old = cell->load(std::memory_order_seq_cst);
    uint64_t seq = seq_counter.fetch_add(1, std::memory_order_seq_cst);
    uint64_t expected = old;
    if (cell->compare_exchange_strong(expected, value, std::memory_order_seq_cst)) {
      out.push_back(JournalEntry{seq, offset, old, value, tid});
      return;
    }
  }
}

// Open-loop pacing: write i is due at t0 + i/rate; when behind, issue
// back-to-back until caught up. rate <= 0 means unpaced.
template <typename WriteFn>
uint64_t paced_writes(double rate, std::optional<Clock::duration> duration,
                      std::atomic<bool>* stop, std::optional<uint64_t> max_writes,
                      WriteFn&& write_one) {
  auto t0 = Clock::now();
  uint64_t issued = 0;
  for (;;) {
    if (stop && stop->load(std::memory_order_relaxed)) break;
    if (duration && Clock::now() - t0 >= *duration) break;
    if (max_writes && issued >= *max_writes) break;

    uint64_t due;
    if (rate > 0) {
      due = static_cast<uint64_t>(seconds_since(t0) * rate);
      if (max_writes) due = std::min<uint64_t>(due, *max_writes);
    } else {
      due = issued + 1024;
      if (max_writes) due = std::min<uint64_t>(due, *max_writes);
    }

    if (issued >= due) {
      double next_due_s = double(issued + 1) / rate;
      double ahead = next_due_s - seconds_since(t0);
      if (ahead > 200e-6)
        std::this_thread::sleep_for(std::chrono::duration<double>(ahead - 100e-6));
      else
        std::this_thread::yield();
      continue;
    }
    while (issued < due) {
      write_one(issued);
      ++issued;
      // Re-check stop/duration periodically inside a long catch-up batch.
      if ((issued & 4095) == 0 && stop && stop->load(std::memory_order_relaxed))
        return issued;
    }
  }
  return issued;
}

}  // namespace

BurstResult run_burst(std::byte* base, size_t length, const BurstSpec& spec,
                      std::atomic<bool>* stop) {
  if (spec.rate <= 0) throw std::invalid_argument("run_burst: rate must be positive");
  if (spec.threads == 0) throw std::invalid_argument("run_burst: need at least one thread");
  if (length < 8 || length % 8 != 0)
    throw std::invalid_argument("run_burst: length must be a positive multiple of 8");
  if (!spec.duration && !stop)
    throw std::invalid_argument("run_burst: unbounded burst needs a stop flag");
  if (spec.skew) {
    if (!(spec.skew->hot_fraction > 0.0 && spec.skew->hot_fraction < 1.0))
      throw std::invalid_argument("run_burst: hot fraction must be in (0, 1)");
    if (spec.skew->hot_bytes == 0 || spec.skew->hot_bytes % 8 != 0 ||
        spec.skew->hot_bytes > length)
      throw std::invalid_argument("run_burst: bad hot range");
  }

  unsigned T = spec.threads;
  std::atomic<uint64_t> seq_counter{0};
  std::vector<std::vector<JournalEntry>> journals(T);
  std::vector<uint64_t> counts(T, 0);
  std::vector<Clock::time_point> ends(T);
  std::vector<std::thread> threads;
  threads.reserve(T);
  auto t0 = Clock::now();

  for (unsigned t = 0; t < T; ++t) {
    threads.emplace_back([&, t] {
      std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + t + 1);
      size_t cells = length / 8;
      size_t hot_cells = spec.skew ? spec.skew->hot_bytes / 8 : 0;
      std::uniform_int_distribution<size_t> pick_all(0, cells - 1);
      std::uniform_int_distribution<size_t> pick_hot(0, hot_cells ? hot_cells - 1 : 0);
      std::uniform_real_distribution<double> coin(0.0, 1.0);

      auto pick_offset = [&]() -> uint64_t {
        if (spec.skew && coin(rng) < spec.skew->hot_fraction)
          return uint64_t(pick_hot(rng)) * 8;
        return uint64_t(pick_all(rng)) * 8;
      };

      double thread_rate = spec.rate / T;
      counts[t] = paced_writes(
          thread_rate, spec.duration, stop, std::nullopt, [&](uint64_t) {
            uint64_t off = pick_offset();
            uint64_t value = rng();
            if (spec.journaled) {
              journaled_write(base, off, value, seq_counter, t, journals[t]);
            } else {
              reinterpret_cast<std::atomic<uint64_t>*>(base + off)
                  ->store(value, std::memory_order_relaxed);
            }
          });
      ends[t] = Clock::now();
    });
  }
  for (auto& th : threads) th.join();

  BurstResult result;
  for (unsigned t = 0; t < T; ++t) result.writes += counts[t];
  auto window = std::chrono::duration<double>(*std::max_element(ends.begin(), ends.end()) - t0).count();
  result.throughput.requested_rate = spec.rate;
  result.throughput.achieved_rate = window > 0 ? result.writes / window : 0.0;
  result.throughput.achieved_pct =
      spec.rate > 0 ? 100.0 * result.throughput.achieved_rate / spec.rate : 0.0;
  if (spec.journaled) {
    for (auto& j : journals)
      result.journal.entries.insert(result.journal.entries.end(), j.begin(), j.end());
    result.journal.sort_by_seq();
  }
  return result;
}

// --------------------------------------------------------------------------

int32_t days_from_ymd(int year, int month, int day) {
  // Civil-days algorithm; anchored at 1992-01-01.
  auto civil = [](int y, int m, int d) -> int64_t {
    y -= m <= 2;
    int64_t era = (y >= 0 ? y : y - 399) / 400;
    unsigned yoe = static_cast<unsigned>(y - era * 400);
    unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
  };
  return static_cast<int32_t>(civil(year, month, day) - civil(1992, 1, 1));
}

int32_t parse_date_days(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw std::invalid_argument("date must be yyyy-mm-dd: " + s);
  int y = std::stoi(s.substr(0, 4));
  int m = std::stoi(s.substr(5, 2));
  int d = std::stoi(s.substr(8, 2));
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw std::invalid_argument("date out of range: " + s);
  return days_from_ymd(y, m, d);
}

namespace {
size_t align64(size_t v) { return (v + 63) & ~size_t{63}; }
}  // namespace

LineitemTable gen_lineitem(std::byte* base, size_t region_length,
                           size_t target_bytes, uint64_t seed) {
  if (target_bytes < LineitemTable::kBytesPerRow)
    throw std::invalid_argument("gen_lineitem: target smaller than one row");
  size_t rows = target_bytes / LineitemTable::kBytesPerRow;

  size_t off = 0;
  auto place = [&](size_t bytes) {
    size_t at = off;
    off = align64(off + bytes);
    return at;
  };
  size_t o_orderkey = place(rows * 8);
  size_t o_quantity = place(rows * 8);
  size_t o_extprice = place(rows * 8);
  size_t o_discount = place(rows * 8);
  size_t o_tax = place(rows * 8);
  size_t o_rflag = place(rows);
  size_t o_lstatus = place(rows);
  size_t o_shipdate = place(rows * 4);
  if (off > region_length)
    throw std::invalid_argument("gen_lineitem: region too small for aligned layout");

  LineitemTable t;
  t.base = base;
  t.bytes_used = off;
  t.row_count = rows;
  t.orderkey = reinterpret_cast<int64_t*>(base + o_orderkey);
  t.quantity = reinterpret_cast<int64_t*>(base + o_quantity);
  t.extendedprice = reinterpret_cast<int64_t*>(base + o_extprice);
  t.discount = reinterpret_cast<int64_t*>(base + o_discount);
  t.tax = reinterpret_cast<int64_t*>(base + o_tax);
  t.returnflag = reinterpret_cast<uint8_t*>(base + o_rflag);
  t.linestatus = reinterpret_cast<uint8_t*>(base + o_lstatus);
  t.shipdate = reinterpret_cast<int32_t*>(base + o_shipdate);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> d_order(1, 24'000'000);
  std::uniform_int_distribution<int64_t> d_qty(1, 50);
  std::uniform_int_distribution<int64_t> d_price(10'000, 10'494'950);  // cents
  std::uniform_int_distribution<int64_t> d_disc(0, 10);
  std::uniform_int_distribution<int64_t> d_tax(0, 8);
  std::uniform_int_distribution<int> d_rflag(0, 2);
  std::uniform_int_distribution<int> d_lstatus(0, 1);
  std::uniform_int_distribution<int32_t> d_ship(0, days_from_ymd(1998, 12, 1));
  static constexpr uint8_t kFlags[3] = {'A', 'N', 'R'};
  static constexpr uint8_t kStatus[2] = {'F', 'O'};

  for (size_t i = 0; i < rows; ++i) {
    t.orderkey[i] = d_order(rng);
    t.quantity[i] = d_qty(rng) * 100;
    t.extendedprice[i] = d_price(rng);
    t.discount[i] = d_disc(rng);
    t.tax[i] = d_tax(rng);
    t.returnflag[i] = kFlags[d_rflag(rng)];
    t.linestatus[i] = kStatus[d_lstatus(rng)];
    t.shipdate[i] = d_ship(rng);
  }
  return t;
}

std::vector<Q1Group> q1_scan(const LineitemTable& t, int32_t cutoff) {
  // 3 flags x 2 statuses; index = flag_idx * 2 + status_idx.
  Q1Group groups[6];
  bool seen[6] = {};
  auto flag_idx = [](uint8_t f) { return f == 'A' ? 0 : (f == 'N' ? 1 : 2); };
  for (size_t i = 0; i < t.row_count; ++i) {
    if (t.shipdate[i] > cutoff) continue;
    int g = flag_idx(t.returnflag[i]) * 2 + (t.linestatus[i] == 'F' ? 0 : 1);
    Q1Group& q = groups[g];
    if (!seen[g]) {
      q.returnflag = t.returnflag[i];
      q.linestatus = t.linestatus[i];
      seen[g] = true;
    }
    int64_t price = t.extendedprice[i];
    int64_t disc_price = price * (100 - t.discount[i]);     // x10^4
    int64_t charge = disc_price * (100 + t.tax[i]);         // x10^6
    q.sum_qty += t.quantity[i];
    q.sum_base_price += price;
    q.sum_disc_price += disc_price;
    q.sum_charge += charge;
    q.sum_discount += t.discount[i];
    q.count += 1;
  }
  std::vector<Q1Group> out;
  for (int g = 0; g < 6; ++g)
    if (seen[g]) out.push_back(groups[g]);
  std::sort(out.begin(), out.end(), [](const Q1Group& a, const Q1Group& b) {
    return a.returnflag != b.returnflag ? a.returnflag < b.returnflag
                                        : a.linestatus < b.linestatus;
  });
  return out;
}

int64_t q6_scan(const LineitemTable& t, int32_t date_lo, int32_t date_hi,
                int64_t disc_lo, int64_t disc_hi, int64_t qty_below) {
  int64_t revenue = 0;  // x10^4
  for (size_t i = 0; i < t.row_count; ++i) {
    if (t.shipdate[i] < date_lo || t.shipdate[i] >= date_hi) continue;
    if (t.discount[i] < disc_lo || t.discount[i] > disc_hi) continue;
    if (t.quantity[i] >= qty_below) continue;
    revenue += t.extendedprice[i] * t.discount[i];
  }
  return revenue;
}

WriteJournal orderkey_writer(LineitemTable& table, size_t count,
                             std::optional<double> rate, uint64_t seed,
                             unsigned threads) {
  if (threads == 0) throw std::invalid_argument("orderkey_writer: need at least one thread");
  if (table.row_count == 0) throw std::invalid_argument("orderkey_writer: empty table");
  if (rate && *rate <= 0) throw std::invalid_argument("orderkey_writer: rate must be positive");

  unsigned T = threads;
  std::atomic<uint64_t> seq_counter{0};
  std::vector<std::vector<JournalEntry>> journals(T);
  std::vector<std::thread> pool;
  uint64_t column_base = reinterpret_cast<std::byte*>(table.orderkey) - table.base;

  for (unsigned t = 0; t < T; ++t) {
    uint64_t quota = count / T + (t < count % T ? 1 : 0);
    pool.emplace_back([&, t, quota] {
      std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + t + 1);
      std::uniform_int_distribution<size_t> pick_row(0, table.row_count - 1);
      std::uniform_int_distribution<int64_t> d_order(1, 24'000'000);
      double thread_rate = rate ? *rate / T : 0.0;
      paced_writes(thread_rate, std::nullopt, nullptr, quota, [&](uint64_t) {
        uint64_t off = column_base + uint64_t(pick_row(rng)) * 8;
        journaled_write(table.base, off, uint64_t(d_order(rng)), seq_counter, t,
                        journals[t]);
      });
    });
  }
  for (auto& th : pool) th.join();

  WriteJournal j;
  for (auto& part : journals)
    j.entries.insert(j.entries.end(), part.begin(), part.end());
  j.sort_by_seq();
  return j;
}

}  // namespace pageleap
