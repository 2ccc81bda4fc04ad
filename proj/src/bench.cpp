#include "pageleap/bench.hpp"

#include <sched.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "pageleap/baselines.hpp"
#include "pageleap/engine.hpp"
#include "pageleap/errors.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"
#include "pageleap/vmap.hpp"

namespace pageleap {

namespace {

constexpr size_t KiB = size_t{1} << 10;
constexpr size_t MiB = size_t{1} << 20;

double ms(std::chrono::nanoseconds ns) { return ns.count() / 1e6; }

double mib_per_s(size_t bytes, std::chrono::nanoseconds ns) {
  double s = ns.count() / 1e9;
  return s > 0 ? bytes / double(MiB) / s : 0;
}

struct Ctx {
  Topology topo;
  int src_node = 0;
  int dst_node = 1;
  size_t page = 0;
  Backing backing = Backing::ShmFile;
};

Ctx make_ctx(const ExperimentConfig& cfg) {
  Topology topo;
  switch (cfg.mode) {
    case RunMode::Auto:
      topo = detect_topology();
      break;
    case RunMode::Simulated:
      topo = detect_topology(true);
      break;
    case RunMode::Real:
      topo = detect_topology();
      if (topo.simulated)
        throw std::invalid_argument(
            "real NUMA mode requested but this host has a single node");
      break;
  }
  set_process_topology(topo);
  Ctx ctx;
  ctx.topo = topo;
  ctx.src_node = topo.nodes[0];
  ctx.dst_node = topo.nodes[1];
  ctx.page = cfg.huge_pages ? os::default_huge_page_size() : os::small_page_size();
  ctx.backing = cfg.huge_pages ? Backing::HugetlbFile : Backing::ShmFile;
  return ctx;
}

Record base_record(const ExperimentConfig& cfg, const Ctx& ctx,
                   const std::string& method, unsigned rep) {
  Record r;
  r.experiment = cfg.experiment;
  r.method = method;
  r.mode = ctx.topo.simulated ? "simulated" : "real";
  r.rep = std::to_string(rep);
  r.page_bytes = ctx.page;
  r.region_bytes = cfg.region_bytes;
  r.rate = 0;
  if (cfg.skew) {
    r.skew_hot_fraction = cfg.skew->hot_fraction;
    r.skew_hot_bytes = cfg.skew->hot_bytes;
  }
  r.seed = cfg.seed;
  r.reduction_factor = cfg.reduction_factor;
  r.timeout_s = cfg.timeout_s;
  return r;
}

Record skip_record(Record r, const std::string& reason) {
  r.skipped = true;
  r.skip_reason = reason;
  return r;
}

std::shared_ptr<PhysicalStore> make_store(const Ctx& ctx, int node, size_t bytes) {
  return PhysicalStore::create(node, ctx.page, bytes, ctx.backing);
}

// Destination pool with every page already faulted, the steady-state shape.
std::shared_ptr<PhysicalStore> make_pooled_store(const Ctx& ctx, int node,
                                                 size_t bytes) {
  auto s = make_store(ctx, node, bytes);
  Extent e = s->allocate(bytes, true);
  s->release(e);
  return s;
}

std::unique_ptr<VirtualRegion> make_mapped_region(const Ctx& ctx,
                                                  std::shared_ptr<PhysicalStore> store,
                                                  size_t bytes) {
  auto region = VirtualRegion::reserve(bytes, ctx.page);
  Extent e = store->allocate(bytes, true);
  region->map_range(0, e, Protection::ReadWrite);
  return region;
}

MigrationOptions leap_options(const ExperimentConfig& cfg, size_t area_bytes) {
  MigrationOptions o;
  o.initial_area_bytes = area_bytes;
  o.reduction_factor = cfg.reduction_factor;
  o.timeout = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(cfg.timeout_s));
  return o;
}

void fill_leap_fields(Record& r, const MigrationReport& rep) {
  r.timed_out = rep.status == JobStatus::TimedOut;
  r.elapsed_ms = ms(rep.stats.elapsed);
  r.bytes_copied_total = rep.stats.bytes_copied_total;
  r.bytes_copied_extra = rep.stats.bytes_copied_extra;
  r.dirty_events = rep.stats.dirty_events;
  r.areas_split = rep.stats.areas_split;
  r.pages_migrated = rep.pages_migrated;
  r.pages_pending = rep.pages_pending;
  r.throughput_mbps = mib_per_s(rep.pages_migrated * r.page_bytes, rep.stats.elapsed);
}

void fill_baseline_fields(Record& r, const BaselineResult& b) {
  if (b.skipped) {
    r.skipped = true;
    r.skip_reason = b.skip_reason;
    return;
  }
  r.timed_out = b.timed_out;
  r.elapsed_ms = ms(b.elapsed);
  size_t moved = 0, failed = 0;
  for (PageOutcome o : b.page_outcome) {
    if (o == PageOutcome::Moved) ++moved;
    if (o == PageOutcome::Failed) ++failed;
  }
  r.pages_migrated = moved;
  r.pages_failed = failed;
  r.pages_pending = b.page_outcome.size() - moved - failed;
  r.throughput_mbps = mib_per_s(moved * r.page_bytes, b.elapsed);
}

// Background paced writers wrapping run_burst; stopped explicitly.
class AsyncBurst {
 public:
  void start(std::byte* base, size_t length, BurstSpec spec) {
    fut_ = std::async(std::launch::async, [this, base, length, spec] {
      return run_burst(base, length, spec, &stop_);
    });
  }
  BurstResult finish() {
    stop_.store(true);
    return fut_.get();
  }

 private:
  std::atomic<bool> stop_{false};
  std::future<BurstResult> fut_;
};

void ensure_handler() {
  if (!fault_handler_installed()) install_fault_handler();
}

std::vector<size_t> default_area_sizes(const ExperimentConfig& cfg, size_t region) {
  std::vector<size_t> sizes;
  if (!cfg.area_sizes.empty()) {
    sizes = cfg.area_sizes;
  } else if (cfg.huge_pages) {
    sizes = {2 * MiB, 4 * MiB, 8 * MiB, 16 * MiB, 32 * MiB, 64 * MiB, 128 * MiB, 256 * MiB};
  } else {
    sizes = {4 * KiB, 16 * KiB, 64 * KiB, 256 * KiB, 512 * KiB, MiB,
             2 * MiB, 4 * MiB, 16 * MiB, 64 * MiB, 256 * MiB};
  }
  std::vector<size_t> out;
  for (size_t s : sizes)
    if (s <= region) out.push_back(s);
  return out;
}

std::vector<double> default_rates(const ExperimentConfig& cfg,
                                  std::initializer_list<double> defaults) {
  if (!cfg.rates.empty()) return cfg.rates;
  return defaults;
}

// --------------------------------------------------------------------------

std::vector<Record> run_e1(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  const char* kPatternNames[] = {"seq_read", "seq_write", "rand_read", "rand_write"};
  const AccessPattern kPatterns[] = {AccessPattern::SeqRead, AccessPattern::SeqWrite,
                                     AccessPattern::RandRead, AccessPattern::RandWrite};
  pin_current_thread(ctx.topo.cpus_of(ctx.src_node).front());
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (int placement = 0; placement < 2; ++placement) {
      int node = placement == 0 ? ctx.src_node : ctx.dst_node;
      auto store = make_store(ctx, node, cfg.region_bytes);
      auto region = make_mapped_region(ctx, store, cfg.region_bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      for (int p = 0; p < 4; ++p) {
        auto elapsed = run_access_pattern(region->base(), region->length(),
                                          kPatterns[p], cfg.rand_access_count,
                                          cfg.seed + rep);
        Record r = base_record(cfg, ctx,
                               std::string(kPatternNames[p]) +
                                   (placement == 0 ? "_local" : "_remote"),
                               rep);
        r.elapsed_ms = ms(elapsed);
        size_t touched = (p < 2) ? cfg.region_bytes : cfg.rand_access_count * 8;
        r.throughput_mbps = mib_per_s(touched, elapsed);
        out.push_back(r);
      }
    }
  }
  return out;
}

std::vector<Record> run_e2(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);
      auto report = wait(start_migration(*region, dst, leap_options(cfg, 16 * MiB)));
      Record r = base_record(cfg, ctx, "page_leap", rep);
      r.area_bytes = std::min<size_t>(16 * MiB, bytes);
      fill_leap_fields(r, report);
      out.push_back(r);
    }
    {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      Record r = base_record(cfg, ctx, "move_pages", rep);
      fill_baseline_fields(r, os_move_pages(*region, ctx.dst_node));
      out.push_back(r);
    }
    for (int pooled = 0; pooled < 2; ++pooled) {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      auto dst = pooled ? make_pooled_store(ctx, ctx.dst_node, bytes)
                        : make_store(ctx, ctx.dst_node, bytes);
      Record r = base_record(cfg, ctx, pooled ? "memcpy_pooled" : "memcpy_fresh", rep);
      fill_baseline_fields(r, raw_copy(*region, *dst, pooled != 0));
      r.throughput_mbps = mib_per_s(bytes, std::chrono::nanoseconds(
                                               int64_t(r.elapsed_ms * 1e6)));
      out.push_back(r);
    }
  }
  return out;
}

std::vector<Record> run_e3(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  auto areas = default_area_sizes(cfg, bytes);
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (size_t area : areas) {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);
      auto report = wait(start_migration(*region, dst, leap_options(cfg, area)));
      Record r = base_record(cfg, ctx, "page_leap", rep);
      r.area_bytes = area;
      fill_leap_fields(r, report);
      out.push_back(r);
    }
    {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      Record r = base_record(cfg, ctx, "move_pages", rep);
      fill_baseline_fields(r, os_move_pages(*region, ctx.dst_node));
      out.push_back(r);
    }
    {
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      fill_random(region->base(), region->length(), cfg.seed + rep);
      auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);
      Record r = base_record(cfg, ctx, "memcpy_pooled", rep);
      fill_baseline_fields(r, raw_copy(*region, *dst, true));
      out.push_back(r);
    }
  }
  return out;
}

BurstSpec burst_for(const ExperimentConfig& cfg, double rate, uint64_t seed,
                    std::optional<std::chrono::nanoseconds> duration) {
  BurstSpec b;
  b.rate = rate;
  b.duration = duration;
  b.skew = cfg.skew;
  b.journaled = false;
  b.threads = cfg.writer_threads;
  b.seed = seed;
  return b;
}

std::vector<Record> run_e4(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  auto rates = default_rates(cfg, {10'000, 100'000, 10'000'000});
  std::vector<size_t> areas = cfg.area_sizes.empty()
                                  ? std::vector<size_t>{512 * KiB, 16 * MiB}
                                  : cfg.area_sizes;
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (double rate : rates) {
      for (size_t area : areas) {
        auto src = make_store(ctx, ctx.src_node, bytes);
        auto region = make_mapped_region(ctx, src, bytes);
        fill_random(region->base(), region->length(), cfg.seed + rep);
        auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);

        AsyncBurst burst;
        burst.start(region->base(), region->length(),
                    burst_for(cfg, rate, cfg.seed + rep, std::nullopt));
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        auto report = wait(start_migration(*region, dst, leap_options(cfg, area)));
        auto burst_result = burst.finish();

        Record r = base_record(cfg, ctx, "page_leap", rep);
        r.area_bytes = area;
        r.rate = rate;
        fill_leap_fields(r, report);
        r.requested_rate = burst_result.throughput.requested_rate;
        r.achieved_rate = burst_result.throughput.achieved_rate;
        r.achieved_pct = burst_result.throughput.achieved_pct;
        out.push_back(r);
      }
      {
        auto src = make_store(ctx, ctx.src_node, bytes);
        auto region = make_mapped_region(ctx, src, bytes);
        fill_random(region->base(), region->length(), cfg.seed + rep);
        Record r = base_record(cfg, ctx, "move_pages", rep);
        r.rate = rate;
        if (ctx.topo.simulated) {
          out.push_back(skip_record(r, "requires multiple physical NUMA nodes"));
        } else {
          AsyncBurst burst;
          burst.start(region->base(), region->length(),
                      burst_for(cfg, rate, cfg.seed + rep, std::nullopt));
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          fill_baseline_fields(r, os_move_pages(*region, ctx.dst_node));
          auto burst_result = burst.finish();
          r.requested_rate = burst_result.throughput.requested_rate;
          r.achieved_rate = burst_result.throughput.achieved_rate;
          r.achieved_pct = burst_result.throughput.achieved_pct;
          out.push_back(r);
        }
      }
      {
        Record r = base_record(cfg, ctx, "autobalance", rep);
        r.rate = rate;
        if (ctx.topo.simulated) {
          out.push_back(skip_record(r, "requires multiple physical NUMA nodes"));
        } else if (!os::numa_balancing_enabled()) {
          out.push_back(skip_record(r, "kernel automatic NUMA balancing is disabled"));
        } else {
          AnonArea anon(bytes, ctx.src_node, true);
          AsyncBurst burst;
          burst.start(anon.base(), anon.length(),
                      burst_for(cfg, rate, cfg.seed + rep, std::nullopt));
          auto b = observe_autobalance(
              anon.base(), anon.length(), ctx.dst_node,
              std::chrono::milliseconds(100),
              std::chrono::duration_cast<std::chrono::nanoseconds>(
                  std::chrono::duration<double>(cfg.timeout_s)));
          auto burst_result = burst.finish();
          fill_baseline_fields(r, b);
          r.requested_rate = burst_result.throughput.requested_rate;
          r.achieved_rate = burst_result.throughput.achieved_rate;
          r.achieved_pct = burst_result.throughput.achieved_pct;
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

std::vector<Record> run_e5(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  auto rates = default_rates(cfg, {1'000, 10'000, 100'000, 1'000'000, 10'000'000});
  size_t area = cfg.area_sizes.empty() ? 16 * MiB : cfg.area_sizes.front();
  auto window = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(cfg.burst_seconds));
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (double rate : rates) {
      {
        // Reference: the same burst with no migration underneath.
        auto src = make_store(ctx, ctx.src_node, bytes);
        auto region = make_mapped_region(ctx, src, bytes);
        fill_random(region->base(), region->length(), cfg.seed + rep);
        auto result = run_burst(region->base(), region->length(),
                                burst_for(cfg, rate, cfg.seed + rep, window), nullptr);
        Record r = base_record(cfg, ctx, "none", rep);
        r.rate = rate;
        r.requested_rate = result.throughput.requested_rate;
        r.achieved_rate = result.throughput.achieved_rate;
        r.achieved_pct = result.throughput.achieved_pct;
        out.push_back(r);
      }
      {
        auto src = make_store(ctx, ctx.src_node, bytes);
        auto region = make_mapped_region(ctx, src, bytes);
        fill_random(region->base(), region->length(), cfg.seed + rep);
        auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);
        AsyncBurst burst;
        burst.start(region->base(), region->length(),
                    burst_for(cfg, rate, cfg.seed + rep, window));
        std::this_thread::sleep_for(
            std::chrono::milliseconds(int64_t(cfg.burst_seconds * 100)));
        auto report = wait(start_migration(*region, dst, leap_options(cfg, area)));
        auto burst_result = burst.finish();
        Record r = base_record(cfg, ctx, "page_leap", rep);
        r.area_bytes = area;
        r.rate = rate;
        fill_leap_fields(r, report);
        r.requested_rate = burst_result.throughput.requested_rate;
        r.achieved_rate = burst_result.throughput.achieved_rate;
        r.achieved_pct = burst_result.throughput.achieved_pct;
        out.push_back(r);
      }
    }
  }
  return out;
}

std::vector<Record> run_e6(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  auto areas = default_area_sizes(cfg, bytes);
  auto rates = default_rates(cfg, {0, 100'000});
  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (double rate : rates) {
      for (size_t area : areas) {
        auto src = make_store(ctx, ctx.src_node, bytes);
        auto region = make_mapped_region(ctx, src, bytes);
        fill_random(region->base(), region->length(), cfg.seed + rep);
        auto dst = make_pooled_store(ctx, ctx.dst_node, bytes);

        MigrationReport report;
        ThroughputSample sample{};
        if (rate > 0) {
          AsyncBurst burst;
          burst.start(region->base(), region->length(),
                      burst_for(cfg, rate, cfg.seed + rep, std::nullopt));
          std::this_thread::sleep_for(std::chrono::milliseconds(20));
          report = wait(start_migration(*region, dst, leap_options(cfg, area)));
          sample = burst.finish().throughput;
        } else {
          report = wait(start_migration(*region, dst, leap_options(cfg, area)));
        }
        Record r = base_record(cfg, ctx, "page_leap", rep);
        r.area_bytes = area;
        r.rate = rate;
        fill_leap_fields(r, report);
        r.requested_rate = sample.requested_rate;
        r.achieved_rate = sample.achieved_rate;
        r.achieved_pct = sample.achieved_pct;
        out.push_back(r);

        // Matched cost reference: copy the same region through the pool in
        // chunks of this area size.
        auto dst2 = make_pooled_store(ctx, ctx.dst_node, bytes);
        Extent e = dst2->allocate(bytes, true);
        auto t0 = std::chrono::steady_clock::now();
        for (size_t off = 0; off < bytes; off += area) {
          size_t chunk = std::min(area, bytes - off);
          std::memcpy(dst2->base() + e.offset + off, region->base() + off, chunk);
        }
        auto elapsed = std::chrono::steady_clock::now() - t0;
        dst2->release(e);
        Record m = base_record(cfg, ctx, "memcpy_matched", rep);
        m.area_bytes = area;
        m.rate = rate;
        m.elapsed_ms = ms(std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed));
        m.bytes_copied_total = bytes;
        m.throughput_mbps = mib_per_s(
            bytes, std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed));
        out.push_back(m);
      }
    }
  }
  return out;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string q1_digest(const std::vector<Q1Group>& groups) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Q1Group& g : groups) {
    int64_t fields[8] = {g.returnflag, g.linestatus,  g.sum_qty,      g.sum_base_price,
                         g.sum_disc_price, g.sum_charge, g.sum_discount, g.count};
    h = fnv1a(fields, sizeof(fields), h);
  }
  char buf[32];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Record> run_e7(const ExperimentConfig& cfg, const Ctx& ctx) {
  std::vector<Record> out;
  ensure_handler();
  size_t bytes = cfg.region_bytes;
  size_t target = bytes - std::min(bytes / 4, size_t{64} * KiB);
  size_t area = cfg.area_sizes.empty() ? 16 * MiB : cfg.area_sizes.front();

  struct Scenario {
    const char* name;
    bool migrate_leap;
    bool migrate_move;
    bool writers;
  };
  const Scenario scenarios[] = {
      {"baseline_quiet", false, false, false},   {"baseline_writers", false, false, true},
      {"page_leap_quiet", true, false, false},   {"page_leap_writers", true, false, true},
      {"move_pages_quiet", false, true, false},  {"move_pages_writers", false, true, true},
  };

  for (unsigned rep = 0; rep < cfg.reps; ++rep) {
    for (const Scenario& sc : scenarios) {
      if (sc.migrate_move && ctx.topo.simulated) {
        Record r = base_record(cfg, ctx, sc.name, rep);
        out.push_back(skip_record(r, "requires multiple physical NUMA nodes"));
        continue;
      }
      auto src = make_store(ctx, ctx.src_node, bytes);
      auto region = make_mapped_region(ctx, src, bytes);
      LineitemTable table =
          gen_lineitem(region->base(), region->length(), target, cfg.seed);

      std::future<WriteJournal> writers;
      if (sc.writers)
        writers = std::async(std::launch::async, [&] {
          return orderkey_writer(table, cfg.write_count, std::nullopt,
                                 cfg.seed + rep, cfg.writer_threads);
        });

      JobHandle job;
      std::shared_ptr<PhysicalStore> dst;
      BaselineResult move_result;
      auto mig_t0 = std::chrono::steady_clock::now();
      if (sc.migrate_leap) {
        dst = make_pooled_store(ctx, ctx.dst_node, bytes);
        job = start_migration(*region, dst, leap_options(cfg, area));
      } else if (sc.migrate_move) {
        move_result = os_move_pages(*region, ctx.dst_node);
      }

      for (unsigned exec = 0; exec < cfg.query_execs; ++exec) {
        auto t0 = std::chrono::steady_clock::now();
        auto groups = q1_scan(table, QueryDefaults::q1_cutoff());
        auto dt = std::chrono::steady_clock::now() - t0;
        Record r = base_record(cfg, ctx, sc.name, rep);
        r.area_bytes = sc.migrate_leap ? area : 0;
        r.query = "q1";
        r.query_exec = int(exec);
        r.query_ms = ms(std::chrono::duration_cast<std::chrono::nanoseconds>(dt));
        r.result_digest = q1_digest(groups);
        out.push_back(r);
      }
      for (unsigned exec = 0; exec < cfg.query_execs; ++exec) {
        auto t0 = std::chrono::steady_clock::now();
        int64_t revenue =
            q6_scan(table, QueryDefaults::q6_date_lo(), QueryDefaults::q6_date_hi(),
                    QueryDefaults::q6_disc_lo, QueryDefaults::q6_disc_hi,
                    QueryDefaults::q6_qty_below);
        auto dt = std::chrono::steady_clock::now() - t0;
        Record r = base_record(cfg, ctx, sc.name, rep);
        r.area_bytes = sc.migrate_leap ? area : 0;
        r.query = "q6";
        r.query_exec = int(exec);
        r.query_ms = ms(std::chrono::duration_cast<std::chrono::nanoseconds>(dt));
        r.result_digest = std::to_string(revenue);
        out.push_back(r);
      }

      Record m = base_record(cfg, ctx, sc.name, rep);
      m.query = "migration";
      m.area_bytes = sc.migrate_leap ? area : 0;
      if (sc.migrate_leap) {
        fill_leap_fields(m, wait(job));
      } else if (sc.migrate_move) {
        fill_baseline_fields(m, move_result);
      } else {
        m.elapsed_ms = ms(std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now() - mig_t0));
      }
      if (sc.writers) {
        WriteJournal j = writers.get();
        m.requested_rate = double(cfg.write_count);
        m.achieved_rate = double(j.entries.size());
      }
      out.push_back(m);
    }
  }
  return out;
}

// --------------------------------------------------------------------------

std::string group_key(const Record& r) {
  char buf[512];
  snprintf(buf, sizeof(buf), "%s|%s|%s|%zu|%zu|%zu|%g|%g|%zu|%s",
           r.experiment.c_str(), r.method.c_str(), r.mode.c_str(), r.page_bytes,
           r.region_bytes, r.area_bytes, r.rate, r.skew_hot_fraction,
           r.skew_hot_bytes, r.query.c_str());
  return buf;
}

void append_averages(std::vector<Record>& records) {
  std::map<std::string, std::vector<const Record*>> groups;
  std::vector<std::string> order;
  for (const Record& r : records) {
    auto key = group_key(r);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<Record> averages;
  for (const auto& key : order) {
    const auto& g = groups[key];
    if (g.size() < 2) continue;
    bool any_skip = false;
    for (auto* r : g) any_skip |= r->skipped;
    if (any_skip) continue;
    Record avg = *g.front();
    avg.rep = "avg";
    avg.query_exec = -1;
    double n = double(g.size());
    auto mean = [&](auto field) {
      double s = 0;
      for (auto* r : g) s += double(r->*field);
      return s / n;
    };
    avg.elapsed_ms = mean(&Record::elapsed_ms);
    avg.throughput_mbps = mean(&Record::throughput_mbps);
    avg.bytes_copied_total = uint64_t(std::llround(mean(&Record::bytes_copied_total)));
    avg.bytes_copied_extra = uint64_t(std::llround(mean(&Record::bytes_copied_extra)));
    avg.dirty_events = uint64_t(std::llround(mean(&Record::dirty_events)));
    avg.areas_split = uint64_t(std::llround(mean(&Record::areas_split)));
    avg.pages_migrated = uint64_t(std::llround(mean(&Record::pages_migrated)));
    avg.pages_pending = uint64_t(std::llround(mean(&Record::pages_pending)));
    avg.pages_failed = uint64_t(std::llround(mean(&Record::pages_failed)));
    avg.requested_rate = mean(&Record::requested_rate);
    avg.achieved_rate = mean(&Record::achieved_rate);
    avg.achieved_pct = mean(&Record::achieved_pct);
    avg.query_ms = mean(&Record::query_ms);
    bool all_same_digest = true;
    for (auto* r : g) all_same_digest &= (r->result_digest == g.front()->result_digest);
    avg.result_digest = all_same_digest ? g.front()->result_digest : "";
    bool any_timeout = false;
    for (auto* r : g) any_timeout |= r->timed_out;
    avg.timed_out = any_timeout;
    averages.push_back(std::move(avg));
  }
  records.insert(records.end(), averages.begin(), averages.end());
}

struct AffinityGuard {
  cpu_set_t saved;
  AffinityGuard() { sched_getaffinity(0, sizeof(saved), &saved); }
  ~AffinityGuard() { sched_setaffinity(0, sizeof(saved), &saved); }
};

size_t default_region_bytes(const std::string& experiment) {
  if (experiment == "E7") return 64 * MiB;
  return 256 * MiB;
}

}  // namespace

std::vector<Record> run_experiment(const ExperimentConfig& config) {
  static const std::map<std::string,
                        std::vector<Record> (*)(const ExperimentConfig&, const Ctx&)>
      runners = {{"E1", run_e1}, {"E2", run_e2}, {"E3", run_e3}, {"E4", run_e4},
                 {"E5", run_e5}, {"E6", run_e6}, {"E7", run_e7}};
  auto it = runners.find(config.experiment);
  if (it == runners.end())
    throw std::invalid_argument("unknown experiment: " + config.experiment);
  if (config.reps == 0) throw std::invalid_argument("reps must be at least 1");
  if (config.timeout_s < 0) throw std::invalid_argument("timeout must be non-negative");
  if (config.reduction_factor < 2)
    throw std::invalid_argument("reduction factor must be >= 2");
  for (double r : config.rates)
    if (r < 0) throw std::invalid_argument("rates must be non-negative");

  ExperimentConfig cfg = config;
  if (cfg.region_bytes == 0) cfg.region_bytes = default_region_bytes(cfg.experiment);

  AffinityGuard guard;
  Ctx ctx = make_ctx(cfg);
  if (cfg.region_bytes % ctx.page != 0)
    throw std::invalid_argument("region size must be a multiple of the page size");

  std::vector<Record> records = it->second(cfg, ctx);
  append_averages(records);
  return records;
}

// --------------------------------------------------------------------------

const std::vector<std::string>& record_field_names() {
  static const std::vector<std::string> kNames = {
      "experiment",       "method",        "mode",
      "rep",              "page_bytes",    "region_bytes",
      "area_bytes",       "rate",          "skew_hot_fraction",
      "skew_hot_bytes",   "seed",          "reduction_factor",
      "timeout_s",        "skipped",       "skip_reason",
      "timed_out",        "elapsed_ms",    "throughput_mibps",
      "bytes_copied_total", "bytes_copied_extra", "dirty_events",
      "areas_split",      "pages_migrated", "pages_pending",
      "pages_failed",     "requested_rate", "achieved_rate",
      "achieved_pct",     "query",          "query_exec",
      "query_ms",         "result_digest"};
  return kNames;
}

namespace {
std::string fmt_double(double v) {
  char buf[64];
  snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace

std::vector<std::string> record_field_values(const Record& r) {
  return {r.experiment,
          r.method,
          r.mode,
          r.rep,
          std::to_string(r.page_bytes),
          std::to_string(r.region_bytes),
          std::to_string(r.area_bytes),
          fmt_double(r.rate),
          fmt_double(r.skew_hot_fraction),
          std::to_string(r.skew_hot_bytes),
          std::to_string(r.seed),
          std::to_string(r.reduction_factor),
          fmt_double(r.timeout_s),
          r.skipped ? "1" : "0",
          r.skip_reason,
          r.timed_out ? "1" : "0",
          fmt_double(r.elapsed_ms),
          fmt_double(r.throughput_mbps),
          std::to_string(r.bytes_copied_total),
          std::to_string(r.bytes_copied_extra),
          std::to_string(r.dirty_events),
          std::to_string(r.areas_split),
          std::to_string(r.pages_migrated),
          std::to_string(r.pages_pending),
          std::to_string(r.pages_failed),
          fmt_double(r.requested_rate),
          fmt_double(r.achieved_rate),
          fmt_double(r.achieved_pct),
          r.query,
          std::to_string(r.query_exec),
          fmt_double(r.query_ms),
          r.result_digest};
}

namespace {
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}
}  // namespace

void write_csv(const std::string& path, const std::vector<Record>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("write_csv: cannot open " + path);
  const auto& names = record_field_names();
  for (size_t i = 0; i < names.size(); ++i)
    f << (i ? "," : "") << names[i];
  f << "\n";
  for (const Record& r : records) {
    auto vals = record_field_values(r);
    for (size_t i = 0; i < vals.size(); ++i)
      f << (i ? "," : "") << csv_escape(vals[i]);
    f << "\n";
  }
  if (!f) throw Error("write_csv: write failed for " + path);
}

void write_json(const std::string& path, const std::vector<Record>& records) {
  nlohmann::json root;
  root["schema_version"] = 1;
  root["records"] = nlohmann::json::array();
  for (const Record& r : records) {
    nlohmann::json o;
    o["experiment"] = r.experiment;
    o["method"] = r.method;
    o["mode"] = r.mode;
    o["rep"] = r.rep;
    o["page_bytes"] = r.page_bytes;
    o["region_bytes"] = r.region_bytes;
    o["area_bytes"] = r.area_bytes;
    o["rate"] = r.rate;
    o["skew_hot_fraction"] = r.skew_hot_fraction;
    o["skew_hot_bytes"] = r.skew_hot_bytes;
    o["seed"] = r.seed;
    o["reduction_factor"] = r.reduction_factor;
    o["timeout_s"] = r.timeout_s;
    o["skipped"] = r.skipped;
    o["skip_reason"] = r.skip_reason;
    o["timed_out"] = r.timed_out;
    o["elapsed_ms"] = r.elapsed_ms;
    o["throughput_mibps"] = r.throughput_mbps;
    o["bytes_copied_total"] = r.bytes_copied_total;
    o["bytes_copied_extra"] = r.bytes_copied_extra;
    o["dirty_events"] = r.dirty_events;
    o["areas_split"] = r.areas_split;
    o["pages_migrated"] = r.pages_migrated;
    o["pages_pending"] = r.pages_pending;
    o["pages_failed"] = r.pages_failed;
    o["requested_rate"] = r.requested_rate;
    o["achieved_rate"] = r.achieved_rate;
    o["achieved_pct"] = r.achieved_pct;
    o["query"] = r.query;
    o["query_exec"] = r.query_exec;
    o["query_ms"] = r.query_ms;
    o["result_digest"] = r.result_digest;
    root["records"].push_back(std::move(o));
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("write_json: cannot open " + path);
  f << root.dump(2) << "\n";
  if (!f) throw Error("write_json: write failed for " + path);
}

// --------------------------------------------------------------------------

EnvReport env_check() {
  EnvReport e;
  e.topology = detect_topology();
  e.small_page_bytes = os::small_page_size();
  e.huge_page_bytes = os::default_huge_page_size();
  auto mount = os::hugetlbfs_mount();
  e.hugetlb_mount_present = mount.has_value();
  if (mount) e.hugetlb_mount = *mount;
  e.free_huge_pages = os::free_huge_pages();
  e.numa_balancing = os::numa_balancing_enabled();

  bool real = e.topology.physical_nodes >= 2;
  e.arms.push_back({"real_numa", real,
                    real ? "multiple physical nodes available"
                         : "single physical node; simulated pair in use"});
  e.arms.push_back({"simulated_numa", true, "always available"});
  bool huge = e.hugetlb_mount_present && e.free_huge_pages > 0;
  e.arms.push_back({"huge_pages", huge,
                    huge ? e.hugetlb_mount + ", " + std::to_string(e.free_huge_pages) +
                               " pages free"
                         : "no hugetlbfs mount with free pages"});
  e.arms.push_back({"numa_balancing", e.numa_balancing,
                    e.numa_balancing ? "kernel balancer active"
                                     : "kernel balancer disabled"});
  e.arms.push_back({"move_pages", real,
                    real ? "usable" : "needs multiple physical nodes"});
  return e;
}

std::string EnvReport::to_text() const {
  std::string s;
  s += "nodes: " + std::to_string(topology.nodes.size()) +
       (topology.simulated ? " (simulated pair on one physical node)\n" : " physical\n");
  for (int n : topology.nodes) {
    s += "  node " + std::to_string(n) + " cpus:";
    for (int c : topology.cpus_of(n)) s += " " + std::to_string(c);
    s += "\n";
  }
  s += "page size: " + std::to_string(small_page_bytes) +
       ", huge page: " + std::to_string(huge_page_bytes) + "\n";
  s += "hugetlbfs: " + (hugetlb_mount_present ? hugetlb_mount : std::string("none")) +
       ", free huge pages: " + std::to_string(free_huge_pages) + "\n";
  s += "numa balancing: " + std::string(numa_balancing ? "on" : "off") + "\n";
  s += "arms:\n";
  for (const EnvArm& a : arms)
    s += "  " + a.name + ": " + (a.available ? "available" : "skipped") + " (" +
         a.detail + ")\n";
  return s;
}

std::string EnvReport::to_json_string() const {
  nlohmann::json j;
  j["nodes"] = topology.nodes;
  j["simulated"] = topology.simulated;
  j["physical_nodes"] = topology.physical_nodes;
  nlohmann::json cpus;
  for (int n : topology.nodes) cpus[std::to_string(n)] = topology.cpus_of(n);
  j["cpus"] = cpus;
  j["small_page_bytes"] = small_page_bytes;
  j["huge_page_bytes"] = huge_page_bytes;
  j["hugetlb_mount"] = hugetlb_mount_present ? hugetlb_mount : "";
  j["free_huge_pages"] = free_huge_pages;
  j["numa_balancing"] = numa_balancing;
  j["arms"] = nlohmann::json::array();
  for (const EnvArm& a : arms)
    j["arms"].push_back({{"name", a.name}, {"available", a.available}, {"detail", a.detail}});
  return j.dump(2);
}

size_t parse_byte_size(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty size");
  size_t mult = 1;
  std::string digits = text;
  char suffix = text.back();
  if (suffix == 'K' || suffix == 'k') mult = KiB;
  if (suffix == 'M' || suffix == 'm') mult = MiB;
  if (suffix == 'G' || suffix == 'g') mult = size_t{1} << 30;
  if (mult != 1) digits = text.substr(0, text.size() - 1);
  // stoull tolerates signs and leading whitespace; sizes are bare digits.
  if (digits.empty() ||
      digits.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("bad size: " + text);
  size_t pos = 0;
  unsigned long long v = std::stoull(digits, &pos);
  if (pos != digits.size()) throw std::invalid_argument("bad size: " + text);
  return size_t(v) * mult;
}

}  // namespace pageleap
