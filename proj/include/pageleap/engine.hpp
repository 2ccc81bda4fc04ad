#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pageleap/mem_file.hpp"
#include "pageleap/vmap.hpp"

namespace pageleap {

// Lifecycle of one migration area. Transitions are compare-and-swap only:
//
//   Idle -> Copying            worker, after write-protecting the range
//   Copying -> Sealed          worker, copy finished with no observed write
//   Copying -> Dirty           fault handler, write landed mid-copy
//   Sealed -> Remapping        worker, begins the rewire
//   Sealed -> Dirty            fault handler, bounded-wait escape hatch
//   Remapping -> Remapped      worker, rewire visible
//   Dirty -> Idle              worker, single-page area re-queued for retry
//
// There is deliberately no handler transition out of Remapping: restoring
// write access while the rewire syscall is in flight could let a retried
// write land on the source pages and be silently discarded by the remap.
// Once Remapping starts, faulting writers wait for Remapped.
enum class AreaState : uint8_t { Idle, Copying, Sealed, Remapping, Remapped, Dirty };

const char* to_string(AreaState s);

struct Area {
  size_t voffset = 0;  // region-relative
  size_t length = 0;
  uint32_t retries = 0;
  std::atomic<AreaState> state{AreaState::Idle};
  // Set by the fault handler that wins the Dirty transition, after it has
  // restored write access. Everyone else (other faulting threads, the worker
  // deciding how to retry) waits on this instead of touching protections.
  std::atomic<bool> unprotect_done{false};

  Area() = default;
  Area(size_t off, size_t len, uint32_t r) : voffset(off), length(len), retries(r) {}

  bool try_begin_copy();
  bool try_seal();
  bool try_dirty_from_copying();
  bool try_dirty_from_sealed();
  bool try_begin_remap();
  bool try_complete_remap();
  bool try_reset_for_retry();  // Dirty -> Idle; clears unprotect_done first
};

// Contiguous child spans a dirty area is split into: min(factor, pages)
// children, sizes differing by at most one page, covering the parent
// exactly, in address order. A single-page input yields itself.
struct AreaSpan {
  size_t voffset = 0;
  size_t length = 0;
  bool operator==(const AreaSpan&) const = default;
};
std::vector<AreaSpan> split_spans(size_t voffset, size_t length, unsigned factor,
                                  size_t page_size);

struct MigrationOptions {
  static constexpr std::chrono::nanoseconds kNoTimeout =
      std::chrono::nanoseconds::max();

  size_t initial_area_bytes = size_t{16} << 20;
  unsigned reduction_factor = 2;
  std::chrono::nanoseconds timeout = std::chrono::seconds(10);
  // Require the destination pool to hold enough pre-faulted free space for
  // the whole region before starting.
  bool dst_prefault_required = true;

  // Test instrumentation: invoked by the worker between protocol steps of
  // each area attempt. Not for production use.
  std::function<void(size_t voffset, size_t length)> after_copy_hook;
  std::function<void(size_t voffset, size_t length)> after_seal_hook;
};

enum class PageMigrationStatus : uint8_t { Pending = 0, Migrated = 1 };
enum class JobStatus { Complete, TimedOut, Failed };

struct AreaRecord {
  size_t voffset = 0;
  size_t length = 0;
  uint32_t retries = 0;
};

struct MigrationStats {
  uint64_t bytes_copied_total = 0;
  uint64_t bytes_copied_extra = 0;  // total minus bytes whose copy was kept
  uint64_t dirty_events = 0;
  uint64_t areas_split = 0;
  std::chrono::nanoseconds elapsed{0};
};

struct MigrationReport {
  JobStatus status = JobStatus::Complete;
  size_t pages_migrated = 0;
  size_t pages_pending = 0;
  std::vector<PageMigrationStatus> page_status;
  std::vector<AreaRecord> migrated_areas;  // completion order
  std::vector<AreaRecord> pending_areas;   // queue order at stop
  MigrationStats stats;
  std::string error;
};

class MigrationJob;
using JobHandle = std::shared_ptr<MigrationJob>;

// The write-protection fault handler must be installed before any migration
// starts. Installing twice or uninstalling with jobs in flight is an error;
// faults that do not belong to an active job are forwarded to the previously
// installed handler.
void install_fault_handler();
void uninstall_fault_handler();
bool fault_handler_installed();

// Begins migrating every page of `region` onto extents drawn from `dst`.
// Returns immediately; the protocol runs on an internal worker thread pinned
// to a CPU of the destination node. The region must be fully mapped and is
// writable throughout, except for the area currently being moved.
JobHandle start_migration(VirtualRegion& region, std::shared_ptr<PhysicalStore> dst,
                          const MigrationOptions& options = {});

// Blocks until the job finishes (optionally polling at the given period) and
// returns its report. May be called repeatedly.
MigrationReport wait(const JobHandle& job,
                     std::optional<std::chrono::nanoseconds> poll = std::nullopt);

class MigrationJob {
 public:
  ~MigrationJob();
  MigrationJob(const MigrationJob&) = delete;
  MigrationJob& operator=(const MigrationJob&) = delete;

  bool done() const { return done_.load(std::memory_order_acquire); }
  MigrationReport report() const;

  // Async-signal-safe write-fault resolution; called from the handler.
  void resolve_write_fault(uintptr_t addr) noexcept;

 private:
  MigrationJob() = default;
  friend JobHandle start_migration(VirtualRegion&, std::shared_ptr<PhysicalStore>,
                                   const MigrationOptions&);
  friend MigrationReport wait(const JobHandle&, std::optional<std::chrono::nanoseconds>);

  void run();
  bool migrate_area(Area* area);
  bool copy_seal_remap(Area* area, const Extent& dst_extent, bool& dst_owned);
  void handle_dirty_area(Area* area);
  void finish(JobStatus status, std::string error);

  VirtualRegion* region_ = nullptr;
  std::shared_ptr<PhysicalStore> dst_;
  MigrationOptions opts_;
  size_t page_size_ = 0;
  uintptr_t base_ = 0;

  std::deque<Area*> queue_;  // worker-only
  std::vector<std::unique_ptr<Area>> arena_;
  std::vector<std::atomic<Area*>> page_area_;  // handler-visible routing
  std::vector<Mapping> src_mapping_;           // snapshot for source release
  std::vector<PageMigrationStatus> page_status_;
  std::vector<AreaRecord> migrated_areas_;
  std::vector<AreaRecord> pending_areas_;
  MigrationStats stats_;
  uint64_t migrated_bytes_ = 0;
  JobStatus status_ = JobStatus::Complete;
  std::string error_;

  std::chrono::steady_clock::time_point t0_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> done_{false};
  mutable std::mutex report_mu_;
  std::condition_variable done_cv_;
  std::thread worker_;
  int slot_index_ = -1;
};

}  // namespace pageleap
