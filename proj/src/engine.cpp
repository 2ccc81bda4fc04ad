#include "pageleap/engine.hpp"

#include <sched.h>
#include <signal.h>
#include <string.h>
#include <time.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "pageleap/errors.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"

namespace pageleap {

const char* to_string(AreaState s) {
  switch (s) {
    case AreaState::Idle: return "Idle";
    case AreaState::Copying: return "Copying";
    case AreaState::Sealed: return "Sealed";
    case AreaState::Remapping: return "Remapping";
    case AreaState::Remapped: return "Remapped";
    case AreaState::Dirty: return "Dirty";
  }
  return "?";
}

namespace {

inline bool cas_state(std::atomic<AreaState>& st, AreaState expect, AreaState desired) {
  return st.compare_exchange_strong(expect, desired, std::memory_order_acq_rel,
                                    std::memory_order_acquire);
}

inline void cpu_relax(unsigned iteration) {
  if (iteration < 64) {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_ia32_pause();
#elif defined(__aarch64__)
    asm volatile("yield");
#endif
  } else {
    sched_yield();  // async-signal-safe; essential on few-core hosts
  }
}

inline uint64_t monotonic_ns() {
  timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<uint64_t>(ts.tv_sec) * 1000000000ull +
         static_cast<uint64_t>(ts.tv_nsec);
}

constexpr uint64_t kSealedEscapeNs = 10'000'000;  // handler wait bound in Sealed
constexpr unsigned kDirtyWaitSpins = 4096;

}  // namespace

bool Area::try_begin_copy() { return cas_state(state, AreaState::Idle, AreaState::Copying); }
bool Area::try_seal() { return cas_state(state, AreaState::Copying, AreaState::Sealed); }
bool Area::try_dirty_from_copying() { return cas_state(state, AreaState::Copying, AreaState::Dirty); }
bool Area::try_dirty_from_sealed() { return cas_state(state, AreaState::Sealed, AreaState::Dirty); }
bool Area::try_begin_remap() { return cas_state(state, AreaState::Sealed, AreaState::Remapping); }
bool Area::try_complete_remap() { return cas_state(state, AreaState::Remapping, AreaState::Remapped); }

bool Area::try_reset_for_retry() {
  unprotect_done.store(false, std::memory_order_relaxed);
  return cas_state(state, AreaState::Dirty, AreaState::Idle);
}

std::vector<AreaSpan> split_spans(size_t voffset, size_t length, unsigned factor,
                                  size_t page_size) {
  if (page_size == 0 || length == 0 || length % page_size != 0)
    throw std::invalid_argument("split_spans: bad geometry");
  if (factor < 2) throw std::invalid_argument("split_spans: factor must be >= 2");
  size_t pages = length / page_size;
  if (pages == 1) return {AreaSpan{voffset, length}};
  size_t n = std::min<size_t>(factor, pages);
  size_t base_pages = pages / n;
  size_t extra = pages % n;
  std::vector<AreaSpan> out;
  out.reserve(n);
  size_t off = voffset;
  for (size_t i = 0; i < n; ++i) {
    size_t len = (base_pages + (i < extra ? 1 : 0)) * page_size;
    out.push_back(AreaSpan{off, len});
    off += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fault routing. Jobs advertise their address window in a fixed table the
// handler can scan without locks; per-slot reader counts keep a job alive
// while a fault against it is being resolved.

namespace {

struct JobSlot {
  std::atomic<MigrationJob*> job{nullptr};
  std::atomic<uintptr_t> base{0};
  std::atomic<size_t> len{0};
  std::atomic<int> readers{0};
};

constexpr int kMaxJobs = 64;
JobSlot g_slots[kMaxJobs];
std::atomic<int> g_active_jobs{0};
std::mutex g_slot_mu;

struct sigaction g_prev_action;
std::atomic<bool> g_handler_installed{false};

int register_job(MigrationJob* job, uintptr_t base, size_t len) {
  std::lock_guard<std::mutex> lk(g_slot_mu);
  // Reject overlap with any active job: two protocols fighting over the same
  // pages would corrupt each other's protection bookkeeping.
  for (auto& s : g_slots) {
    if (!s.job.load(std::memory_order_acquire)) continue;
    uintptr_t b = s.base.load(std::memory_order_relaxed);
    size_t l = s.len.load(std::memory_order_relaxed);
    if (base < b + l && b < base + len)
      throw Error("start_migration: region overlaps an active migration");
  }
  for (int i = 0; i < kMaxJobs; ++i) {
    if (g_slots[i].job.load(std::memory_order_relaxed)) continue;
    g_slots[i].base.store(base, std::memory_order_relaxed);
    g_slots[i].len.store(len, std::memory_order_relaxed);
    g_slots[i].job.store(job, std::memory_order_release);
    g_active_jobs.fetch_add(1, std::memory_order_acq_rel);
    return i;
  }
  throw Error("start_migration: too many concurrent migrations");
}

void unregister_job(int slot) {
  g_slots[slot].job.store(nullptr, std::memory_order_release);
  unsigned spin = 0;
  while (g_slots[slot].readers.load(std::memory_order_acquire) != 0)
    cpu_relax(spin++);
  g_active_jobs.fetch_sub(1, std::memory_order_acq_rel);
}

void forward_foreign_fault(int sig, siginfo_t* info, void* uctx) {
  if (g_prev_action.sa_flags & SA_SIGINFO) {
    if (g_prev_action.sa_sigaction) {
      g_prev_action.sa_sigaction(sig, info, uctx);
      return;
    }
  } else if (g_prev_action.sa_handler == SIG_IGN) {
    return;
  } else if (g_prev_action.sa_handler != SIG_DFL && g_prev_action.sa_handler) {
    g_prev_action.sa_handler(sig);
    return;
  }
  // Default disposition: put it back and let the re-raised fault terminate.
  sigaction(SIGSEGV, &g_prev_action, nullptr);
}

// Signal delivery is not prompt: a thread can fault on a protected page, be
// preempted, and only enter the handler after the owning job has finished
// and unregistered. A finished job leaves every page of its region writable,
// so the first unresolved protection fault at an address is answered by
// returning and letting the CPU re-execute the instruction. Only a second
// consecutive miss at the same address, with no resolved fault in between,
// is treated as a genuinely foreign fault. Plain thread-local PODs sit in
// static TLS here, which keeps them safe to touch from a signal handler.
thread_local uintptr_t t_last_miss_addr = 0;
thread_local bool t_miss_pending = false;

void fault_handler(int sig, siginfo_t* info, void* uctx) {
  int saved_errno = errno;
  if (info && info->si_code == SEGV_ACCERR) {
    auto addr = reinterpret_cast<uintptr_t>(info->si_addr);
    for (auto& slot : g_slots) {
      slot.readers.fetch_add(1, std::memory_order_acq_rel);
      MigrationJob* job = slot.job.load(std::memory_order_acquire);
      if (job) {
        uintptr_t b = slot.base.load(std::memory_order_relaxed);
        size_t l = slot.len.load(std::memory_order_relaxed);
        if (addr >= b && addr < b + l) {
          job->resolve_write_fault(addr);
          slot.readers.fetch_sub(1, std::memory_order_release);
          t_miss_pending = false;
          errno = saved_errno;
          return;
        }
      }
      slot.readers.fetch_sub(1, std::memory_order_release);
    }
    if (!t_miss_pending || t_last_miss_addr != addr) {
      t_last_miss_addr = addr;
      t_miss_pending = true;
      errno = saved_errno;
      return;  // late fault from a finished job: retry the instruction
    }
  }
  errno = saved_errno;
  forward_foreign_fault(sig, info, uctx);
}

}  // namespace

void install_fault_handler() {
  if (g_handler_installed.load(std::memory_order_acquire))
    throw Error("fault handler already installed");
  struct sigaction sa;
  memset(&sa, 0, sizeof(sa));
  sa.sa_sigaction = fault_handler;
  sa.sa_flags = SA_SIGINFO;
  sigemptyset(&sa.sa_mask);
  if (sigaction(SIGSEGV, &sa, &g_prev_action) != 0)
    throw_errno("sigaction(SIGSEGV)", errno);
  g_handler_installed.store(true, std::memory_order_release);
}

void uninstall_fault_handler() {
  if (!g_handler_installed.load(std::memory_order_acquire))
    throw Error("fault handler is not installed");
  if (g_active_jobs.load(std::memory_order_acquire) != 0)
    throw Error("cannot uninstall fault handler with migrations in flight");
  if (sigaction(SIGSEGV, &g_prev_action, nullptr) != 0)
    throw_errno("sigaction(SIGSEGV)", errno);
  g_handler_installed.store(false, std::memory_order_release);
}

bool fault_handler_installed() {
  return g_handler_installed.load(std::memory_order_acquire);
}

// ---------------------------------------------------------------------------
// Handler-side resolution. Runs on the faulting thread, possibly many at
// once, against a worker advancing the same area. Every path either restores
// write access itself (winning a Dirty transition) or returns once somebody
// else is known to have done so / the rewire to fresh writable pages is
// visible. Returning early is always safe: the retried store faults again
// and comes back here.

void MigrationJob::resolve_write_fault(uintptr_t addr) noexcept {
  size_t page = (addr - base_) / page_size_;
  for (unsigned spin = 0;; cpu_relax(spin++)) {
    Area* a = page_area_[page].load(std::memory_order_acquire);
    AreaState s = a->state.load(std::memory_order_acquire);
    switch (s) {
      case AreaState::Idle:
      case AreaState::Remapped:
        // Nothing protects this range anymore (or yet); retry the write.
        return;
      case AreaState::Copying:
        if (a->try_dirty_from_copying()) {
          os::protect_raw(reinterpret_cast<void*>(base_ + a->voffset), a->length, true);
          a->unprotect_done.store(true, std::memory_order_release);
          return;
        }
        continue;  // lost a race; reread state
      case AreaState::Dirty: {
        // Another fault won; give its unprotect a moment, then retry the
        // write either way (worst case we fault straight back in).
        for (unsigned i = 0; i < kDirtyWaitSpins; ++i) {
          if (a->unprotect_done.load(std::memory_order_acquire)) break;
          if (a->state.load(std::memory_order_acquire) != AreaState::Dirty) break;
          cpu_relax(i);
        }
        return;
      }
      case AreaState::Sealed: {
        // The copy is done and unobserved so far; the worker is about to
        // rewire. Wait for that, but never longer than the bound: a stalled
        // worker must not wedge writers, so after 10ms we dirty the area and
        // take the write on the source pages.
        uint64_t deadline = monotonic_ns() + kSealedEscapeNs;
        unsigned i = 0;
        for (;;) {
          s = a->state.load(std::memory_order_acquire);
          if (s != AreaState::Sealed && s != AreaState::Remapping) break;
          if (s == AreaState::Sealed && monotonic_ns() > deadline) {
            if (a->try_dirty_from_sealed()) {
              os::protect_raw(reinterpret_cast<void*>(base_ + a->voffset), a->length, true);
              a->unprotect_done.store(true, std::memory_order_release);
              return;
            }
            break;  // someone advanced the state; reread
          }
          cpu_relax(i++);
        }
        continue;
      }
      case AreaState::Remapping: {
        // No escape here (see the state diagram): wait out the rewire.
        unsigned i = 0;
        while (a->state.load(std::memory_order_acquire) == AreaState::Remapping)
          cpu_relax(i++);
        continue;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Worker side.

JobHandle start_migration(VirtualRegion& region, std::shared_ptr<PhysicalStore> dst,
                          const MigrationOptions& options) {
  if (!fault_handler_installed())
    throw Error("start_migration: fault handler is not installed");
  if (!dst) throw std::invalid_argument("start_migration: null destination store");
  if (options.reduction_factor < 2)
    throw std::invalid_argument("start_migration: reduction factor must be >= 2");
  if (options.initial_area_bytes == 0 ||
      options.initial_area_bytes % region.page_size() != 0)
    throw std::invalid_argument(
        "start_migration: initial area must be a positive multiple of the page size");
  if (dst->page_size() != region.page_size())
    throw std::invalid_argument("start_migration: page size mismatch");

  auto job = JobHandle(new MigrationJob());
  job->region_ = &region;
  job->dst_ = std::move(dst);
  job->opts_ = options;
  job->page_size_ = region.page_size();
  job->base_ = reinterpret_cast<uintptr_t>(region.base());

  if (region.length() == 0) {
    job->status_ = JobStatus::Complete;
    job->done_.store(true, std::memory_order_release);
    return job;
  }

  if (!region.fully_mapped())
    throw Error("start_migration: region is not fully mapped");

  size_t pages = region.page_count();
  job->src_mapping_.reserve(pages);
  for (size_t p = 0; p < pages; ++p)
    job->src_mapping_.push_back(*region.mapping_of(p * job->page_size_));

  if (job->opts_.dst_prefault_required &&
      job->dst_->prefaulted_free_bytes() < region.length())
    throw PoolExhausted(
        "start_migration: destination pool lacks pre-faulted space for the region");
  if (job->dst_->stats().free_bytes < region.length())
    throw PoolExhausted("start_migration: destination pool too small for the region");

  job->page_status_.assign(pages, PageMigrationStatus::Pending);
  job->page_area_ = std::vector<std::atomic<Area*>>(pages);
  for (size_t off = 0; off < region.length(); off += job->opts_.initial_area_bytes) {
    size_t len = std::min(job->opts_.initial_area_bytes, region.length() - off);
    job->arena_.push_back(std::make_unique<Area>(off, len, 0));
    Area* a = job->arena_.back().get();
    for (size_t p = off / job->page_size_; p < (off + len) / job->page_size_; ++p)
      job->page_area_[p].store(a, std::memory_order_relaxed);
    job->queue_.push_back(a);
  }

  job->slot_index_ = register_job(job.get(), job->base_, region.length());
  try {
    job->worker_ = std::thread([j = job.get()] { j->run(); });
  } catch (...) {
    unregister_job(job->slot_index_);
    throw;
  }
  return job;
}

void MigrationJob::run() {
  // Keep the copy loop on the destination side, mirroring where the work
  // would run on real hardware. Failure to pin is not fatal.
  try {
    const auto& cpus = process_topology().cpus_of(dst_->node());
    if (!cpus.empty()) pin_current_thread(cpus.front());
  } catch (...) {
  }

  t0_ = std::chrono::steady_clock::now();
  JobStatus status = JobStatus::Complete;
  std::string error;

  while (!queue_.empty()) {
    if (stop_.load(std::memory_order_acquire)) {
      status = JobStatus::Failed;
      error = "cancelled";
      break;
    }
    if (opts_.timeout != MigrationOptions::kNoTimeout &&
        std::chrono::steady_clock::now() - t0_ >= opts_.timeout) {
      status = JobStatus::TimedOut;
      break;
    }
    Area* area = queue_.front();
    queue_.pop_front();
    try {
      migrate_area(area);
    } catch (const std::exception& e) {
      queue_.push_front(area);
      status = JobStatus::Failed;
      error = e.what();
      break;
    }
  }

  if (!queue_.empty()) {
    for (Area* a : queue_) pending_areas_.push_back({a->voffset, a->length, a->retries});
    // Pending ranges are already writable (never protected, or unprotected by
    // the dirtying fault); this keeps the guarantee unconditional.
    try {
      region_->protect_range(0, region_->length(), Protection::ReadWrite);
    } catch (...) {
    }
  }
  finish(status, std::move(error));
}

bool MigrationJob::migrate_area(Area* area) {
  // Destination pages first: allocation and faulting happen before the area
  // is ever write-protected, so writers are not stalled by pool work.
  Extent dst_extent = dst_->allocate(area->length, true);
  bool dst_owned = true;
  try {
    return copy_seal_remap(area, dst_extent, dst_owned);
  } catch (...) {
    // The rewire did not happen (or an internal step failed before it):
    // return the destination pages and make sure no faulting writer is left
    // waiting on a transition that will never come.
    if (dst_owned) dst_->release(dst_extent);
    if (area->state.load(std::memory_order_acquire) == AreaState::Remapping)
      area->try_complete_remap();
    throw;
  }
}

bool MigrationJob::copy_seal_remap(Area* area, const Extent& dst_extent,
                                   bool& dst_owned) {
  region_->protect_range(area->voffset, area->length, Protection::ReadOnly);
  if (!area->try_begin_copy())
    throw Error("internal: area not idle at copy start");

  std::memcpy(dst_->base() + dst_extent.offset,
              reinterpret_cast<const void*>(base_ + area->voffset), area->length);
  stats_.bytes_copied_total += area->length;

  if (opts_.after_copy_hook) opts_.after_copy_hook(area->voffset, area->length);

  if (!area->try_seal()) {
    // A write landed during the copy; the handler restored write access.
    unsigned spin = 0;
    while (!area->unprotect_done.load(std::memory_order_acquire)) cpu_relax(spin++);
    dst_->release(dst_extent);
    dst_owned = false;
    handle_dirty_area(area);
    return false;
  }

  if (opts_.after_seal_hook) opts_.after_seal_hook(area->voffset, area->length);

  if (!area->try_begin_remap()) {
    // Sealed-state escape fired: a writer waited past the bound and dirtied
    // the area. Same retry path as a mid-copy write.
    unsigned spin = 0;
    while (!area->unprotect_done.load(std::memory_order_acquire)) cpu_relax(spin++);
    dst_->release(dst_extent);
    dst_owned = false;
    handle_dirty_area(area);
    return false;
  }

  region_->map_range(area->voffset, dst_extent, Protection::ReadWrite);
  dst_owned = false;  // pages are live in the region now
  if (!area->try_complete_remap())
    throw Error("internal: remap completion raced");

  // Return the source pages; consecutive pages of one store release as one
  // extent.
  size_t first_page = area->voffset / page_size_;
  size_t page_count = area->length / page_size_;
  size_t run_start = first_page;
  for (size_t i = 1; i <= page_count; ++i) {
    bool boundary = i == page_count;
    if (!boundary) {
      const Mapping& prev = src_mapping_[first_page + i - 1];
      const Mapping& cur = src_mapping_[first_page + i];
      boundary = cur.store != prev.store || cur.offset != prev.offset + page_size_;
    }
    if (boundary) {
      const Mapping& head = src_mapping_[run_start];
      size_t run_pages = first_page + i - run_start;
      head.store->release(Extent{head.store, head.offset, run_pages * page_size_});
      run_start = first_page + i;
    }
  }

  for (size_t p = first_page; p < first_page + page_count; ++p)
    page_status_[p] = PageMigrationStatus::Migrated;
  migrated_bytes_ += area->length;
  migrated_areas_.push_back({area->voffset, area->length, area->retries});
  return true;
}

void MigrationJob::handle_dirty_area(Area* area) {
  stats_.dirty_events += 1;
  if (area->length == page_size_) {
    // Floor reached: retry the same page until its writer pauses.
    area->retries += 1;
    if (!area->try_reset_for_retry())
      throw Error("internal: dirty area not dirty at reset");
    queue_.push_back(area);
    return;
  }
  stats_.areas_split += 1;
  auto spans = split_spans(area->voffset, area->length, opts_.reduction_factor, page_size_);
  for (const AreaSpan& s : spans) {
    arena_.push_back(std::make_unique<Area>(s.voffset, s.length, area->retries + 1));
    Area* child = arena_.back().get();
    for (size_t p = s.voffset / page_size_; p < (s.voffset + s.length) / page_size_; ++p)
      page_area_[p].store(child, std::memory_order_release);
    queue_.push_back(child);
  }
  // The parent stays Dirty; nothing routes to it anymore.
}

void MigrationJob::finish(JobStatus status, std::string error) {
  stats_.elapsed = std::chrono::steady_clock::now() - t0_;
  stats_.bytes_copied_extra = stats_.bytes_copied_total - migrated_bytes_;
  status_ = status;
  error_ = std::move(error);
  if (slot_index_ >= 0) {
    unregister_job(slot_index_);
    slot_index_ = -1;
  }
  {
    std::lock_guard<std::mutex> lk(report_mu_);
    done_.store(true, std::memory_order_release);
  }
  done_cv_.notify_all();
}

MigrationReport MigrationJob::report() const {
  if (!done()) throw Error("report: job still running");
  MigrationReport r;
  r.status = status_;
  r.page_status = page_status_;
  r.pages_migrated = static_cast<size_t>(
      std::count(page_status_.begin(), page_status_.end(), PageMigrationStatus::Migrated));
  r.pages_pending = page_status_.size() - r.pages_migrated;
  r.migrated_areas = migrated_areas_;
  r.pending_areas = pending_areas_;
  r.stats = stats_;
  r.error = error_;
  return r;
}

MigrationJob::~MigrationJob() {
  stop_.store(true, std::memory_order_release);
  if (worker_.joinable()) worker_.join();
}

MigrationReport wait(const JobHandle& job, std::optional<std::chrono::nanoseconds> poll) {
  if (!job) throw std::invalid_argument("wait: null job");
  if (poll) {
    if (*poll <= std::chrono::nanoseconds::zero())
      throw std::invalid_argument("wait: poll period must be positive");
    while (!job->done()) std::this_thread::sleep_for(*poll);
  } else {
    std::unique_lock<std::mutex> lk(job->report_mu_);
    job->done_cv_.wait(lk, [&] { return job->done_.load(std::memory_order_acquire); });
  }
  return job->report();
}

}  // namespace pageleap
