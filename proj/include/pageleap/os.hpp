#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pageleap::os {

// Counters for the remap-visible syscalls, so tests can assert how many OS
// calls a higher-level operation issued.
struct CallCounters {
  std::atomic<uint64_t> map_fixed{0};
  std::atomic<uint64_t> protect{0};
};

CallCounters& counters();

size_t small_page_size();
size_t default_huge_page_size();  // from /proc/meminfo Hugepagesize

int memfd(const std::string& name, size_t size);              // sealed-size shm fd
int hugetlb_file(const std::string& mount_dir, size_t size);  // unlinked file in hugetlbfs

// mmap(MAP_SHARED | MAP_FIXED) of fd at offset onto addr. One syscall; counted.
void map_shared_fixed(void* addr, size_t len, bool writable, int fd, uint64_t offset);

// Anonymous MAP_PRIVATE read-write mapping (plain malloc-like memory).
void* map_anon_private(size_t len);

// PROT_NONE anonymous reservation, optionally aligned to `align` (power of two).
void* reserve(size_t len, size_t align);
void unmap(void* addr, size_t len);

void protect(void* addr, size_t len, bool writable);  // counted

// Raw async-signal-safe mprotect used by the fault handler; also counted.
int protect_raw(void* addr, size_t len, bool writable) noexcept;

// move_pages(2) in query mode. status[i]: node id, or negative errno.
void query_pages(void** pages, int* status, size_t count);
// move_pages(2) in move mode, statuses reported verbatim.
void move_pages_to(void** pages, const int* nodes, int* status, size_t count);

// mbind(MPOL_BIND) of a range to one node.
void bind_to_node(void* addr, size_t len, int node);

void pin_thread_to_cpu(int cpu);
std::vector<int> thread_affinity();

std::vector<int> online_nodes();
std::vector<int> cpus_of_node(int node);

std::optional<std::string> hugetlbfs_mount();
// Free huge pages system-wide (or on one node if node >= 0); 0 if unknown.
size_t free_huge_pages(int node = -1);
bool numa_balancing_enabled();

}  // namespace pageleap::os
