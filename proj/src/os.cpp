#include "pageleap/os.hpp"

#include <fcntl.h>
#include <sched.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pageleap/errors.hpp"

#ifndef MFD_CLOEXEC
#define MFD_CLOEXEC 0x0001U
#endif
#ifndef MPOL_BIND
#define MPOL_BIND 2
#endif
#ifndef MPOL_MF_MOVE
#define MPOL_MF_MOVE (1 << 1)
#endif

namespace pageleap::os {

CallCounters& counters() {
  static CallCounters c;
  return c;
}

size_t small_page_size() {
  static const size_t sz = static_cast<size_t>(sysconf(_SC_PAGESIZE));
  return sz;
}

size_t default_huge_page_size() {
  static const size_t sz = [] {
    std::ifstream f("/proc/meminfo");
    std::string line;
    while (std::getline(f, line)) {
      if (line.rfind("Hugepagesize:", 0) == 0) {
        std::istringstream is(line.substr(13));
        size_t kb = 0;
        is >> kb;
        return kb * 1024;
      }
    }
    return size_t{2} << 20;
  }();
  return sz;
}

int memfd(const std::string& name, size_t size) {
  int fd = static_cast<int>(syscall(SYS_memfd_create, name.c_str(), MFD_CLOEXEC));
  if (fd < 0) throw_errno("memfd_create", errno);
  if (ftruncate(fd, static_cast<off_t>(size)) != 0) {
    int err = errno;
    close(fd);
    throw_errno("ftruncate(memfd)", err);
  }
  return fd;
}

int hugetlb_file(const std::string& mount_dir, size_t size) {
  std::string path = mount_dir + "/pageleap.XXXXXX";
  std::vector<char> buf(path.begin(), path.end());
  buf.push_back('\0');
  int fd = mkstemp(buf.data());
  if (fd < 0) throw_errno("mkstemp(hugetlbfs)", errno);
  unlink(buf.data());
  if (ftruncate(fd, static_cast<off_t>(size)) != 0) {
    int err = errno;
    close(fd);
    throw_errno("ftruncate(hugetlbfs)", err);
  }
  return fd;
}

void map_shared_fixed(void* addr, size_t len, bool writable, int fd, uint64_t offset) {
  int prot = PROT_READ | (writable ? PROT_WRITE : 0);
  void* r = mmap(addr, len, prot, MAP_SHARED | MAP_FIXED, fd, static_cast<off_t>(offset));
  counters().map_fixed.fetch_add(1, std::memory_order_relaxed);
  if (r == MAP_FAILED) throw_errno("mmap(MAP_SHARED|MAP_FIXED)", errno);
}

void* map_anon_private(size_t len) {
  void* r = mmap(nullptr, len, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
  if (r == MAP_FAILED) throw_errno("mmap(anonymous)", errno);
  return r;
}

void* reserve(size_t len, size_t align) {
  size_t padded = len + (align > small_page_size() ? align : 0);
  void* r = mmap(nullptr, padded, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (r == MAP_FAILED) throw_errno("mmap(reserve)", errno);
  if (padded == len) return r;
  // Trim to an aligned window; release the slack so the reservation is exact.
  auto p = reinterpret_cast<uintptr_t>(r);
  uintptr_t aligned = (p + align - 1) & ~(align - 1);
  if (aligned > p) munmap(r, aligned - p);
  uintptr_t end = aligned + len;
  uintptr_t padded_end = p + padded;
  if (padded_end > end) munmap(reinterpret_cast<void*>(end), padded_end - end);
  return reinterpret_cast<void*>(aligned);
}

void unmap(void* addr, size_t len) {
  if (len == 0) return;
  if (munmap(addr, len) != 0) throw_errno("munmap", errno);
}

void protect(void* addr, size_t len, bool writable) {
  int prot = PROT_READ | (writable ? PROT_WRITE : 0);
  counters().protect.fetch_add(1, std::memory_order_relaxed);
  if (mprotect(addr, len, prot) != 0) throw_errno("mprotect", errno);
}

int protect_raw(void* addr, size_t len, bool writable) noexcept {
  int prot = PROT_READ | (writable ? PROT_WRITE : 0);
  counters().protect.fetch_add(1, std::memory_order_relaxed);
  long r = syscall(SYS_mprotect, addr, len, prot);
  return r == 0 ? 0 : errno;
}

void query_pages(void** pages, int* status, size_t count) {
  if (count == 0) return;
  long r = syscall(SYS_move_pages, 0, count, pages, nullptr, status, 0);
  if (r < 0) throw_errno("move_pages(query)", errno);
}

void move_pages_to(void** pages, const int* nodes, int* status, size_t count) {
  if (count == 0) return;
  long r = syscall(SYS_move_pages, 0, count, pages, nodes, status, MPOL_MF_MOVE);
  if (r < 0) throw_errno("move_pages(move)", errno);
}

void bind_to_node(void* addr, size_t len, int node) {
  unsigned long nodemask = 1UL << node;
  long r = syscall(SYS_mbind, addr, len, MPOL_BIND, &nodemask,
                   sizeof(nodemask) * 8, 0);
  if (r != 0) throw_errno("mbind", errno);
}

void pin_thread_to_cpu(int cpu) {
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  if (sched_setaffinity(0, sizeof(set), &set) != 0) throw_errno("sched_setaffinity", errno);
}

std::vector<int> thread_affinity() {
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof(set), &set) != 0) throw_errno("sched_getaffinity", errno);
  std::vector<int> cpus;
  for (int i = 0; i < CPU_SETSIZE; ++i)
    if (CPU_ISSET(i, &set)) cpus.push_back(i);
  return cpus;
}

namespace {

// Parses sysfs list format: "0-3,8,10-11".
std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    auto dash = tok.find('-');
    if (dash == std::string::npos) {
      ids.push_back(std::stoi(tok));
    } else {
      int lo = std::stoi(tok.substr(0, dash));
      int hi = std::stoi(tok.substr(dash + 1));
      for (int i = lo; i <= hi; ++i) ids.push_back(i);
    }
  }
  return ids;
}

std::string read_first_line(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  return line;
}

}  // namespace

std::vector<int> online_nodes() {
  std::string line = read_first_line("/sys/devices/system/node/online");
  if (line.empty()) return {0};
  return parse_id_list(line);
}

std::vector<int> cpus_of_node(int node) {
  std::string path =
      "/sys/devices/system/node/node" + std::to_string(node) + "/cpulist";
  std::string line = read_first_line(path);
  if (line.empty()) return {};
  return parse_id_list(line);
}

std::optional<std::string> hugetlbfs_mount() {
  std::ifstream f("/proc/mounts");
  std::string dev, dir, type;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    is >> dev >> dir >> type;
    if (type == "hugetlbfs") return dir;
  }
  return std::nullopt;
}

size_t free_huge_pages(int node) {
  std::string path;
  size_t kb = default_huge_page_size() / 1024;
  if (node >= 0) {
    path = "/sys/devices/system/node/node" + std::to_string(node) +
           "/hugepages/hugepages-" + std::to_string(kb) + "kB/free_hugepages";
  } else {
    path = "/sys/kernel/mm/hugepages/hugepages-" + std::to_string(kb) +
           "kB/free_hugepages";
  }
  std::string line = read_first_line(path);
  if (line.empty()) return 0;
  return static_cast<size_t>(std::stoull(line));
}

bool numa_balancing_enabled() {
  std::string line = read_first_line("/proc/sys/kernel/numa_balancing");
  return !line.empty() && line[0] != '0';
}

}  // namespace pageleap::os
