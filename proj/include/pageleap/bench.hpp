#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pageleap/topology.hpp"
#include "pageleap/workload.hpp"

namespace pageleap {

enum class RunMode { Auto, Real, Simulated };
enum class OutputFormat { Csv, Json };

// E1 access-time probes          E5 sustained-rate sweep
// E2 one-shot migration methods  E6 overhead accounting
// E3 quiet area-size sweep       E7 table-scan workload
// E4 bursty-write interference
struct ExperimentConfig {
  std::string experiment;  // "E1".."E7"
  RunMode mode = RunMode::Auto;
  bool huge_pages = false;
  size_t region_bytes = 0;          // 0: per-experiment default
  std::vector<size_t> area_sizes;   // empty: per-experiment default
  std::vector<double> rates;        // writes/s; empty: default; 0 entries = quiet
  std::optional<SkewSpec> skew;
  uint64_t seed = 42;
  unsigned reps = 3;
  double timeout_s = 10.0;
  unsigned reduction_factor = 2;
  size_t rand_access_count = 10'000'000;  // E1 random accesses
  size_t write_count = 1'000'000;         // E7 journaled updates
  unsigned writer_threads = 2;
  unsigned query_execs = 5;   // E7 executions per query
  double burst_seconds = 3.0;  // E5 sustained-load window
};

// One result row. Every experiment emits the same flat schema; fields that
// do not apply stay at their defaults. Skipped arms are rows too: a skip is
// data, not an error.
struct Record {
  std::string experiment;
  std::string method;
  std::string mode;  // "real" | "simulated"
  std::string rep;   // "0".."n" or "avg"
  size_t page_bytes = 0;
  size_t region_bytes = 0;
  size_t area_bytes = 0;
  double rate = 0;
  double skew_hot_fraction = 0;
  size_t skew_hot_bytes = 0;
  uint64_t seed = 0;
  unsigned reduction_factor = 0;
  double timeout_s = 0;
  bool skipped = false;
  std::string skip_reason;
  bool timed_out = false;
  double elapsed_ms = 0;
  double throughput_mbps = 0;
  uint64_t bytes_copied_total = 0;
  uint64_t bytes_copied_extra = 0;
  uint64_t dirty_events = 0;
  uint64_t areas_split = 0;
  uint64_t pages_migrated = 0;
  uint64_t pages_pending = 0;
  uint64_t pages_failed = 0;
  double requested_rate = 0;
  double achieved_rate = 0;
  double achieved_pct = 0;
  std::string query;
  int query_exec = -1;
  double query_ms = 0;
  std::string result_digest;
};

const std::vector<std::string>& record_field_names();
std::vector<std::string> record_field_values(const Record& r);

std::vector<Record> run_experiment(const ExperimentConfig& config);

void write_csv(const std::string& path, const std::vector<Record>& records);
void write_json(const std::string& path, const std::vector<Record>& records);

struct EnvArm {
  std::string name;
  bool available = false;
  std::string detail;
};

struct EnvReport {
  Topology topology;
  size_t small_page_bytes = 0;
  size_t huge_page_bytes = 0;
  bool hugetlb_mount_present = false;
  std::string hugetlb_mount;
  size_t free_huge_pages = 0;
  bool numa_balancing = false;
  std::vector<EnvArm> arms;

  std::string to_text() const;
  std::string to_json_string() const;
};

EnvReport env_check();

size_t parse_byte_size(const std::string& text);  // "4096", "512K", "16M", "1G"

}  // namespace pageleap
