#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <chrono>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>

#include "pageleap/bench.hpp"
#include "pageleap/engine.hpp"
#include "pageleap/errors.hpp"
#include "pageleap/mem_file.hpp"
#include "pageleap/os.hpp"
#include "pageleap/topology.hpp"
#include "pageleap/vmap.hpp"
#include "pageleap/workload.hpp"

namespace py = pybind11;
using namespace pageleap;

namespace {

const char* status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Complete: return "complete";
    case JobStatus::TimedOut: return "timed_out";
    default: return "failed";
  }
}

py::dict report_to_dict(const MigrationReport& r) {
  py::dict d;
  d["status"] = status_name(r.status);
  d["pages_migrated"] = r.pages_migrated;
  d["pages_pending"] = r.pages_pending;
  d["bytes_copied_total"] = r.stats.bytes_copied_total;
  d["bytes_copied_extra"] = r.stats.bytes_copied_extra;
  d["dirty_events"] = r.stats.dirty_events;
  d["areas_split"] = r.stats.areas_split;
  d["elapsed_s"] = std::chrono::duration<double>(r.stats.elapsed).count();
  d["error"] = r.error;
  py::list areas;
  for (const AreaRecord& a : r.migrated_areas)
    areas.append(py::make_tuple(a.voffset, a.length, a.retries));
  d["migrated_areas"] = areas;
  py::list pending;
  for (const AreaRecord& a : r.pending_areas)
    pending.append(py::make_tuple(a.voffset, a.length, a.retries));
  d["pending_areas"] = pending;
  return d;
}

py::dict topology_to_dict(const Topology& t) {
  py::dict d;
  d["nodes"] = t.nodes;
  d["simulated"] = t.simulated;
  d["physical_nodes"] = t.physical_nodes;
  py::dict cpus;
  for (int n : t.nodes) cpus[py::int_(n)] = t.cpus_of(n);
  d["cpus"] = cpus;
  return d;
}

std::chrono::nanoseconds seconds_to_ns(double s) {
  if (s < 0) throw std::invalid_argument("timeout_s must be non-negative");
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(s));
}

}  // namespace

PYBIND11_MODULE(_pageleap, m) {
  m.doc() = "User-space page migration over main-memory files";

  py::register_exception<PoolExhausted>(m, "PoolExhausted", PyExc_RuntimeError);

  py::enum_<Backing>(m, "Backing")
      .value("SHM_FILE", Backing::ShmFile)
      .value("HUGETLB_FILE", Backing::HugetlbFile);

  py::class_<Extent>(m, "Extent")
      .def_readonly("offset", &Extent::offset)
      .def_readonly("length", &Extent::length)
      .def("__repr__", [](const Extent& e) {
        return "Extent(offset=" + std::to_string(e.offset) +
               ", length=" + std::to_string(e.length) + ")";
      });

  py::class_<PhysicalStore, std::shared_ptr<PhysicalStore>>(m, "PhysicalStore")
      .def_static(
          "create",
          [](int node, size_t page_size, size_t capacity, Backing backing) {
            return PhysicalStore::create(node, page_size, capacity, backing);
          },
          py::arg("node"), py::arg("page_size"), py::arg("capacity"),
          py::arg("backing") = Backing::ShmFile)
      .def_property_readonly("node", &PhysicalStore::node)
      .def_property_readonly("page_size", &PhysicalStore::page_size)
      .def_property_readonly("capacity", &PhysicalStore::capacity)
      .def("allocate", &PhysicalStore::allocate, py::arg("length"),
           py::arg("prefault") = true)
      .def("release", &PhysicalStore::release, py::arg("extent"))
      .def("prefaulted_free_bytes", &PhysicalStore::prefaulted_free_bytes)
      .def("stats", [](const PhysicalStore& s) {
        PoolStats st = s.stats();
        py::dict d;
        d["capacity_bytes"] = st.capacity_bytes;
        d["free_bytes"] = st.free_bytes;
        d["used_bytes"] = st.used_bytes;
        d["prefaulted_pages"] = st.prefaulted_pages;
        return d;
      });

  py::class_<VirtualRegion>(m, "VirtualRegion")
      .def_static("reserve", &VirtualRegion::reserve, py::arg("length"),
                  py::arg("page_size"))
      .def_property_readonly("length", &VirtualRegion::length)
      .def_property_readonly("page_size", &VirtualRegion::page_size)
      .def_property_readonly("address",
                             [](const VirtualRegion& r) {
                               return reinterpret_cast<uintptr_t>(r.base());
                             })
      .def(
          "map_range",
          [](VirtualRegion& r, size_t offset, const Extent& e, bool writable) {
            r.map_range(offset, e,
                        writable ? Protection::ReadWrite : Protection::ReadOnly);
          },
          py::arg("offset"), py::arg("extent"), py::arg("writable") = true)
      .def("fully_mapped", &VirtualRegion::fully_mapped)
      .def(
          "mapping_of",
          [](VirtualRegion& r, size_t offset) -> py::object {
            auto m = r.mapping_of(offset);
            if (!m) return py::none();
            return py::make_tuple(m->store->node(), m->offset);
          },
          py::arg("offset"))
      .def(
          "fill_random",
          [](VirtualRegion& r, uint64_t seed) {
            fill_random(r.base(), r.length(), seed);
          },
          py::arg("seed"))
      .def(
          "read",
          [](VirtualRegion& r, size_t offset, size_t length) {
            if (offset + length > r.length())
              throw std::out_of_range("read past the end of the region");
            return py::bytes(reinterpret_cast<const char*>(r.base() + offset), length);
          },
          py::arg("offset"), py::arg("length"))
      .def(
          "write",
          [](VirtualRegion& r, size_t offset, py::bytes data) {
            std::string_view v = data;
            if (offset + v.size() > r.length())
              throw std::out_of_range("write past the end of the region");
            std::memcpy(r.base() + offset, v.data(), v.size());
          },
          py::arg("offset"), py::arg("data"));

  py::class_<MigrationJob, std::shared_ptr<MigrationJob>>(m, "MigrationJob")
      .def("done", &MigrationJob::done);

  m.def("small_page_size", &os::small_page_size);
  m.def("default_huge_page_size", &os::default_huge_page_size);

  m.def("detect_topology", [](bool force_simulated) {
    return topology_to_dict(detect_topology(force_simulated));
  }, py::arg("force_simulated") = false);
  m.def("use_simulated_topology",
        [] { set_process_topology(detect_topology(true)); });
  m.def("process_topology", [] { return topology_to_dict(process_topology()); });
  m.def(
      "node_of_page",
      [](const VirtualRegion& r, size_t offset) -> py::object {
        auto n = node_of_page(r.base() + offset);
        if (!n) return py::none();
        return py::int_(*n);
      },
      py::arg("region"), py::arg("offset") = 0);

  m.def("install_fault_handler", &install_fault_handler);
  m.def("uninstall_fault_handler", &uninstall_fault_handler);
  m.def("fault_handler_installed", &fault_handler_installed);

  m.def(
      "start_migration",
      [](VirtualRegion& region, std::shared_ptr<PhysicalStore> dst,
         size_t initial_area_bytes, unsigned reduction_factor, double timeout_s) {
        MigrationOptions o;
        if (initial_area_bytes) o.initial_area_bytes = initial_area_bytes;
        o.reduction_factor = reduction_factor;
        o.timeout = seconds_to_ns(timeout_s);
        return start_migration(region, std::move(dst), o);
      },
      py::arg("region"), py::arg("dst"), py::arg("initial_area_bytes") = 0,
      py::arg("reduction_factor") = 2, py::arg("timeout_s") = 10.0);
  m.def(
      "wait",
      [](const JobHandle& job) {
        MigrationReport r;
        {
          py::gil_scoped_release release;
          r = wait(job);
        }
        return report_to_dict(r);
      },
      py::arg("job"));
  m.def(
      "migrate",
      [](VirtualRegion& region, std::shared_ptr<PhysicalStore> dst,
         size_t initial_area_bytes, unsigned reduction_factor, double timeout_s) {
        MigrationOptions o;
        if (initial_area_bytes) o.initial_area_bytes = initial_area_bytes;
        o.reduction_factor = reduction_factor;
        o.timeout = seconds_to_ns(timeout_s);
        JobHandle job = start_migration(region, std::move(dst), o);
        MigrationReport r;
        {
          py::gil_scoped_release release;
          r = wait(job);
        }
        return report_to_dict(r);
      },
      py::arg("region"), py::arg("dst"), py::arg("initial_area_bytes") = 0,
      py::arg("reduction_factor") = 2, py::arg("timeout_s") = 10.0,
      "Migrate every page of the region onto the destination store and block "
      "until the job finishes.");

  m.def("env_check_json", [] { return env_check().to_json_string(); });
  m.def("env_check_text", [] { return env_check().to_text(); });
}
