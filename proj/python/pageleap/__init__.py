"""User-space page migration over main-memory files.

Physical memory is held in per-node files (shm or hugetlbfs); page
"migration" rewires a virtual range onto extents of a destination file
while writers keep running, instead of copying through the kernel.
"""

from ._pageleap import (
    Backing,
    Extent,
    MigrationJob,
    PhysicalStore,
    PoolExhausted,
    VirtualRegion,
    default_huge_page_size,
    detect_topology,
    env_check_json,
    env_check_text,
    fault_handler_installed,
    install_fault_handler,
    migrate,
    node_of_page,
    process_topology,
    small_page_size,
    start_migration,
    uninstall_fault_handler,
    use_simulated_topology,
    wait,
)

__all__ = [
    "Backing",
    "Extent",
    "MigrationJob",
    "PhysicalStore",
    "PoolExhausted",
    "VirtualRegion",
    "default_huge_page_size",
    "detect_topology",
    "env_check_json",
    "env_check_text",
    "fault_handler_installed",
    "install_fault_handler",
    "migrate",
    "node_of_page",
    "process_topology",
    "small_page_size",
    "start_migration",
    "uninstall_fault_handler",
    "use_simulated_topology",
    "wait",
]

__version__ = "0.1.0"
