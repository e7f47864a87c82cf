"""Discrete-event MapReduce cluster simulator with FIFO, Fair, Capacity and
locality-prefetch schedulers."""

from mrsim.cluster import (
    BlockMap,
    ClusterTopology,
    LocalityClass,
    Node,
    classify_locality,
    nearest_replica,
    place_blocks,
    topology_distance,
)
from mrsim.engine import SimConfig, Simulator, attempt_progress
from mrsim.metrics import SimReport, build_report, compare_report
from mrsim.scenario import Scenario, load_scenario, run_scenario
from mrsim.workload import Job, WorkloadSpec, split_job, synth_workload, table1_workload

__version__ = "0.1.0"

__all__ = [
    "BlockMap",
    "ClusterTopology",
    "Job",
    "LocalityClass",
    "Node",
    "Scenario",
    "SimConfig",
    "SimReport",
    "Simulator",
    "WorkloadSpec",
    "attempt_progress",
    "build_report",
    "classify_locality",
    "compare_report",
    "load_scenario",
    "nearest_replica",
    "place_blocks",
    "run_scenario",
    "split_job",
    "synth_workload",
    "table1_workload",
    "topology_distance",
]
