"""Scenario files: schema, validation and run orchestration.

A scenario is a YAML (or JSON) mapping::

    seed: 20160101                # int >= 0
    scheduler: prefetch           # fifo | fair | capacity | prefetch
    scheduler_params: {}          # per-scheduler, see README
    replication: 1
    heartbeat_interval: 3.0       # s
    reduce_factor: 0.1
    failure_prob: 0.0
    topology:
      intra_rack_rate: 40.0       # MB/s
      cross_rack_rate: 10.0       # MB/s
      racks: {rack0: [n1, n2], rack1: [n3]}
      node_defaults: {map_slots: 2, reduce_slots: 1, proc_rate: 8.0}
      nodes: {n3: {proc_rate: 6.0}}   # optional per-node overrides
    workload: table1              # or {jobs: [...], queues: {...}}
                                  # or {synthetic: {n_jobs, size_range, map_range, users, seed}}

Unknown keys are rejected. :meth:`Scenario.to_dict` returns the fully
resolved form (defaults filled in, workload expanded), which loads back to an
identical scenario.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from mrsim.cluster import ClusterTopology, Node
from mrsim.engine import DEFAULT_HEARTBEAT, DEFAULT_REDUCE_FACTOR, SimConfig, Simulator
from mrsim.errors import ConfigurationError
from mrsim.metrics import SimReport, build_report
from mrsim.schedulers import SCHEDULERS, make_scheduler
from mrsim.workload import Job, WorkloadSpec, split_sizes, synth_workload, table1_workload

TOP_KEYS = {
    "seed", "scheduler", "scheduler_params", "replication", "heartbeat_interval",
    "reduce_factor", "failure_prob", "topology", "workload",
}
TOPOLOGY_KEYS = {"intra_rack_rate", "cross_rack_rate", "racks", "node_defaults", "nodes"}
NODE_KEYS = {"map_slots", "reduce_slots", "proc_rate"}
JOB_KEYS = {"id", "user", "submit_time", "input_size", "map_count", "reduce_count"}
SYNTH_KEYS = {"n_jobs", "size_range", "map_range", "users", "seed", "mean_interarrival", "reduce_count"}
NODE_DEFAULTS = {"map_slots": 2, "reduce_slots": 1, "proc_rate": 8.0}

SWEEPABLE = {
    "replication": int,
    "intra_rack_rate": float,
    "cross_rack_rate": float,
    "heartbeat_interval": float,
    "failure_prob": float,
}

BUILTIN_DIR = Path(__file__).parent / "scenarios"


def _reject_unknown(given: dict, allowed: set, where: str) -> None:
    if not isinstance(given, dict):
        raise ConfigurationError("must be a mapping", where or "scenario")
    unknown = sorted(set(given) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigurationError(f"unknown key(s) {unknown}", f"{prefix}{unknown[0]}")


def _number(value: Any, where: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", where)
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"expected an integer, got {value!r}", where)
        return int(value)
    return float(value)


@dataclass
class Scenario:
    topology: ClusterTopology
    workload: WorkloadSpec
    workload_name: str = "inline"
    scheduler: str = "capacity"
    scheduler_params: dict = field(default_factory=dict)
    seed: int = 0
    replication: int = 1
    heartbeat_interval: float = DEFAULT_HEARTBEAT
    reduce_factor: float = DEFAULT_REDUCE_FACTOR
    failure_prob: float = 0.0

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        raw = copy.deepcopy(raw)
        _reject_unknown(raw, TOP_KEYS, "")
        for key in ("topology", "workload"):
            if key not in raw:
                raise ConfigurationError("is required", key)
        scheduler = raw.get("scheduler", "capacity")
        if scheduler not in SCHEDULERS:
            raise ConfigurationError(f"unknown scheduler {scheduler!r}; valid: {', '.join(SCHEDULERS)}", "scheduler")
        params = raw.get("scheduler_params") or {}
        if not isinstance(params, dict):
            raise ConfigurationError("must be a mapping", "scheduler_params")
        seed = _number(raw.get("seed", 0), "seed", int)
        if seed < 0:
            raise ConfigurationError("must be >= 0", "seed")
        topo = parse_topology(raw["topology"])
        workload, name = parse_workload(raw["workload"], seed)
        sc = cls(
            topology=topo,
            workload=workload,
            workload_name=name,
            scheduler=scheduler,
            scheduler_params=params,
            seed=seed,
            replication=_number(raw.get("replication", 1), "replication", int),
            heartbeat_interval=_number(raw.get("heartbeat_interval", DEFAULT_HEARTBEAT), "heartbeat_interval"),
            reduce_factor=_number(raw.get("reduce_factor", DEFAULT_REDUCE_FACTOR), "reduce_factor"),
            failure_prob=_number(raw.get("failure_prob", 0.0), "failure_prob"),
        )
        sc.validate()
        return sc

    def config(self) -> SimConfig:
        return SimConfig(self.seed, self.replication, self.heartbeat_interval, self.reduce_factor, self.failure_prob)

    def validate(self) -> None:
        """Check every precondition before any simulation starts."""
        self.config().validate(self.topology)
        make_scheduler(self.scheduler, self.scheduler_params).bind(self.topology, self.workload)
        for job in self.workload.jobs:
            split_sizes(job.input_size, job.map_count)

    def to_dict(self) -> dict:
        topo = self.topology
        racks = {r: topo.nodes_in_rack(r) for r in topo.racks}
        return {
            "seed": self.seed,
            "scheduler": self.scheduler,
            "scheduler_params": copy.deepcopy(self.scheduler_params),
            "replication": self.replication,
            "heartbeat_interval": self.heartbeat_interval,
            "reduce_factor": self.reduce_factor,
            "failure_prob": self.failure_prob,
            "topology": {
                "intra_rack_rate": topo.intra_rack_rate,
                "cross_rack_rate": topo.cross_rack_rate,
                "racks": racks,
                "nodes": {
                    n.id: {"map_slots": n.map_slots, "reduce_slots": n.reduce_slots, "proc_rate": n.proc_rate}
                    for n in topo.nodes
                },
            },
            "workload": {"name": self.workload_name, **self.workload.to_dict()},
        }

    def with_overrides(self, **changes) -> "Scenario":
        """Copy with top-level or topology-rate fields replaced, revalidated."""
        raw = self.to_dict()
        for key, value in changes.items():
            if key in ("intra_rack_rate", "cross_rack_rate"):
                raw["topology"][key] = value
            elif key in TOP_KEYS:
                raw[key] = value
            else:
                raise ConfigurationError("not an overridable field", key)
        return Scenario.from_dict(raw)

    def simulator(self) -> Simulator:
        scheduler = make_scheduler(self.scheduler, self.scheduler_params)
        # Runs mutate Job.input_blocks, so each simulator gets fresh copies.
        workload = WorkloadSpec([copy.copy(j) for j in self.workload.jobs], dict(self.workload.queues))
        return Simulator(self.topology, workload, scheduler, self.config(), self.to_dict())


def parse_topology(raw: dict) -> ClusterTopology:
    _reject_unknown(raw, TOPOLOGY_KEYS, "topology")
    for key in ("intra_rack_rate", "cross_rack_rate", "racks"):
        if key not in raw:
            raise ConfigurationError("is required", f"topology.{key}")
    racks = raw["racks"]
    if not isinstance(racks, dict) or not racks:
        raise ConfigurationError("must be a non-empty mapping of rack -> node list", "topology.racks")
    defaults = dict(NODE_DEFAULTS)
    given_defaults = raw.get("node_defaults") or {}
    _reject_unknown(given_defaults, NODE_KEYS, "topology.node_defaults")
    defaults.update(given_defaults)
    overrides = raw.get("nodes") or {}
    if not isinstance(overrides, dict):
        raise ConfigurationError("must be a mapping of node -> fields", "topology.nodes")
    declared = [n for members in racks.values() for n in (members or [])]
    for nid, fields in overrides.items():
        if nid not in declared:
            raise ConfigurationError(f"node {nid!r} is not in any rack", f"topology.nodes.{nid}")
        _reject_unknown(fields, NODE_KEYS, f"topology.nodes.{nid}")
    nodes = []
    for rack, members in racks.items():
        if not members:
            raise ConfigurationError(f"rack {rack!r} has no nodes", "topology.racks")
        for nid in members:
            f = {**defaults, **overrides.get(nid, {})}
            where = f"topology.nodes.{nid}"
            nodes.append(Node(
                str(nid), str(rack),
                map_slots=_number(f["map_slots"], f"{where}.map_slots", int),
                reduce_slots=_number(f["reduce_slots"], f"{where}.reduce_slots", int),
                proc_rate=_number(f["proc_rate"], f"{where}.proc_rate"),
            ))
    return ClusterTopology(
        tuple(nodes),
        _number(raw["intra_rack_rate"], "topology.intra_rack_rate"),
        _number(raw["cross_rack_rate"], "topology.cross_rack_rate"),
        racks=tuple(str(r) for r in racks),
    )


def parse_workload(raw, seed: int) -> tuple[WorkloadSpec, str]:
    if raw == "table1":
        return table1_workload(), "table1"
    if isinstance(raw, str):
        raise ConfigurationError(f"unknown built-in workload {raw!r}; valid: table1", "workload")
    if not isinstance(raw, dict):
        raise ConfigurationError("must be 'table1' or a mapping", "workload")
    if "synthetic" in raw:
        _reject_unknown(raw, {"synthetic", "name"}, "workload")
        syn = raw["synthetic"]
        _reject_unknown(syn, SYNTH_KEYS, "workload.synthetic")
        for key in ("n_jobs", "size_range", "map_range", "users"):
            if key not in syn:
                raise ConfigurationError("is required", f"workload.synthetic.{key}")
        spec = synth_workload(
            _number(syn["n_jobs"], "workload.synthetic.n_jobs", int),
            tuple(syn["size_range"]),
            tuple(syn["map_range"]),
            list(syn["users"]),
            _number(syn.get("seed", seed), "workload.synthetic.seed", int),
            _number(syn.get("mean_interarrival", 0.0), "workload.synthetic.mean_interarrival"),
            _number(syn.get("reduce_count", 1), "workload.synthetic.reduce_count", int),
        )
        return spec, raw.get("name", "synthetic")
    _reject_unknown(raw, {"jobs", "queues", "name"}, "workload")
    if raw.get("name") == "table1" and "jobs" not in raw:
        return table1_workload(), "table1"
    jobs_raw = raw.get("jobs")
    if not isinstance(jobs_raw, list):
        raise ConfigurationError("must be a list of jobs", "workload.jobs")
    jobs = []
    for i, j in enumerate(jobs_raw):
        where = f"workload.jobs[{i}]"
        _reject_unknown(j, JOB_KEYS, where)
        for key in ("user", "input_size", "map_count"):
            if key not in j:
                raise ConfigurationError("is required", f"{where}.{key}")
        jobs.append(Job(
            str(j.get("id", f"job{i}")),
            str(j["user"]),
            _number(j.get("submit_time", 0.0), f"{where}.submit_time"),
            _number(j["input_size"], f"{where}.input_size"),
            _number(j["map_count"], f"{where}.map_count", int),
            _number(j.get("reduce_count", 1), f"{where}.reduce_count", int),
        ))
    queues = raw.get("queues")
    if queues is None:
        queues = {j.user: j.user for j in jobs}
    if not isinstance(queues, dict):
        raise ConfigurationError("must be a mapping of user -> queue", "workload.queues")
    return WorkloadSpec(jobs, {str(k): str(v) for k, v in queues.items()}), str(raw.get("name", "inline"))


def resolve_path(name_or_path: str) -> Path:
    """A path, or the name of a scenario bundled with the package (e.g. ``table1``)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    builtin = BUILTIN_DIR / f"{name_or_path}.yaml"
    if builtin.exists():
        return builtin
    raise ConfigurationError(f"no such file or built-in scenario: {name_or_path}", "scenario")


def load_scenario(name_or_path: str, **overrides) -> Scenario:
    path = resolve_path(name_or_path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}", "scenario") from None
    if raw is None:
        raise ConfigurationError(f"{path} is empty", "scenario")
    _reject_unknown(raw, TOP_KEYS, "")
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return Scenario.from_dict(raw)


def run_scenario(scenario: Scenario) -> tuple[SimReport, list[dict]]:
    events = scenario.simulator().run()
    return build_report(events), events
