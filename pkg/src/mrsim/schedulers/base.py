"""Scheduler callback contract and shared assignment helpers."""

from __future__ import annotations

from collections import Counter

from mrsim.cluster import ClusterTopology, classify_locality
from mrsim.engine import AssignReduce, ClusterView, Decision, TaskAttempt, Transfer
from mrsim.errors import ConfigurationError
from mrsim.workload import Job, MapTask, WorkloadSpec


class Scheduler:
    """Base class for pluggable schedulers.

    Callbacks run on the single-threaded event loop and receive a
    :class:`ClusterView`; they must not mutate engine state. Decisions are
    returned from :meth:`on_heartbeat` and applied by the engine.
    """

    name = "base"
    param_keys: frozenset[str] = frozenset()

    def __init__(self, params: dict | None = None):
        params = dict(params or {})
        unknown = set(params) - self.param_keys
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", "scheduler_params")
        self.params = params
        self.topology: ClusterTopology | None = None
        self.workload: WorkloadSpec | None = None

    def bind(self, topology: ClusterTopology, workload: WorkloadSpec) -> None:
        self.topology = topology
        self.workload = workload

    def on_job_submit(self, job: Job, view: ClusterView) -> None:
        pass

    def on_attempt_complete(self, attempt: TaskAttempt, view: ClusterView) -> None:
        pass

    def on_attempt_fail(self, attempt: TaskAttempt, view: ClusterView) -> None:
        pass

    def on_transfer_complete(self, transfer: Transfer, view: ClusterView) -> None:
        pass

    def on_heartbeat(self, node: str, view: ClusterView) -> list[Decision]:
        raise NotImplementedError


class SlotRound:
    """Tentative bookkeeping for the slots filled during one heartbeat."""

    def __init__(self, view: ClusterView, node: str):
        self.view = view
        self.node = node
        self.free = view.free_map_slots(node)
        self.taken: set[str] = set()
        self.extra: Counter[str] = Counter()

    def pending(self, job_id: str) -> list[MapTask]:
        return [t for t in self.view.pending_maps(job_id) if t.id not in self.taken]

    def running_by_queue(self) -> dict[str, int]:
        counts = self.view.running_maps_by_queue()
        for q, n in self.extra.items():
            counts[q] = counts.get(q, 0) + n
        return counts

    def take(self, task: MapTask) -> None:
        self.taken.add(task.id)
        self.extra[self.view.queue_of(task.job_id)] += 1
        self.free -= 1


def best_local_task(node: str, tasks: list[MapTask], view: ClusterView, avoid=frozenset()) -> MapTask | None:
    """Node-local before rack-local before remote; ties by task id.

    Tasks in ``avoid`` lose ties within their locality class.
    """
    if not tasks:
        return None
    bm, topo = view.blockmap, view.topology
    return min(tasks, key=lambda t: (classify_locality(node, t.block, bm, topo).rank, t.id in avoid, t.order))


def first_job_with_pending(jobs: list[Job], rnd: SlotRound) -> tuple[Job, list[MapTask]] | None:
    for job in jobs:
        pending = rnd.pending(job.id)
        if pending:
            return job, pending
    return None


def assign_reduces(node: str, view: ClusterView) -> list[Decision]:
    """Fill free reduce slots with ready reduces in job submission order."""
    free = view.free_reduce_slots(node)
    out: list[Decision] = []
    for job in view.jobs():
        for r in view.ready_reduces(job.id):
            if free <= 0:
                return out
            out.append(AssignReduce(r.id, node))
            free -= 1
    return out
