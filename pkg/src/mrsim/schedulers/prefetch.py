"""Data-locality scheduler with single-block input prefetching.

Each heartbeat first fills free slots with capacity-scheduler semantics, then
runs three steps:

1. node preselection: estimate the remaining time of every running map attempt
   from its progress rate and compare it with the time needed to copy a block;
   nodes where the copy would finish first form the candidate set, and the
   one with the smallest slack becomes the target node;
2. task preselection: look at the job the target node will serve next,
   retryable failed tasks before never-run ones; a task already local to the
   target needs no copy, otherwise its best non-local task is preselected;
3. prefetch: copy that task's block from the nearest replica to the target,
   at most one copy in flight cluster-wide.
"""

from __future__ import annotations

from dataclasses import dataclass

from mrsim.cluster import LocalityClass, classify_locality, id_key, nearest_replica
from mrsim.engine import AssignMap, ClusterView, Decision, Prefetch, TaskAttempt, attempt_progress
from mrsim.errors import ConfigurationError, NotEstimable
from mrsim.schedulers.base import SlotRound, assign_reduces, best_local_task
from mrsim.schedulers.baseline import CapacityScheduler
from mrsim.workload import Job, MapTask

DEFAULT_FAILURE_THRESHOLD = 4
DEFAULT_WARMUP_HEARTBEATS = 1
TASK_SCANS = ("next_job", "all_jobs")


def estimate_remaining(attempt: TaskAttempt, now: float, warmup: float = 0.0) -> float:
    """Remaining seconds extrapolated from the attempt's average progress rate."""
    elapsed = now - attempt.start_time
    if elapsed <= 0 or elapsed < warmup:
        raise NotEstimable(f"{attempt.id}: elapsed {elapsed:g}s below warmup {warmup:g}s")
    progress = attempt_progress(attempt, now)
    if progress <= 0:
        raise NotEstimable(f"{attempt.id}: no progress yet")
    return remaining_from_progress(progress, elapsed)


def remaining_from_progress(progress: float, elapsed: float) -> float:
    rate = progress / elapsed
    return (1.0 - progress) / rate


def estimate_transfer(block_size: float, tran_rate: float) -> float:
    if not tran_rate > 0:
        raise ConfigurationError(f"transfer rate must be > 0, got {tran_rate}", "tran_rate")
    return block_size / tran_rate


@dataclass(frozen=True)
class RemainingTimeEstimate:
    attempt_id: str
    node: str
    t_left: float
    t_perblock: float

    @property
    def diff(self) -> float:
        return self.t_left - self.t_perblock

    def as_tuple(self) -> tuple:
        return (self.node, self.attempt_id, self.t_left, self.t_perblock, self.diff)


@dataclass(frozen=True)
class AssignNow:
    task: MapTask


@dataclass(frozen=True)
class TargetMap:
    task: MapTask


class PrefetchScheduler(CapacityScheduler):
    name = "prefetch"
    param_keys = frozenset({"capacities", "failure_threshold", "warmup_heartbeats", "prefetch", "task_scan"})

    def bind(self, topology, workload):
        super().bind(topology, workload)
        self.failure_threshold = self.params.get("failure_threshold", DEFAULT_FAILURE_THRESHOLD)
        if not isinstance(self.failure_threshold, int) or self.failure_threshold < 1:
            raise ConfigurationError("must be an integer >= 1", "scheduler_params.failure_threshold")
        self.warmup_heartbeats = self.params.get("warmup_heartbeats", DEFAULT_WARMUP_HEARTBEATS)
        if not isinstance(self.warmup_heartbeats, (int, float)) or self.warmup_heartbeats < 0:
            raise ConfigurationError("must be >= 0", "scheduler_params.warmup_heartbeats")
        pf = self.params.get("prefetch") or {}
        if set(pf) - {"max_inflight"}:
            raise ConfigurationError(f"unknown keys {sorted(set(pf) - {'max_inflight'})}", "scheduler_params.prefetch")
        if pf.get("max_inflight", 1) != 1:
            raise ConfigurationError("only 1 is supported", "scheduler_params.prefetch.max_inflight")
        self.max_inflight = 1
        self.task_scan = self.params.get("task_scan", "next_job")
        if self.task_scan not in TASK_SCANS:
            raise ConfigurationError(f"must be one of {TASK_SCANS}", "scheduler_params.task_scan")
        self.stats = {"assign_now": 0, "target_maps": 0, "prefetches": 0}
        self.landed: dict[str, str] = {}  # prefetched task id -> destination, until the task launches

    def on_transfer_complete(self, transfer, view):
        if transfer.purpose == "PrefetchCopy" and transfer.task_id:
            self.landed[transfer.task_id] = transfer.dest

    def avoid_for(self, node: str, view: ClusterView) -> frozenset[str]:
        """Prefetched tasks are held back for their destination node.

        They only lose ties inside a locality class, so another node still
        takes one when nothing equally local is left.
        """
        held = {t.task_id for t in view.inflight_prefetches()}
        held.update(tid for tid, dest in self.landed.items() if dest != node)
        return frozenset(held)

    def claim_landed(self, node: str, view: ClusterView, rnd: SlotRound) -> list[Decision]:
        """Hand prefetched tasks to the node their block was copied to."""
        out: list[Decision] = []
        for job in view.jobs():
            for task in rnd.pending(job.id):
                if rnd.free <= 0:
                    return out
                if self.landed.get(task.id) == node and not self.blacklisted(view, job.id, node):
                    rnd.take(task)
                    out.append(AssignMap(task.id, node))
        return out

    # -- step 1 --------------------------------------------------------------
    def candidate_set(self, view: ClusterView, rnd: SlotRound | None = None) -> list[RemainingTimeEstimate]:
        """Candidate nodes ordered by slack ``t_left - t_perblock`` (ties by node order).

        Each node is represented by its soonest-finishing estimable attempt.
        Copy time uses the cross-rack rate because the source is not known yet.
        Nodes on which every job with pending maps has reached the failure
        threshold are left out.
        """
        topo = view.topology
        warmup = self.warmup_heartbeats * view.heartbeat_interval
        soonest: dict[str, RemainingTimeEstimate] = {}
        for a in sorted(view.running_maps(), key=lambda a: (topo.order(a.node), a.start_time, id_key(a.id))):
            try:
                t_left = estimate_remaining(a, view.now, warmup)
            except NotEstimable:
                continue
            est = RemainingTimeEstimate(a.id, a.node, t_left, estimate_transfer(a.total_work, topo.cross_rack_rate))
            cur = soonest.get(a.node)
            if cur is None or est.t_left < cur.t_left:
                soonest[a.node] = est
        pending_jobs = [j for j in view.jobs() if self._pending(view, j, rnd)]
        members = [
            e for e in soonest.values()
            if e.t_left > e.t_perblock and any(not self.blacklisted(view, j.id, e.node) for j in pending_jobs)
        ]
        return sorted(members, key=lambda e: (e.diff, topo.order(e.node)))

    def preselect_node(self, view: ClusterView, rnd: SlotRound | None = None) -> RemainingTimeEstimate | None:
        members = self.candidate_set(view, rnd)
        return members[0] if members else None

    def blacklisted(self, view: ClusterView, job_id: str, node: str) -> bool:
        return view.failure_count(job_id, node) >= self.failure_threshold

    # -- step 2 --------------------------------------------------------------
    def job_order_for(self, view: ClusterView, rnd: SlotRound | None) -> list[Job]:
        """Jobs in the order the capacity rule would serve the target's next slot."""
        running = rnd.running_by_queue() if rnd else view.running_maps_by_queue()
        order = {q: i for i, q in enumerate(self.queue_order())}
        by_queue = self.jobs_by_queue(view)
        queues = sorted(by_queue, key=lambda q: (running.get(q, 0) / self.capacities[q], order[q]))
        return [j for q in queues for j in by_queue[q]]

    def preselect_task(self, view: ClusterView, target: str, rnd: SlotRound | None = None):
        """Return ``AssignNow``, ``TargetMap`` or None.

        failedMaps are consulted whenever any job holds a retryable failed
        task; only when none exist anywhere is nonRunningMapCache used. Jobs
        are visited in service order. With ``task_scan="next_job"`` (default)
        the first job holding tasks in the cache decides, since that is the job
        the target's next free slot will serve. With ``"all_jobs"`` every job
        is searched for a task local to the target before falling back to the
        first job's best non-local task.
        """
        jobs = [j for j in self.job_order_for(view, rnd) if not self.blacklisted(view, j.id, target)]
        taken = rnd.taken if rnd else set()
        any_failed = any(t.id not in taken for j in view.jobs() for t in view.failed_maps(j.id))
        cache = view.failed_maps if any_failed else view.non_running_maps
        remembered = None
        for job in jobs:
            tasks = [t for t in cache(job.id) if t.id not in taken]
            if not tasks:
                continue
            best = best_local_task(target, tasks, view)
            if classify_locality(target, best.block, view.blockmap, view.topology) is LocalityClass.NODE_LOCAL:
                return AssignNow(best)
            if remembered is None:
                remembered = best
            if self.task_scan == "next_job":
                break
        return TargetMap(remembered) if remembered is not None else None

    # -- step 3 --------------------------------------------------------------
    def issue_prefetch(self, task: MapTask, target: RemainingTimeEstimate, view: ClusterView,
                       candidates: tuple = ()) -> Prefetch | None:
        if view.prefetch_in_flight() >= self.max_inflight:
            return None
        if target.node in view.blockmap.replicas(task.block):
            return None
        source = nearest_replica(task.block, target.node, view.blockmap, view.topology)
        return Prefetch(task.block, source, target.node, task.id, target.t_left, target.t_perblock, candidates)

    def prefetch_on_heartbeat(self, node: str, view: ClusterView, rnd: SlotRound) -> list[Decision]:
        if view.prefetch_in_flight() >= self.max_inflight:
            return []
        members = self.candidate_set(view, rnd)
        if not members:
            return []
        target = members[0]
        choice = self.preselect_task(view, target.node, rnd)
        if isinstance(choice, AssignNow):
            self.stats["assign_now"] += 1
            # Tasks are only handed to the tracker that is heartbeating.
            if target.node == node and rnd.free > 0:
                rnd.take(choice.task)
                return [AssignMap(choice.task.id, node)]
            return []
        if isinstance(choice, TargetMap):
            self.stats["target_maps"] += 1
            pf = self.issue_prefetch(choice.task, target, view, tuple(m.as_tuple() for m in members))
            if pf is not None:
                self.stats["prefetches"] += 1
                return [pf]
        return []

    def on_heartbeat(self, node: str, view: ClusterView) -> list[Decision]:
        for tid in [t for t in self.landed if self._launched(view, t)]:
            del self.landed[tid]
        decisions = assign_reduces(node, view)
        rnd = SlotRound(view, node)
        claimed = self.claim_landed(node, view, rnd)
        maps, rnd = self.assign_maps(node, view, rnd)
        return decisions + claimed + maps + self.prefetch_on_heartbeat(node, view, rnd)

    @staticmethod
    def _launched(view: ClusterView, task_id: str) -> bool:
        return view.task_state(task_id).value not in ("NotRunning", "FailedPendingRetry")

    @staticmethod
    def _pending(view: ClusterView, job: Job, rnd: SlotRound | None) -> bool:
        return bool(rnd.pending(job.id) if rnd else view.pending_maps(job.id))
