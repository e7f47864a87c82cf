"""Stock FIFO, Fair and Capacity schedulers.

All three assign greedily on each heartbeat (no delay scheduling) and prefer
node-local, then rack-local, then remote tasks within the job they pick.
"""

from __future__ import annotations

from mrsim.engine import AssignMap, ClusterView, Decision
from mrsim.errors import ConfigurationError
from mrsim.schedulers.base import Scheduler, SlotRound, assign_reduces, best_local_task, first_job_with_pending


class FifoScheduler(Scheduler):
    """Jobs strictly in submission order; the head job's tasks go first even if remote."""

    name = "fifo"

    def on_heartbeat(self, node: str, view: ClusterView) -> list[Decision]:
        decisions = assign_reduces(node, view)
        rnd = SlotRound(view, node)
        while rnd.free > 0:
            found = first_job_with_pending(view.jobs(), rnd)
            if found is None:
                break
            task = best_local_task(node, found[1], view)
            rnd.take(task)
            decisions.append(AssignMap(task.id, node))
        return decisions


class _QueueScheduler(Scheduler):
    """Shared plumbing for schedulers that pick a queue/pool per free slot."""

    def queue_order(self) -> list[str]:
        return self.workload.queue_ids

    def pick_queue(self, candidates: list[str], running: dict[str, int]) -> str:
        raise NotImplementedError

    def avoid_for(self, node: str, view: ClusterView) -> frozenset[str]:
        return frozenset()

    def assign_maps(
        self, node: str, view: ClusterView, rnd: SlotRound | None = None
    ) -> tuple[list[Decision], SlotRound]:
        rnd = rnd or SlotRound(view, node)
        decisions: list[Decision] = []
        while rnd.free > 0:
            by_queue = self.jobs_by_queue(view)
            candidates = [q for q in self.queue_order() if first_job_with_pending(by_queue[q], rnd)]
            if not candidates:
                break
            queue = self.pick_queue(candidates, rnd.running_by_queue())
            _, pending = first_job_with_pending(by_queue[queue], rnd)
            task = best_local_task(node, pending, view, self.avoid_for(node, view))
            rnd.take(task)
            decisions.append(AssignMap(task.id, node))
        return decisions, rnd

    def jobs_by_queue(self, view: ClusterView) -> dict:
        out = {q: [] for q in self.queue_order()}
        for job in view.jobs():
            out[view.queue_of(job.id)].append(job)
        return out

    def on_heartbeat(self, node: str, view: ClusterView) -> list[Decision]:
        decisions = assign_reduces(node, view)
        maps, _ = self.assign_maps(node, view)
        return decisions + maps


class FairScheduler(_QueueScheduler):
    """One pool per user; task-count fairness with optional weights and minimum shares.

    Pools below their minimum share are served first (largest shortfall
    first); otherwise the pool with the smallest ``running / weight`` wins.
    Jobs inside a pool run in submission order.
    """

    name = "fair"
    param_keys = frozenset({"weights", "min_share"})

    def bind(self, topology, workload):
        super().bind(topology, workload)
        pools = workload.queue_ids
        self.weights = {p: 1.0 for p in pools}
        self.min_share = {p: 0 for p in pools}
        for key, target in (("weights", self.weights), ("min_share", self.min_share)):
            for pool, value in (self.params.get(key) or {}).items():
                if pool not in target:
                    raise ConfigurationError(f"unknown pool {pool!r}", f"scheduler_params.{key}")
                target[pool] = value
        for pool, w in self.weights.items():
            if not w > 0:
                raise ConfigurationError(f"pool {pool!r} weight must be > 0", "scheduler_params.weights")
        for pool, m in self.min_share.items():
            if m < 0:
                raise ConfigurationError(f"pool {pool!r} min_share must be >= 0", "scheduler_params.min_share")

    def pick_queue(self, candidates, running):
        order = {q: i for i, q in enumerate(self.queue_order())}
        starved = [p for p in candidates if running[p] < self.min_share[p]]
        if starved:
            return min(starved, key=lambda p: (-(self.min_share[p] - running[p]), order[p]))
        return min(candidates, key=lambda p: (running[p] / self.weights[p], order[p]))


class CapacityScheduler(_QueueScheduler):
    """One queue per user with a capacity fraction; strict FIFO inside a queue.

    Each free slot goes to the queue with the lowest ``running / capacity``
    among queues that have pending work.
    """

    name = "capacity"
    param_keys = frozenset({"capacities"})

    def bind(self, topology, workload):
        super().bind(topology, workload)
        queues = workload.queue_ids
        given = self.params.get("capacities")
        if given is None:
            self.capacities = {q: 1.0 / len(queues) for q in queues}
        else:
            missing = set(queues) - set(given)
            extra = set(given) - set(queues)
            if missing or extra:
                raise ConfigurationError(
                    f"capacities must cover exactly the queues {queues}", "scheduler_params.capacities"
                )
            self.capacities = {q: float(given[q]) for q in queues}
        if any(not c > 0 for c in self.capacities.values()):
            raise ConfigurationError("every capacity must be > 0", "scheduler_params.capacities")
        total = sum(self.capacities.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"capacities sum to {total}, expected 1", "scheduler_params.capacities")

    def pick_queue(self, candidates, running):
        order = {q: i for i, q in enumerate(self.queue_order())}
        return min(candidates, key=lambda q: (running[q] / self.capacities[q], order[q]))
