"""Deterministic discrete-event core.

Events are totally ordered by ``(time, seq)``. Every stochastic draw comes
from a named ``random.Random`` stream (see :func:`named_stream`), so a fixed
scenario and seed always yield the same event log.

Event log format: one JSON object per line, keys sorted, with at least
``seq`` (record index), ``t`` (virtual seconds) and ``kind``. Kinds:

``Bootstrap``          resolved scenario and the initial block placement
``JobSubmit``          job, user, queue, map tasks with their blocks, reduce ids
``Heartbeat``          node, free map/reduce slots before scheduling
``AttemptLaunch``      attempt, task, job, phase (map/reduce), node, locality,
                       replicas at launch, source, read_time, duration, size
``AttemptComplete``    attempt, task, job, phase, node
``AttemptFail``        attempt, task, job, node
``TransferStart``      transfer, block, source, dest, size, rate, purpose,
                       task, t_left, t_perblock, candidates
``TransferComplete``   transfer, block, dest
``JobComplete``        job
``DecisionRejected``   decision, node, reason
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Iterable

from mrsim.cluster import (
    BlockMap,
    ClusterTopology,
    LocalityClass,
    classify_locality,
    nearest_replica,
    place_blocks,
)
from mrsim.errors import ConfigurationError, DeadlockError, EngineOrderingError
from mrsim.workload import Job, MapTask, ReduceTask, TaskState, WorkloadSpec, reduce_tasks, split_job

log = logging.getLogger(__name__)

DEFAULT_HEARTBEAT = 3.0
DEFAULT_REDUCE_FACTOR = 0.1


def named_stream(seed: int, name: str) -> random.Random:
    """Independent generator for one purpose (``placement``, ``failures``, ``workload``)."""
    return random.Random(f"{seed}/{name}")


@dataclass
class Transfer:
    id: str
    block: str
    source: str
    dest: str
    size: float
    rate: float
    start_time: float
    purpose: str  # "PrefetchCopy" | "RemoteRead"
    task_id: str | None = None

    @property
    def end_time(self) -> float:
        return self.start_time + self.size / self.rate


@dataclass
class TaskAttempt:
    id: str
    task_id: str
    job_id: str
    kind: str  # "map" | "reduce"
    node: str
    start_time: float
    total_work: float  # MB
    proc_rate: float  # MB/s
    locality: LocalityClass | None = None
    block: str | None = None
    read_time: float = 0.0
    source: str | None = None
    status: str = "running"
    order: tuple[int, int] = (0, 0)

    @property
    def duration(self) -> float:
        return self.read_time + self.total_work / self.proc_rate

    def finished_work(self, now: float) -> float:
        return attempt_progress(self, now) * self.total_work


def attempt_progress(attempt: TaskAttempt, now: float) -> float:
    """Fraction of the input processed at ``now``.

    A non-local attempt first reads its whole block over the network; progress
    stays at 0 through the read and then advances at the node's processing rate.
    """
    if now < attempt.start_time:
        raise EngineOrderingError(f"{attempt.id}: observed at {now} before start {attempt.start_time}")
    processing = now - attempt.start_time - attempt.read_time
    if processing <= 0:
        return 0.0
    return min(1.0, processing * attempt.proc_rate / attempt.total_work)


def inject_failure(attempt: TaskAttempt, failure_prob: float, rng: random.Random) -> float | None:
    """Failure time for a freshly launched attempt, or None if it will succeed.

    With ``failure_prob > 0`` exactly two draws are consumed per call:
    ``u, f = rng.random(), rng.random()``; the attempt fails when ``u < p`` at
    ``start + (0.05 + 0.9 * f) * duration``. Nothing is drawn when p is 0.
    """
    if failure_prob <= 0:
        return None
    u = rng.random()
    f = rng.random()
    if u < failure_prob:
        return attempt.start_time + (0.05 + 0.9 * f) * attempt.duration
    return None


@dataclass(frozen=True)
class AssignMap:
    task_id: str
    node: str


@dataclass(frozen=True)
class AssignReduce:
    task_id: str
    node: str


@dataclass(frozen=True)
class Prefetch:
    block: str
    source: str
    dest: str
    task_id: str
    t_left: float = 0.0
    t_perblock: float = 0.0
    candidates: tuple = ()


Decision = AssignMap | AssignReduce | Prefetch


@dataclass
class SimConfig:
    seed: int = 0
    replication: int = 1
    heartbeat_interval: float = DEFAULT_HEARTBEAT
    reduce_factor: float = DEFAULT_REDUCE_FACTOR
    failure_prob: float = 0.0

    def validate(self, topo: ClusterTopology) -> None:
        if not 1 <= self.replication <= len(topo.nodes):
            raise ConfigurationError(
                f"must be between 1 and the node count ({len(topo.nodes)}), got {self.replication}", "replication"
            )
        if not self.heartbeat_interval > 0:
            raise ConfigurationError("must be > 0", "heartbeat_interval")
        if self.reduce_factor < 0:
            raise ConfigurationError("must be >= 0", "reduce_factor")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ConfigurationError("must be within [0, 1]", "failure_prob")


@dataclass
class _JobState:
    job: Job
    queue: str
    maps: list[MapTask]
    reduces: list[ReduceTask]
    failed: list[MapTask] = field(default_factory=list)  # failedMaps, FIFO by failure time
    maps_left: int = 0
    reduces_left: int = 0
    done: bool = False


class ClusterView:
    """Read-only window onto engine state handed to scheduler callbacks."""

    def __init__(self, sim: "Simulator"):
        self._sim = sim

    @property
    def now(self) -> float:
        return self._sim.now

    @property
    def topology(self) -> ClusterTopology:
        return self._sim.topo

    @property
    def blockmap(self) -> BlockMap:
        return self._sim.blockmap

    @property
    def heartbeat_interval(self) -> float:
        return self._sim.config.heartbeat_interval

    def jobs(self) -> list[Job]:
        """Submitted, unfinished jobs in submission order."""
        return [s.job for s in self._sim.job_states.values() if not s.done]

    def queue_of(self, job_id: str) -> str:
        return self._sim.job_states[job_id].queue

    def failed_maps(self, job_id: str) -> list[MapTask]:
        return list(self._sim.job_states[job_id].failed)

    def non_running_maps(self, job_id: str) -> list[MapTask]:
        return [t for t in self._sim.job_states[job_id].maps if t.state is TaskState.NOT_RUNNING]

    def pending_maps(self, job_id: str) -> list[MapTask]:
        """Failed-pending-retry tasks followed by never-run tasks."""
        return self.failed_maps(job_id) + self.non_running_maps(job_id)

    def task_state(self, task_id: str) -> TaskState:
        return self._sim._tasks[task_id].state

    def ready_reduces(self, job_id: str) -> list[ReduceTask]:
        s = self._sim.job_states[job_id]
        if s.maps_left:
            return []
        return [r for r in s.reduces if r.state is TaskState.NOT_RUNNING]

    def free_map_slots(self, node: str) -> int:
        return self._sim.topo.node(node).map_slots - self._sim.running_maps_on[node]

    def free_reduce_slots(self, node: str) -> int:
        return self._sim.topo.node(node).reduce_slots - self._sim.running_reduces_on[node]

    def running_maps(self, node: str | None = None) -> list[TaskAttempt]:
        return [
            a for a in self._sim.running.values() if a.kind == "map" and (node is None or a.node == node)
        ]

    def running_maps_by_queue(self) -> dict[str, int]:
        counts = {q: 0 for q in self._sim.workload.queue_ids}
        for a in self._sim.running.values():
            if a.kind == "map":
                counts[self._sim.job_states[a.job_id].queue] += 1
        return counts

    def progress(self, attempt: TaskAttempt) -> float:
        return attempt_progress(attempt, self._sim.now)

    def prefetch_in_flight(self) -> int:
        return len(self.inflight_prefetches())

    def inflight_prefetches(self) -> list[Transfer]:
        return [t for t in self._sim.transfers.values() if t.purpose == "PrefetchCopy"]

    def failure_count(self, job_id: str, node: str) -> int:
        return self._sim.failures.get((job_id, node), 0)


class Simulator:
    """Runs one workload under one scheduler on one cluster."""

    def __init__(
        self,
        topo: ClusterTopology,
        workload: WorkloadSpec,
        scheduler,
        config: SimConfig | None = None,
        scenario_record: dict | None = None,
    ):
        self.topo = topo
        self.workload = workload
        self.scheduler = scheduler
        self.config = config or SimConfig()
        self.config.validate(topo)
        self.scenario_record = scenario_record or self._default_record()
        self.now = 0.0
        self.events: list[dict] = []
        self._queue: list = []
        self._seq = 0
        self._attempt_seq = 0
        self._transfer_seq = 0
        self._failure_rng = named_stream(self.config.seed, "failures")
        self.running: dict[str, TaskAttempt] = {}
        self.running_maps_on = {n: 0 for n in topo.node_ids}
        self.running_reduces_on = {n: 0 for n in topo.node_ids}
        self.transfers: dict[str, Transfer] = {}
        self.failures: dict[tuple[str, str], int] = {}
        self.job_states: dict[str, _JobState] = {}
        self._tasks: dict[str, MapTask | ReduceTask] = {}
        self._launches: dict[str, int] = {}
        self._pending_submits = 0
        self._idle_heartbeats = 0
        self._started = False
        self.view = ClusterView(self)

        self._splits: dict[str, tuple[list[MapTask], list[ReduceTask]]] = {}
        all_blocks = []
        for job in workload.jobs:
            maps, blocks = split_job(job)
            self._splits[job.id] = (maps, reduce_tasks(job))
            all_blocks.extend(blocks)
        self.blockmap = place_blocks(all_blocks, self.config.replication, topo, self.config.seed)
        self.scheduler.bind(topo, workload)

    def _default_record(self) -> dict:
        """Scenario-shaped record used when the caller did not supply one."""
        topo, cfg = self.topo, self.config
        return {
            "scheduler": getattr(self.scheduler, "name", type(self.scheduler).__name__),
            "scheduler_params": dict(getattr(self.scheduler, "params", {})),
            "seed": cfg.seed,
            "replication": cfg.replication,
            "heartbeat_interval": cfg.heartbeat_interval,
            "reduce_factor": cfg.reduce_factor,
            "failure_prob": cfg.failure_prob,
            "topology": {
                "intra_rack_rate": topo.intra_rack_rate,
                "cross_rack_rate": topo.cross_rack_rate,
                "racks": {r: topo.nodes_in_rack(r) for r in topo.racks},
                "nodes": {
                    n.id: {"map_slots": n.map_slots, "reduce_slots": n.reduce_slots, "proc_rate": n.proc_rate}
                    for n in topo.nodes
                },
            },
            "workload": {"name": "inline", **self.workload.to_dict()},
        }

    # -- queue plumbing --------------------------------------------------
    def _push(self, time: float, kind: str, payload) -> None:
        heapq.heappush(self._queue, (time, self._seq, kind, payload))
        self._seq += 1

    def _record(self, kind: str, **fields) -> dict:
        rec = {"seq": len(self.events), "t": self.now, "kind": kind, **fields}
        self.events.append(rec)
        return rec

    # -- main loop -------------------------------------------------------
    def run(self) -> list[dict]:
        self.start()
        while self.step():
            pass
        unfinished = [s.job.id for s in self.job_states.values() if not s.done]
        if unfinished or self._pending_submits:
            raise DeadlockError(self._stuck_tasks())
        return self.events

    def start(self) -> None:
        """Log the bootstrap record and queue submissions and first heartbeats."""
        if self._started:
            raise EngineOrderingError("simulation already started")
        self._started = True
        self._record("Bootstrap", scenario=self.scenario_record, blocks={
            b: {"size": self.blockmap.size(b), "replicas": reps} for b, reps in self.blockmap.snapshot().items()
        })
        for job in self.workload.jobs:
            self._push(job.submit_time, "JobSubmit", job.id)
            self._pending_submits += 1
        if self.workload.jobs:
            n = len(self.topo.nodes)
            interval = self.config.heartbeat_interval
            for i, node in enumerate(self.topo.node_ids):
                self._push(interval * i / n, "Heartbeat", node)

    def step(self) -> bool:
        """Process the next queued event; False once the queue is empty."""
        if not self._queue:
            return False
        time, _, kind, payload = heapq.heappop(self._queue)
        if time < self.now:
            raise EngineOrderingError(f"event at {time} after clock reached {self.now}")
        self.now = time
        getattr(self, f"_on_{kind}")(payload)
        return True

    def peek(self) -> tuple[float, str] | None:
        """Time and kind of the next queued event."""
        return (self._queue[0][0], self._queue[0][2]) if self._queue else None

    def all_done(self) -> bool:
        return not self._pending_submits and all(s.done for s in self.job_states.values())

    def _stuck_tasks(self) -> list[str]:
        return [t.id for t in self._tasks.values() if t.state is not TaskState.SUCCEEDED]

    # -- handlers --------------------------------------------------------
    def _on_JobSubmit(self, job_id: str) -> None:
        job = next(j for j in self.workload.jobs if j.id == job_id)
        maps, reduces = self._splits[job_id]
        state = _JobState(job, self.workload.queues[job.user], maps, reduces, maps_left=len(maps),
                          reduces_left=len(reduces))
        self.job_states[job_id] = state
        for t in (*maps, *reduces):
            self._tasks[t.id] = t
        self._pending_submits -= 1
        self._record(
            "JobSubmit",
            job=job_id,
            user=job.user,
            queue=state.queue,
            input_size=job.input_size,
            maps=[{"task": t.id, "block": t.block} for t in maps],
            reduces=[r.id for r in reduces],
        )
        self.scheduler.on_job_submit(job, self.view)

    def _on_Heartbeat(self, node: str) -> None:
        if self.all_done():
            return
        self._record(
            "Heartbeat", node=node, free_map=self.view.free_map_slots(node),
            free_reduce=self.view.free_reduce_slots(node),
        )
        applied = self.heartbeat_tick(node)
        self._push(self.now + self.config.heartbeat_interval, "Heartbeat", node)
        busy = self.running or self.transfers or self._pending_submits
        self._idle_heartbeats = 0 if (applied or busy) else self._idle_heartbeats + 1
        if self._idle_heartbeats >= len(self.topo.nodes):
            raise DeadlockError(self._stuck_tasks())

    def heartbeat_tick(self, node: str) -> list[Decision]:
        """Ask the scheduler for decisions and apply the valid ones.

        Assignments are applied before the (at most one) prefetch.
        """
        decisions = list(self.scheduler.on_heartbeat(node, self.view) or [])
        assigns = [d for d in decisions if not isinstance(d, Prefetch)]
        prefetches = [d for d in decisions if isinstance(d, Prefetch)]
        applied = []
        for d in assigns:
            if self._apply_assign(node, d):
                applied.append(d)
        for i, d in enumerate(prefetches):
            if i > 0:
                self._reject(node, d, "more than one prefetch in a heartbeat")
            elif self._apply_prefetch(node, d):
                applied.append(d)
        return applied

    def _reject(self, node: str, decision: Decision, reason: str) -> None:
        log.debug("rejected %s on %s: %s", decision, node, reason)
        self._record("DecisionRejected", node=node, decision=_decision_repr(decision), reason=reason)

    def _apply_assign(self, node: str, d: Decision) -> bool:
        if d.node != node:
            self._reject(node, d, "assignment to a node other than the heartbeating one")
            return False
        task = self._tasks.get(d.task_id)
        if isinstance(d, AssignMap):
            if not isinstance(task, MapTask) or task.state not in (TaskState.NOT_RUNNING, TaskState.FAILED_PENDING):
                self._reject(node, d, "task is not a pending map task")
                return False
            if self.view.free_map_slots(node) <= 0:
                self._reject(node, d, "no free map slot")
                return False
            self._launch_map(task, node)
            return True
        if isinstance(d, AssignReduce):
            if not isinstance(task, ReduceTask) or task.state is not TaskState.NOT_RUNNING:
                self._reject(node, d, "task is not a pending reduce task")
                return False
            if self.job_states[task.job_id].maps_left:
                self._reject(node, d, "job still has unfinished maps")
                return False
            if self.view.free_reduce_slots(node) <= 0:
                self._reject(node, d, "no free reduce slot")
                return False
            self._launch_reduce(task, node)
            return True
        self._reject(node, d, "unknown decision")
        return False

    def _next_attempt_id(self) -> str:
        self._attempt_seq += 1
        return f"a{self._attempt_seq}"

    def _launch_map(self, task: MapTask, node: str) -> None:
        state = self.job_states[task.job_id]
        if task.state is TaskState.FAILED_PENDING:
            state.failed.remove(task)
        task.state = TaskState.RUNNING
        size = self.blockmap.size(task.block)
        replicas = sorted(self.blockmap.replicas(task.block), key=self.topo.order)
        locality = classify_locality(node, task.block, self.blockmap, self.topo)
        source, read_time = None, 0.0
        if locality is not LocalityClass.NODE_LOCAL:
            source = nearest_replica(task.block, node, self.blockmap, self.topo)
            read_time = size / self.topo.link_rate(source, node)
        attempt = TaskAttempt(
            self._next_attempt_id(), task.id, task.job_id, "map", node, self.now, size,
            self.topo.node(node).proc_rate, locality, task.block, read_time, source, order=task.order,
        )
        first = self._launches.get(task.id, 0) == 0
        self._launches[task.id] = self._launches.get(task.id, 0) + 1
        self.running[attempt.id] = attempt
        self.running_maps_on[node] += 1
        self._record(
            "AttemptLaunch", attempt=attempt.id, task=task.id, job=task.job_id, phase="map", node=node,
            locality=locality.value, replicas=replicas, block=task.block, size=size, source=source,
            read_time=read_time, proc_rate=attempt.proc_rate, duration=attempt.duration, first=first,
        )
        fail_at = self._draw_failure(attempt) if first else None
        if fail_at is not None:
            self._push(fail_at, "AttemptFail", attempt.id)
        else:
            self._push(self.now + attempt.duration, "AttemptComplete", attempt.id)

    def _draw_failure(self, attempt: TaskAttempt) -> float | None:
        return inject_failure(attempt, self.config.failure_prob, self._failure_rng)

    def _launch_reduce(self, task: ReduceTask, node: str) -> None:
        task.state = TaskState.RUNNING
        job = self.job_states[task.job_id].job
        work = job.input_size * self.config.reduce_factor / max(job.reduce_count, 1)
        attempt = TaskAttempt(
            self._next_attempt_id(), task.id, task.job_id, "reduce", node, self.now, work,
            self.topo.node(node).proc_rate, order=task.order,
        )
        self.running[attempt.id] = attempt
        self.running_reduces_on[node] += 1
        self._record(
            "AttemptLaunch", attempt=attempt.id, task=task.id, job=task.job_id, phase="reduce", node=node,
            locality=None, size=work, read_time=0.0, proc_rate=attempt.proc_rate, duration=attempt.duration,
        )
        self._push(self.now + attempt.duration, "AttemptComplete", attempt.id)

    def _on_AttemptComplete(self, attempt_id: str) -> None:
        a = self.running.pop(attempt_id)
        a.status = "succeeded"
        task = self._tasks[a.task_id]
        task.state = TaskState.SUCCEEDED
        state = self.job_states[a.job_id]
        if a.kind == "map":
            self.running_maps_on[a.node] -= 1
            state.maps_left -= 1
        else:
            self.running_reduces_on[a.node] -= 1
            state.reduces_left -= 1
        self._record("AttemptComplete", attempt=a.id, task=a.task_id, job=a.job_id, phase=a.kind, node=a.node)
        self.scheduler.on_attempt_complete(a, self.view)
        if not state.maps_left and not state.reduces_left:
            state.done = True
            self._record("JobComplete", job=a.job_id)

    def _on_AttemptFail(self, attempt_id: str) -> None:
        a = self.running.pop(attempt_id)
        a.status = "failed"
        task = self._tasks[a.task_id]
        task.state = TaskState.FAILED_PENDING
        self.job_states[a.job_id].failed.append(task)
        self.running_maps_on[a.node] -= 1
        key = (a.job_id, a.node)
        self.failures[key] = self.failures.get(key, 0) + 1
        self._record("AttemptFail", attempt=a.id, task=a.task_id, job=a.job_id, node=a.node)
        self.scheduler.on_attempt_fail(a, self.view)

    def _apply_prefetch(self, node: str, d: Prefetch) -> bool:
        if self.view.prefetch_in_flight():
            self._reject(node, d, "a prefetch is already in flight")
            return False
        if d.block not in self.blockmap:
            self._reject(node, d, "unknown block")
            return False
        replicas = self.blockmap.replicas(d.block)
        if d.dest in replicas:
            self._reject(node, d, "destination already holds the block")
            return False
        if d.source not in replicas:
            self._reject(node, d, "source does not hold the block")
            return False
        self._transfer_seq += 1
        size = self.blockmap.size(d.block)
        tr = Transfer(f"x{self._transfer_seq}", d.block, d.source, d.dest, size,
                      self.topo.link_rate(d.source, d.dest), self.now, "PrefetchCopy", d.task_id)
        self.transfers[tr.id] = tr
        self._record(
            "TransferStart", transfer=tr.id, block=tr.block, source=tr.source, dest=tr.dest, size=size,
            rate=tr.rate, purpose=tr.purpose, task=d.task_id, t_left=d.t_left, t_perblock=d.t_perblock,
            candidates=[list(c) for c in d.candidates], heartbeat_node=node,
        )
        self._push(tr.end_time, "TransferComplete", tr.id)
        return True

    def _on_TransferComplete(self, transfer_id: str) -> None:
        tr = self.transfers.pop(transfer_id)
        self.blockmap.add_replica(tr.block, tr.dest)
        self._record("TransferComplete", transfer=tr.id, block=tr.block, dest=tr.dest, task=tr.task_id)
        self.scheduler.on_transfer_complete(tr, self.view)


def _decision_repr(d: Decision) -> dict:
    out = {"type": type(d).__name__}
    for k in ("task_id", "node", "block", "source", "dest"):
        if hasattr(d, k):
            out[k] = getattr(d, k)
    return out


def dump_events(events: Iterable[dict]) -> str:
    """Serialize an event log as line-delimited JSON."""
    return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in events)


def load_events(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
