"""Jobs, map/reduce tasks and workload constructors."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field

from mrsim.cluster import id_key
from mrsim.errors import ConfigurationError


class TaskState(str, enum.Enum):
    NOT_RUNNING = "NotRunning"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED_PENDING = "FailedPendingRetry"


@dataclass
class Job:
    id: str
    user: str
    submit_time: float
    input_size: float  # MB
    map_count: int
    reduce_count: int = 1
    input_blocks: list[str] = field(default_factory=list)
    index: int = 0  # position in submission order

    def validate(self) -> None:
        where = f"workload.jobs[{self.id}]"
        if self.map_count < 1:
            raise ConfigurationError("map_count must be >= 1", f"{where}.map_count")
        if self.reduce_count < 0:
            raise ConfigurationError("reduce_count must be >= 0", f"{where}.reduce_count")
        if not self.input_size > 0:
            raise ConfigurationError("input_size must be > 0", f"{where}.input_size")
        if self.submit_time < 0:
            raise ConfigurationError("submit_time must be >= 0", f"{where}.submit_time")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "user": self.user,
            "submit_time": self.submit_time,
            "input_size": self.input_size,
            "map_count": self.map_count,
            "reduce_count": self.reduce_count,
        }


@dataclass
class MapTask:
    id: str
    job_id: str
    block: str
    order: tuple[int, int]  # (job index, task index); the numeric id for tie-breaks
    state: TaskState = TaskState.NOT_RUNNING


@dataclass
class ReduceTask:
    id: str
    job_id: str
    order: tuple[int, int]
    state: TaskState = TaskState.NOT_RUNNING


@dataclass
class WorkloadSpec:
    jobs: list[Job]
    queues: dict[str, str]  # user -> queue / pool id

    def __post_init__(self):
        seen = set()
        last = -math.inf
        for i, job in enumerate(self.jobs):
            job.validate()
            job.index = i
            if job.id in seen:
                raise ConfigurationError(f"duplicate job id {job.id!r}", "workload.jobs")
            seen.add(job.id)
            if job.submit_time < last:
                raise ConfigurationError("submit_time must be nondecreasing in list order", "workload.jobs")
            last = job.submit_time
            if job.user not in self.queues:
                raise ConfigurationError(f"user {job.user!r} has no queue mapping", "workload.queues")

    @property
    def queue_ids(self) -> list[str]:
        return sorted(set(self.queues.values()), key=id_key)

    def to_dict(self) -> dict:
        return {"jobs": [j.to_dict() for j in self.jobs], "queues": dict(self.queues)}


def table1_workload() -> WorkloadSpec:
    """The eight WordCount jobs of the three-user experiment, all submitted at t=0."""
    rows = [("user0", 512, 14)] * 3 + [("user1", 1024, 16)] * 3 + [("user2", 2048, 32)] * 2
    jobs = [Job(f"job{i}", user, 0.0, float(size), maps, 1) for i, (user, size, maps) in enumerate(rows)]
    return WorkloadSpec(jobs, {"user0": "user0", "user1": "user1", "user2": "user2"})


def split_sizes(input_size: float, map_count: int) -> list[float]:
    chunk = math.ceil(input_size / map_count)
    last = input_size - chunk * (map_count - 1)
    if not last > 0:
        raise ConfigurationError(
            f"{input_size} MB cannot be split into {map_count} ceiling-sized blocks", "workload.jobs.map_count"
        )
    return [float(chunk)] * (map_count - 1) + [float(last)]


def split_job(job: Job) -> tuple[list[MapTask], list[tuple[str, float]]]:
    """Cut a job's input into ``map_count`` blocks and bind one map task to each.

    The first ``map_count - 1`` blocks have size ``ceil(input_size / map_count)``
    and the last block takes the remainder. Fills ``job.input_blocks``.
    """
    sizes = split_sizes(job.input_size, job.map_count)
    width = len(str(job.map_count - 1))
    tasks, blocks = [], []
    for i, size in enumerate(sizes):
        block_id = f"{job.id}/b{i:0{width}d}"
        blocks.append((block_id, size))
        tasks.append(MapTask(f"{job.id}/m{i:0{width}d}", job.id, block_id, (job.index, i)))
    job.input_blocks = [b for b, _ in blocks]
    return tasks, blocks


def reduce_tasks(job: Job) -> list[ReduceTask]:
    return [ReduceTask(f"{job.id}/r{i}", job.id, (job.index, i)) for i in range(job.reduce_count)]


def synth_workload(
    n_jobs: int,
    size_range: tuple[float, float],
    map_range: tuple[int, int],
    users: list[str],
    seed: int,
    mean_interarrival: float = 0.0,
    reduce_count: int = 1,
) -> WorkloadSpec:
    """Seeded synthetic workload.

    Draws come from ``random.Random(f"{seed}/workload")``. Job ``i`` belongs to
    ``users[i % len(users)]``; its map count is ``randint(*map_range)`` and its
    input size ``randint(*size_range)`` MB, redrawn until the ceiling split
    leaves a positive last block. With ``mean_interarrival > 0`` submit times
    are cumulative ``expovariate`` gaps, otherwise every job arrives at t=0.
    Each user maps to a queue of the same name.
    """
    if n_jobs < 1:
        raise ConfigurationError("must be >= 1", "workload.synthetic.n_jobs")
    lo_s, hi_s = size_range
    lo_m, hi_m = map_range
    if lo_s > hi_s or lo_s <= 0:
        raise ConfigurationError(f"empty or non-positive range {size_range}", "workload.synthetic.size_range")
    if lo_m > hi_m or lo_m < 1:
        raise ConfigurationError(f"empty range {map_range}", "workload.synthetic.map_range")
    if not users:
        raise ConfigurationError("at least one user is required", "workload.synthetic.users")
    if not any(_splittable(s, m) for m in (lo_m,) for s in range(math.ceil(lo_s), math.floor(hi_s) + 1)):
        raise ConfigurationError("no size in range can feed the smallest map count", "workload.synthetic.size_range")
    rng = random.Random(f"{seed}/workload")
    jobs = []
    t = 0.0
    for i in range(n_jobs):
        while True:
            maps = rng.randint(lo_m, hi_m)
            size = rng.randint(math.ceil(lo_s), math.floor(hi_s))
            if _splittable(size, maps):
                break
        if mean_interarrival > 0 and i > 0:
            t += rng.expovariate(1.0 / mean_interarrival)
        jobs.append(Job(f"job{i}", users[i % len(users)], t, float(size), maps, reduce_count))
    return WorkloadSpec(jobs, {u: u for u in users})


def _splittable(size: float, maps: int) -> bool:
    return size - math.ceil(size / maps) * (maps - 1) > 0
