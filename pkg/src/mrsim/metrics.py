"""Locality, response-time and prefetch-overhead metrics derived from event logs.

Every function here is a pure function of the event log produced by
:class:`mrsim.engine.Simulator`.
"""

from __future__ import annotations

import statistics
import warnings
from dataclasses import asdict, dataclass, field

from mrsim.errors import ComparisonError, IntegrityError

CLASSES = ("NodeLocal", "RackLocal", "Remote")


@dataclass
class LocalityReport:
    counts: dict[str, int]
    fractions: dict[str, float]
    per_job: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def node_local(self) -> float:
        return self.fractions["NodeLocal"]


@dataclass
class JobTimeline:
    job: str
    submit_time: float
    first_task_launch: float
    last_task_completion: float

    @property
    def response_time(self) -> float:
        return self.last_task_completion - self.submit_time


@dataclass
class PrefetchOverhead:
    transfers: int = 0
    bytes_moved: float = 0.0
    hits: int = 0
    wasted_bytes: float = 0.0


@dataclass
class SimReport:
    scheduler: str
    scenario: dict
    locality: LocalityReport
    timelines: list[JobTimeline]
    mean_response: float
    max_response: float
    makespan: float
    prefetch: PrefetchOverhead
    event_count: int

    def to_dict(self) -> dict:
        return {
            "scheduler": self.scheduler,
            "scenario": self.scenario,
            "locality": {
                "counts": self.locality.counts,
                "fractions": self.locality.fractions,
                "per_job": self.locality.per_job,
            },
            "jobs": [dict(asdict(t), response_time=t.response_time) for t in self.timelines],
            "response_time": {"mean": self.mean_response, "max": self.max_response, "makespan": self.makespan},
            "prefetch": asdict(self.prefetch),
            "event_count": self.event_count,
        }


def _index(events: list[dict]) -> dict[str, dict]:
    return {e["attempt"]: e for e in events if e["kind"] == "AttemptLaunch"}


def check_complete(events: list[dict]) -> None:
    """Raise IntegrityError unless every submitted task and job finished."""
    tasks, done_tasks, jobs, done_jobs = set(), set(), set(), set()
    for e in events:
        kind = e["kind"]
        if kind == "JobSubmit":
            jobs.add(e["job"])
            tasks.update(m["task"] for m in e["maps"])
            tasks.update(e["reduces"])
        elif kind == "AttemptComplete":
            done_tasks.add(e["task"])
        elif kind == "JobComplete":
            done_jobs.add(e["job"])
    if tasks - done_tasks or jobs - done_jobs:
        missing = sorted(tasks - done_tasks)[:10]
        raise IntegrityError(f"event log has unfinished work: {missing} jobs={sorted(jobs - done_jobs)}")


def locality_report(events: list[dict]) -> LocalityReport:
    check_complete(events)
    launches = _index(events)
    counts = dict.fromkeys(CLASSES, 0)
    per_job: dict[str, dict[str, int]] = {}
    for e in events:
        if e["kind"] == "AttemptComplete":
            launch = launches[e["attempt"]]
            if launch["phase"] != "map":
                continue
            cls = launch["locality"]
            counts[cls] += 1
            per_job.setdefault(launch["job"], dict.fromkeys(CLASSES, 0))[cls] += 1
    total = sum(counts.values())
    fractions = {c: (counts[c] / total if total else 0.0) for c in CLASSES}
    return LocalityReport(counts, fractions, per_job)


def response_times(events: list[dict]) -> tuple[list[JobTimeline], float, float, float]:
    """Per-job timelines plus (mean response, max response, makespan)."""
    check_complete(events)
    submit, first, last = {}, {}, {}
    for e in events:
        kind = e["kind"]
        if kind == "JobSubmit":
            submit[e["job"]] = e["t"]
        elif kind == "AttemptLaunch":
            first.setdefault(e["job"], e["t"])
        elif kind == "JobComplete":
            last[e["job"]] = e["t"]
    timelines = []
    for job, t0 in submit.items():
        if job not in first:
            warnings.warn(f"job {job} launched no tasks; excluded from response times")
            continue
        timelines.append(JobTimeline(job, t0, first[job], last[job]))
    if not timelines:
        return [], 0.0, 0.0, 0.0
    rts = [t.response_time for t in timelines]
    return timelines, statistics.fmean(rts), max(rts), max(t.last_task_completion for t in timelines)


def prefetch_overhead(events: list[dict]) -> PrefetchOverhead:
    """A prefetch is a hit when its task's successful attempt ran node-local on the copy's destination."""
    launches = _index(events)
    success = {}
    for e in events:
        if e["kind"] == "AttemptComplete" and launches[e["attempt"]]["phase"] == "map":
            success[e["task"]] = launches[e["attempt"]]
    out = PrefetchOverhead()
    for e in events:
        if e["kind"] == "TransferStart" and e["purpose"] == "PrefetchCopy":
            out.transfers += 1
            out.bytes_moved += e["size"]
            run = success.get(e["task"])
            if run is not None and run["node"] == e["dest"] and run["locality"] == "NodeLocal":
                out.hits += 1
            else:
                out.wasted_bytes += e["size"]
    return out


def build_report(events: list[dict]) -> SimReport:
    scenario = events[0]["scenario"] if events and events[0]["kind"] == "Bootstrap" else {}
    loc = locality_report(events)
    timelines, mean_rt, max_rt, makespan = response_times(events)
    return SimReport(
        scheduler=scenario.get("scheduler", "?"),
        scenario=scenario,
        locality=loc,
        timelines=timelines,
        mean_response=mean_rt,
        max_response=max_rt,
        makespan=makespan,
        prefetch=prefetch_overhead(events),
        event_count=len(events),
    )


# -- comparison ------------------------------------------------------------

METRICS = (
    ("node_local", "fraction"),
    ("rack_local", "fraction"),
    ("remote", "fraction"),
    ("mean_response", "seconds"),
    ("max_response", "seconds"),
    ("makespan", "seconds"),
    ("prefetch_transfers", "count"),
    ("prefetch_hits", "count"),
    ("prefetch_mb", "mb"),
    ("wasted_mb", "mb"),
)

_VARYING = ("scheduler", "scheduler_params")


def _metric_values(r: SimReport) -> dict[str, float]:
    f = r.locality.fractions
    return {
        "node_local": f["NodeLocal"],
        "rack_local": f["RackLocal"],
        "remote": f["Remote"],
        "mean_response": r.mean_response,
        "max_response": r.max_response,
        "makespan": r.makespan,
        "prefetch_transfers": r.prefetch.transfers,
        "prefetch_hits": r.prefetch.hits,
        "prefetch_mb": r.prefetch.bytes_moved,
        "wasted_mb": r.prefetch.wasted_bytes,
    }


def compare_report(reports: list[SimReport], baseline: str | None = None) -> dict:
    """Side-by-side metrics with deltas against ``baseline`` (default: first run).

    Fraction deltas are in percentage points; time deltas in seconds and
    percent; counts and MB as plain differences.
    """
    if not reports:
        raise ComparisonError("nothing to compare")

    def fixed(r):
        return {k: v for k, v in r.scenario.items() if k not in _VARYING}

    ref = fixed(reports[0])
    for r in reports[1:]:
        if fixed(r) != ref:
            diff = sorted(k for k in set(ref) | set(fixed(r)) if ref.get(k) != fixed(r).get(k))
            raise ComparisonError(f"scenarios differ beyond the scheduler: {diff}")
    labels = []
    for r in reports:
        label, n = r.scheduler, 2
        while label in labels:
            label, n = f"{r.scheduler}#{n}", n + 1
        labels.append(label)
    base = baseline or labels[0]
    if base not in labels:
        raise ComparisonError(f"baseline {base!r} is not among {labels}")
    values = {lab: _metric_values(r) for lab, r in zip(labels, reports)}
    rows = {}
    for metric, unit in METRICS:
        b = values[base][metric]
        row = {"unit": unit, "values": {lab: values[lab][metric] for lab in labels}, "delta": {}}
        for lab in labels:
            v = values[lab][metric]
            if unit == "fraction":
                row["delta"][lab] = {"pp": (v - b) * 100.0}
            elif unit == "seconds":
                row["delta"][lab] = {"seconds": v - b, "percent": ((v - b) / b * 100.0) if b else 0.0}
            else:
                row["delta"][lab] = {"abs": v - b}
        rows[metric] = row
    return {
        "baseline": base,
        "columns": labels,
        "scenario": ref,
        "metrics": rows,
        "runs": [r.to_dict() for r in reports],
    }


def render_report(r: SimReport) -> str:
    f, c = r.locality.fractions, r.locality.counts
    lines = [
        f"scheduler: {r.scheduler}",
        f"map attempts: {r.locality.total}",
        *(f"  {k:<10} {c[k]:>5}  {f[k] * 100:6.2f}%" for k in CLASSES),
        f"mean response: {r.mean_response:.2f} s   max: {r.max_response:.2f} s   makespan: {r.makespan:.2f} s",
        f"prefetch: {r.prefetch.transfers} copies, {r.prefetch.hits} hits, "
        f"{r.prefetch.bytes_moved:.0f} MB moved, {r.prefetch.wasted_bytes:.0f} MB wasted",
        "",
        f"{'job':<8} {'submit':>8} {'first':>9} {'done':>9} {'response':>9}",
    ]
    for t in r.timelines:
        lines.append(
            f"{t.job:<8} {t.submit_time:8.2f} {t.first_task_launch:9.2f} "
            f"{t.last_task_completion:9.2f} {t.response_time:9.2f}"
        )
    return "\n".join(lines) + "\n"


def render_comparison(doc: dict) -> str:
    cols = doc["columns"]
    width = max(12, *(len(c) + 2 for c in cols))
    head = f"{'metric':<20}" + "".join(f"{c:>{width}}" for c in cols)
    lines = [head, "-" * len(head)]
    for metric, row in doc["metrics"].items():
        cells = []
        for c in cols:
            v = row["values"][c]
            cells.append(f"{v * 100:.2f}%" if row["unit"] == "fraction" else f"{v:.2f}" if isinstance(v, float) else str(v))
        lines.append(f"{metric:<20}" + "".join(f"{x:>{width}}" for x in cells))
    lines.append("")
    lines.append(f"deltas vs {doc['baseline']}")
    for metric in ("node_local", "mean_response"):
        row = doc["metrics"][metric]
        cells = []
        for c in cols:
            d = row["delta"][c]
            cells.append(f"{d['pp']:+.2f}pp" if "pp" in d else f"{d['percent']:+.2f}%")
        lines.append(f"{metric:<20}" + "".join(f"{x:>{width}}" for x in cells))
    return "\n".join(lines) + "\n"
