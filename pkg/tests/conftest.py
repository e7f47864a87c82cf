import pytest

from mrsim.cluster import topology_from_racks
from mrsim.engine import SimConfig, Simulator
from mrsim.schedulers import make_scheduler
from mrsim.workload import Job, WorkloadSpec


def staged(jobs, placement=None, racks=None, scheduler="fifo", params=None, queues=None, config=None,
           **node_kw):
    """A simulator whose t=0 submissions have been processed, ready for manual heartbeats.

    ``jobs`` is a list of ``(id, user, input_mb, maps)``. ``placement`` maps
    block ids to replica lists and overrides the random placement.
    """
    racks = racks or {"r0": ["n1", "n2"], "r1": ["n3"]}
    topo = topology_from_racks(racks, 100.0, 10.0, **node_kw)
    users = {j[1] for j in jobs}
    wl = WorkloadSpec([Job(i, u, 0.0, size, maps, 1) for i, u, size, maps in jobs],
                      queues or {u: u for u in users})
    sim = Simulator(topo, wl, make_scheduler(scheduler, params), config or SimConfig(seed=0))
    for block, nodes in (placement or {}).items():
        info = sim.blockmap.info(block)
        info.replicas.clear()
        info.replicas.update(nodes)
        info.origin_replicas = frozenset(nodes)
    sim.start()
    while sim.peek() and sim.peek()[1] == "JobSubmit":
        sim.step()
    return sim


def advance(sim, until: float):
    """Process every queued event strictly before ``until``."""
    while sim.peek() and sim.peek()[0] < until:
        sim.step()


def finish(sim):
    while sim.step():
        pass
    return sim.events


def launched(sim):
    return [(e["task"], e["node"], e["locality"]) for e in sim.events
            if e["kind"] == "AttemptLaunch" and e["phase"] == "map"]


@pytest.fixture
def make_staged():
    return staged


# Acceptance criteria record one verdict line each; printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
