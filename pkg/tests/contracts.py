"""Scheduler and prefetch contracts checked by replaying event logs.

Each check returns a list of human-readable violations; empty means it holds.
"""

from __future__ import annotations

from replay import brute_force_candidates, natural, walk

RANK = {"NodeLocal": 0, "RackLocal": 1, "Remote": 2}


def map_launches(events):
    for st, e in walk(events):
        if e["kind"] == "AttemptLaunch" and e["phase"] == "map":
            yield st, e


def fifo_head_of_line(events) -> list[str]:
    bad = []
    for st, e in map_launches(events):
        head = next(j for j in st.active_jobs() if st.pending(j))
        if e["job"] != head:
            bad.append(f"t={e['t']}: launched {e['task']} while {head} had pending maps")
    return bad


def capacity_fifo_within_queue(events) -> list[str]:
    bad = []
    for st, e in map_launches(events):
        queue = st.queue_of[e["job"]]
        head = next(j for j in st.active_jobs() if st.queue_of[j] == queue and st.pending(j))
        if e["job"] != head:
            bad.append(f"t={e['t']}: {e['task']} launched ahead of {head} in queue {queue}")
    return bad


def queue_choice(events, share: dict[str, float]) -> list[str]:
    """Each launch goes to a queue minimizing running/share among queues with pending work."""
    bad = []
    for st, e in map_launches(events):
        running = st.running_by_queue()
        waiting = {st.queue_of[j] for j in st.active_jobs() if st.pending(j)}
        ratio = {q: running.get(q, 0) / share[q] for q in waiting}
        best = min(ratio.values())
        chosen = st.queue_of[e["job"]]
        if ratio[chosen] > best + 1e-12:
            bad.append(f"t={e['t']}: served {chosen} at {ratio[chosen]:.3f} while min was {best:.3f}")
        elif sorted((q for q in ratio if ratio[q] <= best + 1e-12), key=natural)[0] != chosen:
            bad.append(f"t={e['t']}: tie on ratio not broken by smaller queue id")
    return bad


def locality_preference(events) -> list[str]:
    """The launched task is the chosen job's most local pending task for that node."""
    bad = []
    for st, e in map_launches(events):
        best = min(RANK[st.locality(e["node"], st.task_block[t])] for t in st.pending(e["job"]))
        if RANK[e["locality"]] != best:
            bad.append(f"t={e['t']}: {e['task']} ran {e['locality']} but a better task existed")
    return bad


def fair_balance(events, tolerance: int = 1) -> tuple[list[str], int]:
    """Pool running counts within ``tolerance`` at saturated heartbeat boundaries.

    A boundary is the state right after a heartbeat's decisions; it is checked
    when every pool still has pending maps and no map slot is free anywhere.
    """
    bad, checked, after_heartbeat = [], 0, False
    for st, e in walk(events):
        if after_heartbeat and e["kind"] not in ("AttemptLaunch", "TransferStart", "DecisionRejected"):
            pools = set(st.queue_of.values())
            waiting = {st.queue_of[j] for j in st.active_jobs() if st.pending(j)}
            n_pools = len({q for q in st.scenario["workload"]["queues"].values()})
            if len(pools) == n_pools and waiting == pools and all(st.free_map_slots(n) == 0 for n in st.nodes):
                counts = st.running_by_queue()
                checked += 1
                if max(counts.values()) - min(counts.values()) > tolerance:
                    bad.append(f"t={st.now}: unbalanced pools {counts}")
            after_heartbeat = False
        if e["kind"] == "Heartbeat":
            after_heartbeat = True
    return bad, checked


def no_prefetch(events) -> list[str]:
    return [f"t={e['t']}: prefetch {e['transfer']}" for e in events if e["kind"] == "TransferStart"]


def prefetch_safety(events, warmup_heartbeats=1, failure_threshold=4) -> tuple[list[str], int]:
    """Estimator condition, single flight, and argmin target, by brute force per emission."""
    bad, emitted = [], 0
    for st, e in walk(events):
        if e["kind"] != "TransferStart" or e["purpose"] != "PrefetchCopy":
            continue
        emitted += 1
        if not e["t_left"] > e["t_perblock"]:
            bad.append(f"t={e['t']}: t_left {e['t_left']} <= t_perblock {e['t_perblock']}")
        if st.inflight:
            bad.append(f"t={e['t']}: {e['transfer']} started with {sorted(st.inflight)} in flight")
        cands = brute_force_candidates(st, warmup_heartbeats, failure_threshold)
        if not cands:
            bad.append(f"t={e['t']}: prefetch emitted with an empty candidate set")
            continue
        diff, node, t_left, t_per = cands[0]
        if e["dest"] != node:
            bad.append(f"t={e['t']}: target {e['dest']} but brute-force argmin is {node}")
        if abs(e["t_left"] - t_left) > 1e-9 * max(1.0, t_left) or abs(e["t_perblock"] - t_per) > 1e-12:
            bad.append(f"t={e['t']}: logged estimate differs from recomputation")
        if any(c[0] < diff for c in cands):
            bad.append(f"t={e['t']}: a candidate with smaller diff exists")
    return bad, emitted


def failed_first(events) -> tuple[list[str], int]:
    """No never-run task is prefetched while a retryable failed task is pending."""
    bad, checked = [], 0
    for st, e in walk(events):
        if e["kind"] == "TransferStart" and e["purpose"] == "PrefetchCopy":
            any_failed = any(st.failed[j] for j in st.active_jobs())
            if any_failed:
                checked += 1
                job = st.task_job[e["task"]]
                if e["task"] not in st.failed[job]:
                    bad.append(f"t={e['t']}: prefetched never-run {e['task']} while failed tasks waited")
    return bad, checked


def blacklist_respected(events, threshold=4) -> tuple[list[str], int]:
    """Prefetch targets never have ``threshold`` failures of the task's job."""
    bad, blacklisted_pairs = [], set()
    for st, e in walk(events):
        blacklisted_pairs |= {k for k, v in st.failures.items() if v >= threshold}
        if e["kind"] == "TransferStart" and e["purpose"] == "PrefetchCopy":
            job = st.task_job[e["task"]]
            if st.failures.get((job, e["dest"]), 0) >= threshold:
                bad.append(f"t={e['t']}: {e['dest']} is blacklisted for {job}")
    return bad, len(blacklisted_pairs)
