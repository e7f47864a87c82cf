import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsim.errors import ConfigurationError
from mrsim.workload import Job, WorkloadSpec, split_job, split_sizes, synth_workload, table1_workload


class TestBuiltinWorkload:
    def test_rows(self):
        w = table1_workload()
        rows = [(j.user, j.input_size, j.map_count, j.reduce_count, j.submit_time) for j in w.jobs]
        assert rows[0] == ("user0", 512, 14, 1, 0.0)
        assert rows[3] == ("user1", 1024, 16, 1, 0.0)
        assert rows[6] == ("user2", 2048, 32, 1, 0.0)
        assert len(rows) == 8

    def test_total_maps(self):
        assert sum(j.map_count for j in table1_workload().jobs) == 3 * 14 + 3 * 16 + 2 * 32 == 154

    def test_queues(self):
        w = table1_workload()
        assert w.queue_ids == ["user0", "user1", "user2"]
        assert {w.queues[j.user] for j in w.jobs} == {"user0", "user1", "user2"}

    def test_pure(self):
        assert table1_workload().to_dict() == table1_workload().to_dict()


class TestSplit:
    def test_even(self):
        assert split_sizes(1024, 16) == [64.0] * 16

    def test_ceiling_remainder(self):
        assert split_sizes(512, 14) == [37.0] * 13 + [31.0]

    def test_single(self):
        assert split_sizes(64, 1) == [64.0]

    def test_degenerate(self):
        # ceil(10/9) = 2 leaves nothing for the last block
        with pytest.raises(ConfigurationError):
            split_sizes(10, 9)

    def test_split_job_binds_blocks(self):
        job = Job("job0", "u", 0.0, 512, 14)
        tasks, blocks = split_job(job)
        assert len(tasks) == len(blocks) == 14
        assert job.input_blocks == [b for b, _ in blocks]
        assert len({t.block for t in tasks}) == 14
        assert [t.block for t in tasks] == job.input_blocks
        assert tasks[0].id == "job0/m00" and blocks[-1] == ("job0/b13", 31.0)

    @given(st.integers(1, 5000), st.integers(1, 64))
    @settings(max_examples=200, deadline=None)
    def test_sizes_sum_to_input(self, size, maps):
        chunk = math.ceil(size / maps)
        if size - chunk * (maps - 1) <= 0:
            with pytest.raises(ConfigurationError):
                split_sizes(size, maps)
            return
        sizes = split_sizes(size, maps)
        assert len(sizes) == maps
        assert sum(sizes) == size
        assert all(s > 0 for s in sizes)
        assert all(s == chunk for s in sizes[:-1])


class TestJobValidation:
    @pytest.mark.parametrize("kwargs,field", [
        ({"map_count": 0}, "map_count"),
        ({"reduce_count": -1}, "reduce_count"),
        ({"input_size": 0}, "input_size"),
        ({"submit_time": -1}, "submit_time"),
    ])
    def test_field_errors(self, kwargs, field):
        base = dict(id="j", user="u", submit_time=0.0, input_size=64, map_count=1)
        base.update(kwargs)
        with pytest.raises(ConfigurationError) as exc:
            WorkloadSpec([Job(**base)], {"u": "q"})
        assert field in exc.value.field

    def test_submit_order(self):
        jobs = [Job("a", "u", 5.0, 64, 1), Job("b", "u", 1.0, 64, 1)]
        with pytest.raises(ConfigurationError, match="nondecreasing"):
            WorkloadSpec(jobs, {"u": "q"})

    def test_unmapped_user(self):
        with pytest.raises(ConfigurationError, match="queue"):
            WorkloadSpec([Job("a", "x", 0.0, 64, 1)], {"u": "q"})

    def test_duplicate_id(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            WorkloadSpec([Job("a", "u", 0.0, 64, 1), Job("a", "u", 0.0, 64, 1)], {"u": "q"})


def oracle_synth(n, size_range, map_range, users, seed):
    rng = random.Random(f"{seed}/workload")
    out = []
    for i in range(n):
        while True:
            m = rng.randint(*map_range)
            s = rng.randint(*size_range)
            if s - math.ceil(s / m) * (m - 1) > 0:
                break
        out.append((users[i % len(users)], float(s), m))
    return out


class TestSynth:
    def test_deterministic(self):
        a = synth_workload(6, (100, 900), (2, 12), ["a", "b"], seed=3)
        b = synth_workload(6, (100, 900), (2, 12), ["a", "b"], seed=3)
        assert a.to_dict() == b.to_dict()

    def test_matches_documented_generator(self):
        w = synth_workload(5, (64, 2048), (1, 32), ["x", "y", "z"], seed=3)
        assert len(w.jobs) == 5
        assert [(j.user, j.input_size, j.map_count) for j in w.jobs] == oracle_synth(
            5, (64, 2048), (1, 32), ["x", "y", "z"], 3)
        assert all(1 <= j.map_count <= 32 for j in w.jobs)

    def test_zero_jobs(self):
        with pytest.raises(ConfigurationError, match="n_jobs"):
            synth_workload(0, (1, 2), (1, 1), ["u"], 0)

    @pytest.mark.parametrize("size_range,map_range", [((10, 5), (1, 2)), ((10, 20), (4, 2)), ((0, 5), (1, 1))])
    def test_empty_ranges(self, size_range, map_range):
        with pytest.raises(ConfigurationError):
            synth_workload(2, size_range, map_range, ["u"], 0)

    def test_interarrival_nondecreasing(self):
        w = synth_workload(10, (64, 256), (1, 4), ["u"], seed=1, mean_interarrival=5.0)
        times = [j.submit_time for j in w.jobs]
        assert times == sorted(times) and times[-1] > 0

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_invariants_hold(self, seed):
        w = synth_workload(4, (32, 512), (1, 16), ["a", "b", "c"], seed)
        for j in w.jobs:
            tasks, blocks = split_job(j)
            assert sum(s for _, s in blocks) == j.input_size
