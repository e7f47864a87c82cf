import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsim.cluster import (
    BlockMap,
    ClusterTopology,
    LocalityClass,
    Node,
    classify_locality,
    id_key,
    nearest_replica,
    place_blocks,
    topology_distance,
    topology_from_racks,
)
from mrsim.errors import ConfigurationError, SimulationStateError


@pytest.fixture
def topo():
    return topology_from_racks({"r0": ["n1", "n2"], "r1": ["n3", "n4"]}, 100.0, 10.0)


def random_topology(rng: random.Random, max_nodes=10, max_racks=4) -> ClusterTopology:
    n_nodes = rng.randint(1, max_nodes)
    n_racks = rng.randint(1, min(max_racks, n_nodes))
    racks = [f"r{i}" for i in range(n_racks)]
    assign = racks + [rng.choice(racks) for _ in range(n_nodes - n_racks)]
    rng.shuffle(assign)
    ids = [f"n{i}" for i in range(1, n_nodes + 1)]
    rng.shuffle(ids)
    nodes = tuple(Node(i, r) for i, r in zip(ids, assign))
    return ClusterTopology(nodes, 100.0, 10.0, racks=tuple(racks))


# Brute-force oracles written from the definitions, sharing no code with the package.

def oracle_distance(a, b, topo):
    if a == b:
        return 0
    rack = {n.id: n.rack for n in topo.nodes}
    return 2 if rack[a] == rack[b] else 4


def oracle_nearest(replicas, target, topo):
    def num(x):
        return int(x[1:])
    best = None
    for r in replicas:
        cand = (oracle_distance(r, target, topo), num(r))
        if best is None or cand < best[0]:
            best = (cand, r)
    return best[1]


def oracle_classify(node, replicas, topo):
    d = min(oracle_distance(r, node, topo) for r in replicas)
    return {0: "NodeLocal", 2: "RackLocal", 4: "Remote"}[d]


class TestDistance:
    def test_same_node(self, topo):
        assert topology_distance("n1", "n1", topo) == 0

    def test_same_rack(self, topo):
        assert topology_distance("n1", "n2", topo) == 2

    def test_other_rack(self, topo):
        assert topology_distance("n1", "n4", topo) == 4

    def test_unknown_node(self, topo):
        with pytest.raises(ConfigurationError):
            topology_distance("n1", "n9", topo)

    @given(st.integers(0, 2**32))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_matches_oracle(self, seed):
        t = random_topology(random.Random(seed))
        for a, b in itertools.product(t.node_ids, repeat=2):
            d = topology_distance(a, b, t)
            assert d == topology_distance(b, a, t) == oracle_distance(a, b, t)


class TestLocality:
    def test_node_local(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n1", "n3"])
        assert classify_locality("n1", "b", bm, topo) is LocalityClass.NODE_LOCAL

    def test_rack_local(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n2"])
        assert classify_locality("n1", "b", bm, topo) is LocalityClass.RACK_LOCAL

    def test_remote(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n3", "n4"])
        assert classify_locality("n1", "b", bm, topo) is LocalityClass.REMOTE

    def test_missing_block(self, topo):
        with pytest.raises(SimulationStateError):
            classify_locality("n1", "nope", BlockMap(topo), topo)

    def test_rank_order(self):
        ranks = [c.rank for c in (LocalityClass.NODE_LOCAL, LocalityClass.RACK_LOCAL, LocalityClass.REMOTE)]
        assert ranks == [0, 1, 2]


class TestNearestReplica:
    def test_self(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n3"])
        bm.add_replica("b", "n1")
        assert nearest_replica("b", "n1", bm, topo) == "n1"

    def test_rack_mate_beats_off_rack(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n2", "n3"])
        assert nearest_replica("b", "n1", bm, topo) == "n2"

    def test_tie_smaller_id(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n4", "n3"])
        assert nearest_replica("b", "n1", bm, topo) == "n3"

    def test_tie_is_numeric_not_lexicographic(self):
        t = topology_from_racks({"r0": ["n10", "n2"], "r1": ["n1"]}, 100.0, 10.0)
        bm = BlockMap(t)
        bm.declare("b", 64, ["n10", "n2"])
        assert nearest_replica("b", "n1", bm, t) == "n2"

    def test_no_replicas_rejected_at_declare(self, topo):
        with pytest.raises(SimulationStateError):
            BlockMap(topo).declare("b", 64, [])


def test_oracles_on_random_topologies():
    rng = random.Random(7)
    for _ in range(300):
        t = random_topology(rng)
        bm = BlockMap(t)
        for i in range(5):
            reps = rng.sample(t.node_ids, rng.randint(1, len(t.node_ids)))
            bm.declare(f"b{i}", 64, reps)
            for node in t.node_ids:
                assert nearest_replica(f"b{i}", node, bm, t) == oracle_nearest(reps, node, t)
                assert classify_locality(node, f"b{i}", bm, t).value == oracle_classify(node, reps, t)


class TestTopologyValidation:
    def test_duplicate_ids(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            ClusterTopology((Node("n1", "r0"), Node("n1", "r0")), 10, 5)

    def test_cross_exceeds_intra(self):
        with pytest.raises(ConfigurationError) as exc:
            topology_from_racks({"r0": ["n1"]}, 10, 20)
        assert exc.value.field == "topology.cross_rack_rate"

    @pytest.mark.parametrize("field,value", [("map_slots", 0), ("proc_rate", 0.0), ("reduce_slots", -1)])
    def test_node_fields(self, field, value):
        with pytest.raises(ConfigurationError, match=field):
            ClusterTopology((Node("n1", "r0", **{field: value}),), 10, 5)

    def test_zero_rate(self):
        with pytest.raises(ConfigurationError):
            topology_from_racks({"r0": ["n1"]}, 0, 0)

    def test_unknown_rack(self):
        with pytest.raises(ConfigurationError, match="unknown rack"):
            ClusterTopology((Node("n1", "r9"),), 10, 5, racks=("r0",))

    def test_order_uses_numeric_ids(self):
        t = topology_from_racks({"r0": ["n10", "n2", "n1"]}, 10, 5)
        assert sorted(t.node_ids, key=t.order) == ["n1", "n2", "n10"]


def test_id_key():
    assert sorted(["n10", "n9", "n1", "m2"], key=id_key) == ["m2", "n1", "n9", "n10"]


class TestBlockMap:
    def test_replicas_only_grow(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n1"])
        bm.add_replica("b", "n3")
        bm.add_replica("b", "n3")
        assert bm.replicas("b") == {"n1", "n3"}
        assert bm.origin_replicas("b") == {"n1"}
        assert bm.origin_replicas("b") <= bm.replicas("b")

    def test_declare_validation(self, topo):
        bm = BlockMap(topo)
        with pytest.raises(ConfigurationError):
            bm.declare("b", 0, ["n1"])
        with pytest.raises(ConfigurationError):
            bm.declare("b", 1, ["n99"])
        bm.declare("b", 1, ["n1"])
        with pytest.raises(SimulationStateError):
            bm.declare("b", 1, ["n1"])

    def test_returned_sets_are_copies(self, topo):
        bm = BlockMap(topo)
        bm.declare("b", 64, ["n1"])
        reps = bm.replicas("b")
        assert isinstance(reps, frozenset)


def oracle_place(blocks, replication, topo, seed):
    """Re-run the documented placement procedure independently."""
    rng = random.Random(f"{seed}/placement")
    ids = [n.id for n in topo.nodes]
    rack = {n.id: n.rack for n in topo.nodes}
    out = {}
    for b, _ in blocks:
        first = rng.choice(ids)
        chosen = [first]
        if replication >= 2 and len(set(rack.values())) >= 2:
            chosen.append(rng.choice([x for x in ids if rack[x] != rack[first]]))
        chosen += rng.sample([x for x in ids if x not in chosen], replication - len(chosen))
        out[b] = set(chosen)
    return out


class TestPlacement:
    blocks = [(f"b{i}", 64.0) for i in range(40)]

    @pytest.mark.parametrize("replication", [1, 2, 3, 4])
    def test_matches_documented_procedure(self, topo, replication):
        bm = place_blocks(self.blocks, replication, topo, seed=11)
        expected = oracle_place(self.blocks, replication, topo, 11)
        assert {b: bm.replicas(b) for b, _ in self.blocks} == expected

    def test_deterministic(self, topo):
        a = place_blocks(self.blocks, 2, topo, 5).snapshot()
        b = place_blocks(self.blocks, 2, topo, 5).snapshot()
        assert a == b
        assert a != place_blocks(self.blocks, 2, topo, 6).snapshot()

    def test_second_replica_off_rack(self, topo):
        bm = place_blocks(self.blocks, 2, topo, 3)
        for b, _ in self.blocks:
            assert len({topo.rack_of(r) for r in bm.replicas(b)}) == 2

    def test_replication_bounds(self, topo):
        with pytest.raises(ConfigurationError, match="replication"):
            place_blocks(self.blocks, 5, topo, 0)
        with pytest.raises(ConfigurationError, match="replication"):
            place_blocks(self.blocks, 0, topo, 0)

    @given(st.integers(0, 2**32), st.integers(1, 10))
    @settings(max_examples=50, deadline=None)
    def test_replica_count(self, seed, replication):
        t = random_topology(random.Random(seed))
        replication = min(replication, len(t.nodes))
        bm = place_blocks(self.blocks[:10], replication, t, seed)
        for b, _ in self.blocks[:10]:
            assert len(bm.replicas(b)) == replication
            assert bm.replicas(b) <= set(t.node_ids)
