"""Cluster topology, replica placement and locality queries.

The topology is a two-level hierarchy of racks and nodes. Distances follow the
usual hierarchical network-distance convention: 0 for the same node, 2 for two
nodes sharing a rack and 4 across racks.
"""

from __future__ import annotations

import enum
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from mrsim.errors import ConfigurationError, SimulationStateError

def id_key(ident: str) -> tuple:
    """Sort key comparing embedded numbers numerically, so ``n2 < n10``."""
    return tuple((0, int(part), "") if part.isdigit() else (1, 0, part)
                 for part in re.split(r"(\d+)", ident) if part)


SAME_NODE = 0
SAME_RACK = 2
OFF_RACK = 4


class LocalityClass(str, enum.Enum):
    NODE_LOCAL = "NodeLocal"
    RACK_LOCAL = "RackLocal"
    REMOTE = "Remote"

    @property
    def rank(self) -> int:
        return _LOCALITY_RANK[self]


_LOCALITY_RANK = {
    LocalityClass.NODE_LOCAL: 0,
    LocalityClass.RACK_LOCAL: 1,
    LocalityClass.REMOTE: 2,
}


@dataclass(frozen=True)
class Node:
    id: str
    rack: str
    map_slots: int = 2
    reduce_slots: int = 1
    proc_rate: float = 8.0  # MB/s


@dataclass(frozen=True)
class ClusterTopology:
    nodes: tuple[Node, ...]
    intra_rack_rate: float  # MB/s
    cross_rack_rate: float  # MB/s
    racks: tuple[str, ...] = ()
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)
    _order: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if not nodes:
            raise ConfigurationError("at least one node is required", "topology.nodes")
        racks = tuple(self.racks) or tuple(dict.fromkeys(n.rack for n in nodes))
        object.__setattr__(self, "racks", racks)
        by_id = {}
        for n in nodes:
            if n.id in by_id:
                raise ConfigurationError(f"duplicate node id {n.id!r}", "topology.nodes")
            if n.rack not in racks:
                raise ConfigurationError(f"node {n.id!r} references unknown rack {n.rack!r}", "topology.nodes")
            if n.map_slots < 1:
                raise ConfigurationError(f"node {n.id!r}: map_slots must be >= 1", "topology.nodes.map_slots")
            if n.reduce_slots < 0:
                raise ConfigurationError(f"node {n.id!r}: reduce_slots must be >= 0", "topology.nodes.reduce_slots")
            if not n.proc_rate > 0:
                raise ConfigurationError(f"node {n.id!r}: proc_rate must be > 0", "topology.nodes.proc_rate")
            by_id[n.id] = n
        if not self.intra_rack_rate > 0:
            raise ConfigurationError("must be > 0", "topology.intra_rack_rate")
        if not self.cross_rack_rate > 0:
            raise ConfigurationError("must be > 0", "topology.cross_rack_rate")
        if self.cross_rack_rate > self.intra_rack_rate:
            raise ConfigurationError("must not exceed intra_rack_rate", "topology.cross_rack_rate")
        object.__setattr__(self, "_by_id", by_id)
        ranked = sorted(by_id, key=id_key)
        object.__setattr__(self, "_order", {nid: i for i, nid in enumerate(ranked)})

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise ConfigurationError(f"unknown node id {node_id!r}", "node") from None

    def rack_of(self, node_id: str) -> str:
        return self.node(node_id).rack

    def order(self, node_id: str) -> int:
        """Rank of the node id under :func:`id_key`; used for all node tie-breaks."""
        self.node(node_id)
        return self._order[node_id]

    def nodes_in_rack(self, rack: str) -> list[str]:
        return [n.id for n in self.nodes if n.rack == rack]

    def link_rate(self, a: str, b: str) -> float:
        """Transfer rate between two distinct nodes."""
        return self.intra_rack_rate if self.rack_of(a) == self.rack_of(b) else self.cross_rack_rate

    def to_dict(self) -> dict:
        return {
            "racks": list(self.racks),
            "nodes": [
                {
                    "id": n.id,
                    "rack": n.rack,
                    "map_slots": n.map_slots,
                    "reduce_slots": n.reduce_slots,
                    "proc_rate": n.proc_rate,
                }
                for n in self.nodes
            ],
            "intra_rack_rate": self.intra_rack_rate,
            "cross_rack_rate": self.cross_rack_rate,
        }


def topology_distance(a: str, b: str, topo: ClusterTopology) -> int:
    rack_a, rack_b = topo.rack_of(a), topo.rack_of(b)
    if a == b:
        return SAME_NODE
    return SAME_RACK if rack_a == rack_b else OFF_RACK


@dataclass
class BlockInfo:
    size: float
    replicas: set[str]
    origin_replicas: frozenset[str]


class BlockMap:
    """Block id -> size and replica set.

    Replica sets only grow: ``add_replica`` is the single mutator and is called
    by the engine when a prefetch copy lands.
    """

    def __init__(self, topo: ClusterTopology):
        self._topo = topo
        self._blocks: dict[str, BlockInfo] = {}

    def declare(self, block_id: str, size: float, replicas: Iterable[str]) -> None:
        replicas = set(replicas)
        if block_id in self._blocks:
            raise SimulationStateError(f"block {block_id!r} declared twice")
        if not size > 0:
            raise ConfigurationError(f"block {block_id!r} size must be > 0", "block.size")
        if not replicas:
            raise SimulationStateError(f"block {block_id!r} has no replicas")
        for r in replicas:
            self._topo.node(r)
        self._blocks[block_id] = BlockInfo(size, replicas, frozenset(replicas))

    def __contains__(self, block_id: str) -> bool:
        return block_id in self._blocks

    def __len__(self) -> int:
        return len(self._blocks)

    def __iter__(self):
        return iter(self._blocks)

    def info(self, block_id: str) -> BlockInfo:
        try:
            return self._blocks[block_id]
        except KeyError:
            raise SimulationStateError(f"unknown block {block_id!r}") from None

    def size(self, block_id: str) -> float:
        return self.info(block_id).size

    def replicas(self, block_id: str) -> frozenset[str]:
        return frozenset(self.info(block_id).replicas)

    def origin_replicas(self, block_id: str) -> frozenset[str]:
        return self.info(block_id).origin_replicas

    def add_replica(self, block_id: str, node_id: str) -> None:
        self._topo.node(node_id)
        self.info(block_id).replicas.add(node_id)

    def snapshot(self) -> dict[str, list[str]]:
        return {b: sorted(info.replicas, key=self._topo.order) for b, info in self._blocks.items()}


def classify_locality(exec_node: str, block: str, blockmap: BlockMap, topo: ClusterTopology) -> LocalityClass:
    replicas = blockmap.replicas(block)
    if exec_node in replicas:
        return LocalityClass.NODE_LOCAL
    rack = topo.rack_of(exec_node)
    if any(topo.rack_of(r) == rack for r in replicas):
        return LocalityClass.RACK_LOCAL
    return LocalityClass.REMOTE


def nearest_replica(block: str, target: str, blockmap: BlockMap, topo: ClusterTopology) -> str:
    replicas = blockmap.replicas(block)
    if not replicas:
        raise SimulationStateError(f"block {block!r} has no replicas")
    return min(replicas, key=lambda r: (topology_distance(r, target, topo), topo.order(r)))


def place_blocks(
    blocks: Iterable[tuple[str, float]],
    replication: int,
    topo: ClusterTopology,
    seed: int,
) -> BlockMap:
    """Seeded rack-aware placement.

    Draws come from ``random.Random(f"{seed}/placement")``. For each block in
    input order: the first replica is ``choice`` over all nodes in declaration
    order; if ``replication >= 2`` and there are at least two racks, the second
    is ``choice`` over nodes outside the first replica's rack; the remaining
    replicas are ``sample`` over the unused nodes in declaration order.
    """
    n = len(topo.nodes)
    if not 1 <= replication <= n:
        raise ConfigurationError(f"must be between 1 and the node count ({n}), got {replication}", "replication")
    rng = random.Random(f"{seed}/placement")
    ids = topo.node_ids
    bm = BlockMap(topo)
    for block_id, size in blocks:
        first = rng.choice(ids)
        chosen = [first]
        if replication >= 2 and len(topo.racks) >= 2:
            off = [x for x in ids if topo.rack_of(x) != topo.rack_of(first)]
            chosen.append(rng.choice(off))
        rest = [x for x in ids if x not in chosen]
        chosen.extend(rng.sample(rest, replication - len(chosen)))
        bm.declare(block_id, size, chosen)
    return bm


def topology_from_racks(
    racks: Mapping[str, Iterable[str]],
    intra_rack_rate: float,
    cross_rack_rate: float,
    **node_defaults,
) -> ClusterTopology:
    """Convenience constructor: ``{"r0": ["n1", "n2"], "r1": ["n3"]}``."""
    nodes = [Node(nid, rack, **node_defaults) for rack, members in racks.items() for nid in members]
    return ClusterTopology(tuple(nodes), intra_rack_rate, cross_rack_rate, racks=tuple(racks))
