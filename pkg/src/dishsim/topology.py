"""Node geometry, the peer connectivity graph and unsafe-pair bookkeeping.

Peers are linked under a unit-disk model: two peers are neighbors iff their
Euclidean distance is at most the transmission range (closed disk, links are
bidirectional).  Altruists never take part in the peer graph; they only matter
for deciding whether an unsafe pair is *covered*.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


class NodeKind(str, enum.Enum):
    PEER = "peer"
    ALTRUIST = "altruist"


class MccMode(str, enum.Enum):
    """Which unsafe-pair condition applies.

    ``NO_PSM`` is the condition for peers that overhear when idle (and for the
    channel-conflict problem in general); ``PSM_DEAF_TERMINAL`` is the weaker
    condition for the deaf-terminal problem when peers sleep when idle.
    """

    NO_PSM = "nopsm"
    PSM_DEAF_TERMINAL = "psm-deaf"


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def dist(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Node:
    id: int
    pos: Point
    kind: NodeKind = NodeKind.PEER


@dataclass(frozen=True)
class NetworkTopology:
    """Immutable node set plus the derived peer adjacency.

    Build it with :func:`build_adjacency` rather than directly.
    """

    nodes: tuple[Node, ...]
    tx_range: float
    interference_range: float
    adjacency: Mapping[int, frozenset[int]]
    area: tuple[float, float] | None = None
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._by_id.update({n.id: n for n in self.nodes})

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    @property
    def peers(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.PEER]

    @property
    def altruists(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.ALTRUIST]

    def peer_ids(self) -> list[int]:
        return [n.id for n in self.peers]

    def neighbors(self, node_id: int) -> frozenset[int]:
        return self.adjacency[node_id]

    def degree(self, node_id: int) -> int:
        return len(self.adjacency[node_id])

    def distance(self, i: int, j: int) -> float:
        return self.node(i).pos.dist(self.node(j).pos)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i, nb in self.adjacency.items() for j in nb if i < j)

    def with_altruists(self, positions: Iterable[Point]) -> "NetworkTopology":
        """Copy of this topology with extra altruists appended (fresh ids)."""
        next_id = max((n.id for n in self.nodes), default=-1) + 1
        extra = [Node(next_id + k, p, NodeKind.ALTRUIST) for k, p in enumerate(positions)]
        return build_adjacency(list(self.nodes) + extra, self.tx_range,
                               self.interference_range, area=self.area)


def build_adjacency(nodes: Iterable[Node], r: float, interference_range: float | None = None,
                    area: tuple[float, float] | None = None) -> NetworkTopology:
    """Derive the peer unit-disk graph for ``nodes`` with transmission range ``r``."""
    nodes = tuple(nodes)
    if not r > 0:
        raise ValueError(f"transmission range must be positive, got {r}")
    if interference_range is None:
        interference_range = 2.0 * r
    if interference_range < r:
        raise ValueError("interference range must be >= transmission range")
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids")
    for n in nodes:
        if not (math.isfinite(n.pos.x) and math.isfinite(n.pos.y)):
            raise ValueError(f"node {n.id} has non-finite coordinates")

    peers = [n for n in nodes if n.kind is NodeKind.PEER]
    adj: dict[int, set[int]] = {n.id: set() for n in peers}
    if peers:
        xy = np.array([(n.pos.x, n.pos.y) for n in peers])
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        close = d <= r
        np.fill_diagonal(close, False)
        for a, b in zip(*np.nonzero(close)):
            adj[peers[a].id].add(peers[b].id)
    return NetworkTopology(nodes, float(r), float(interference_range),
                           {k: frozenset(v) for k, v in adj.items()}, area)


def _adj(graph) -> Mapping[int, frozenset[int]] | Mapping[int, set[int]]:
    return graph.adjacency if isinstance(graph, NetworkTopology) else graph


def is_unsafe_pair(graph, i: int, j: int, mode: MccMode = MccMode.NO_PSM) -> bool:
    """Whether adjacent peers ``i`` and ``j`` can create MCC problems for each other.

    ``graph`` is a :class:`NetworkTopology` or a plain ``{node: neighbors}`` mapping.
    """
    adj = _adj(graph)
    if j not in adj[i]:
        raise ValueError(f"peers {i} and {j} are not adjacent")
    di, dj = len(adj[i]), len(adj[j])
    if mode is MccMode.PSM_DEAF_TERMINAL:
        return di >= 1 and dj >= 1 and not (di == 1 and dj == 1)
    if di >= 2 and dj >= 2 and not (di == 2 and dj == 2):
        return True
    if di == 2 and dj == 2:
        return not (adj[i] & adj[j])
    return False


def enumerate_ups(graph, mode: MccMode = MccMode.NO_PSM) -> set[tuple[int, int]]:
    adj = _adj(graph)
    return {(i, j) for i, nb in adj.items() for j in nb
            if i < j and is_unsafe_pair(adj, i, j, mode)}


def covered(pair: tuple[int, int], topology: NetworkTopology) -> bool:
    """True iff some altruist is within range of both endpoints of ``pair``."""
    pi, pj = topology.node(pair[0]).pos, topology.node(pair[1]).pos
    r = topology.tx_range
    return any(a.pos.dist(pi) <= r and a.pos.dist(pj) <= r for a in topology.altruists)


@dataclass(frozen=True)
class Coverage:
    """Cooperation coverage N_cup / N_up.

    With no unsafe pairs at all the coverage is vacuously full: ``fraction`` is
    1.0 but ``vacuous`` is set so aggregates can tell the cases apart.
    """

    n_cup: int
    n_up: int

    @property
    def vacuous(self) -> bool:
        return self.n_up == 0

    @property
    def fraction(self) -> float:
        return 1.0 if self.n_up == 0 else self.n_cup / self.n_up


def cooperation_coverage(topology: NetworkTopology, mode: MccMode = MccMode.NO_PSM) -> Coverage:
    ups = enumerate_ups(topology, mode)
    return Coverage(sum(covered(p, topology) for p in ups), len(ups))
