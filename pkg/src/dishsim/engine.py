"""Discrete-event simulation of the five multi-channel MAC variants.

One :class:`Simulator` instance is single threaded and fully determined by its
:class:`ScenarioConfig` (seed included).  Time is kept in integer nanoseconds so
that event ordering and energy bookkeeping are exact.

Physical layer
    Unit-disk reception within ``tx_range``; any concurrent same-channel
    transmitter within ``interference_range`` of a receiver interferes.  A frame
    survives interference if its received power beats the summed interference by
    the capture threshold (``d ** -path_loss_exponent`` attenuation).  Carrier
    sense covers the interference range and needs ``cca_delay`` to register a
    new transmission.  Data channels are not sensed: a reservation confirmed by
    CFA/CFB is used blindly, which is exactly where stale knowledge hurts.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import deployment
from .metrics import POWER_W, EnergyLedger, aggregate_throughput, bmp, BmpInputs, node_power
from .protocol import (
    BROADCAST, CONTROL_CHANNEL, MAY_COOPERATE, UNENGAGED, ChannelUsageTable, Frame, FrameKind,
    MacParams, Phase, ProtocolVariant, RadioState, best_neighbor, cooperation_policy, detect_mcc,
    on_inv_received, psm_radio_policy, receiver_channel, select_channel, update_table,
)
from .topology import NetworkTopology, Node, NodeKind, Point, build_adjacency

OK, COLLIDED, NOT_HEARD, SUPPRESSED = "ok", "collided", "not_heard", "suppressed"


_TABLE_KINDS = frozenset({FrameKind.CFA, FrameKind.CFB, FrameKind.NCF, FrameKind.INV})


class UnroutableError(RuntimeError):
    """Flows could not be routed on any of the generated topologies."""


# ---------------------------------------------------------------------------
# radio model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadioModel:
    tx_range: float = 250.0
    interference_range: float = 500.0
    capture_threshold_db: float = 6.0
    path_loss_exponent: float = 4.0

    def __post_init__(self):
        if self.interference_range < self.tx_range:
            raise ValueError("interference range must be >= transmission range")
        if not self.capture_threshold_db > 0:
            raise ValueError("capture threshold must be positive")

    @property
    def capture_ratio(self) -> float:
        return 10 ** (self.capture_threshold_db / 10)

    def power(self, d: float) -> float:
        # clamp so coincident nodes do not blow up
        return max(d, 1.0) ** -self.path_loss_exponent


def _captures(signal: float, interference: float, ratio: float) -> bool:
    return interference == 0.0 or signal >= ratio * interference


def reception_outcome(sender_distance: float, interferer_distances, model: RadioModel,
                      listening: bool = True) -> str:
    """Fate of one frame at one receiver.

    ``interferer_distances`` are the receiver's distances to every other
    transmitter on the same channel overlapping the frame in time.
    """
    if not listening or sender_distance > model.tx_range:
        return NOT_HEARD
    interference = sum(model.power(d) for d in interferer_distances
                       if d <= model.interference_range)
    return OK if _captures(model.power(sender_distance), interference, model.capture_ratio) \
        else COLLIDED


# ---------------------------------------------------------------------------
# event queue
# ---------------------------------------------------------------------------

class EventQueue:
    """Min-heap of ``(time, seq, handler, args)``; ``seq`` breaks time ties FIFO."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now = 0
        self.popped = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: int, handler, *args) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (time, self._seq, handler, args))
        self._seq += 1

    def pop(self):
        time, seq, handler, args = heapq.heappop(self._heap)
        self.now = time
        self.popped += 1
        return time, seq, handler, args


# ---------------------------------------------------------------------------
# scenario, flows and traffic
# ---------------------------------------------------------------------------

SINGLE_HOP_AREA = (100.0, 100.0)
MULTI_HOP_AREA = (1500.0, 1500.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run depends on.

    ``peer_density`` and ``alt_density`` are in nodes per r^2 and, when given,
    override ``n_peers`` / ``n_altruists``.  For single-hop Altruistic runs
    with no explicit altruist count, one altruist sits at the area center.
    """

    variant: ProtocolVariant = ProtocolVariant.DISH_P
    multihop: bool = False
    area: tuple[float, float] | None = None
    n_peers: int = 10
    peer_density: float | None = None
    n_altruists: int | None = None
    alt_density: float | None = None
    n_data_channels: int = 5
    mac: MacParams = MacParams()
    radio: RadioModel = RadioModel()
    rate_bps: float = 25_000.0
    saturated: bool = False
    stop_after: int = 10_000
    seed: int = 0
    topology_retries: int = 20
    max_time_s: float | None = None
    trace: bool = False
    topology: NetworkTopology | None = None

    @property
    def scenario_area(self) -> tuple[float, float]:
        if self.topology is not None and self.topology.area is not None:
            return self.topology.area
        if self.area is not None:
            return self.area
        return MULTI_HOP_AREA if self.multihop else SINGLE_HOP_AREA

    @property
    def data_channels(self) -> list[int]:
        return list(range(1, self.n_data_channels + 1))

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Flow:
    src: int
    dst: int
    route: tuple[int, ...]
    rate_bps: float = 0.0

    @property
    def hops(self) -> int:
        return len(self.route) - 1


def shortest_route(adjacency, src: int, dst: int) -> tuple[int, ...] | None:
    """Hop-count shortest path by BFS; neighbors are expanded in id order."""
    if src == dst:
        return (src,)
    prev = {src: None}
    frontier = deque([src])
    while frontier:
        u = frontier.popleft()
        for v in sorted(adjacency[u]):
            if v not in prev:
                prev[v] = u
                if v == dst:
                    path = [v]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return tuple(reversed(path))
                frontier.append(v)
    return None


def generate_flows(topology: NetworkTopology, multihop: bool, rng, rate_bps: float = 0.0) -> list[Flow]:
    """Single-hop: a random perfect matching of peers.  Multi-hop: a random
    derangement, so each peer is the source of one flow and the sink of another.

    ``rng`` is a :class:`numpy.random.Generator`.
    """
    ids = topology.peer_ids()
    if not multihop:
        if len(ids) % 2:
            raise ValueError("single-hop flows need an even number of peers")
        perm = [ids[k] for k in rng.permutation(len(ids))]
        flows = []
        for a, b in zip(perm[::2], perm[1::2]):
            if b not in topology.adjacency[a]:
                raise UnroutableError(f"peers {a} and {b} are out of range")
            flows.append(Flow(a, b, (a, b), rate_bps))
        return flows
    if len(ids) < 2:
        raise ValueError("multi-hop flows need at least two peers")
    while True:
        perm = rng.permutation(len(ids))
        if not np.any(perm == np.arange(len(ids))):
            break
    flows = []
    for k, src in enumerate(ids):
        dst = ids[perm[k]]
        route = shortest_route(topology.adjacency, src, dst)
        if route is None:
            raise UnroutableError(f"no route from {src} to {dst}")
        flows.append(Flow(src, dst, route, rate_bps))
    return flows


def poisson_traffic(rate_bps: float, seed, payload_bits: int = 16384, horizon_s: float | None = None,
                    limit: int | None = None) -> Iterator[float]:
    """Arrival times (s) of a Poisson packet stream; empty for ``rate_bps == 0``."""
    if rate_bps < 0:
        raise ValueError("rate must be non-negative")
    if rate_bps == 0:
        return
    rng = random.Random(seed)
    lam = rate_bps / payload_bits
    t, k = 0.0, 0
    while limit is None or k < limit:
        t += rng.expovariate(lam)
        if horizon_s is not None and t > horizon_s:
            return
        yield t
        k += 1


def _seed_streams(seed: int, n: int = 4) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def build_scenario(config: ScenarioConfig) -> tuple[NetworkTopology, list[Flow]]:
    """Place peers and altruists and route flows, regenerating on failure."""
    topo_ss, flow_ss, alt_ss, _ = _seed_streams(config.seed)
    r = config.radio.tx_range
    w, h = config.scenario_area
    topo_rng = np.random.default_rng(topo_ss)
    flow_rng = np.random.default_rng(flow_ss)
    alt_rng = np.random.default_rng(alt_ss)

    if config.topology is not None:
        topo = config.topology
        if topo.altruists and not config.variant.allows_altruists:
            raise ValueError(f"{config.variant.value} does not use altruists")
        return topo, generate_flows(topo, config.multihop, flow_rng, config.rate_bps)

    n_peers = config.n_peers
    if config.peer_density is not None:
        n_peers = int(round(config.peer_density * w * h / (r * r)))
    last_err = None
    for _ in range(max(1, config.topology_retries)):
        xy = topo_rng.uniform((0.0, 0.0), (w, h), size=(n_peers, 2))
        peers = [Node(k, Point(float(x), float(y))) for k, (x, y) in enumerate(xy)]
        topo = build_adjacency(peers, r, config.radio.interference_range, area=(w, h))
        try:
            flows = generate_flows(topo, config.multihop, flow_rng, config.rate_bps)
            break
        except UnroutableError as err:
            last_err = err
    else:
        raise UnroutableError(f"gave up after {config.topology_retries} topologies: {last_err}")

    alts: list[Point] = []
    if config.variant.allows_altruists:
        if config.alt_density is not None:
            alts = deployment.poisson_deploy((w, h), config.alt_density / (r * r), alt_rng)
        elif config.n_altruists is None:
            if config.multihop:
                alts = deployment.poisson_deploy((w, h), deployment.DEFAULT_RHO_ALT / (r * r), alt_rng)
            else:
                alts = [Point(w / 2, h / 2)]
        elif config.n_altruists == 1 and not config.multihop:
            alts = [Point(w / 2, h / 2)]
        else:
            xy = alt_rng.uniform((0.0, 0.0), (w, h), size=(config.n_altruists, 2))
            alts = [Point(float(x), float(y)) for x, y in xy]
    elif config.n_altruists:
        raise ValueError(f"{config.variant.value} does not use altruists")
    if alts:
        topo = topo.with_altruists(alts)
    return topo, flows


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    variant: str
    n_peers: int
    n_altruists: int
    duration_ns: int
    flows: list[tuple[int, int, int]]          # (src, dst, hops)
    flow_distances: list[float]
    delivered_bits: list[int]
    generated: list[int]
    delivered: list[int]
    dropped: list[int]
    in_flight: list[int]
    sojourn_ns: dict[int, dict[str, int]]    # node -> radio state -> ns
    node_kinds: dict[int, str]
    collisions: int = 0
    data_collisions: int = 0
    invs: int = 0
    invs_suppressed: int = 0
    ncfs: int = 0
    inv_aborts: int = 0
    frames: int = 0
    events: int = 0
    trace: list[tuple] | None = None
    wall_s: float = field(default=0.0, compare=False)

    @property
    def sim_time_s(self) -> float:
        return self.duration_ns * 1e-9

    @property
    def throughput_bps(self) -> float:
        if self.duration_ns == 0:
            return 0.0
        return aggregate_throughput(self.delivered_bits, self.sim_time_s)

    @property
    def flow_throughputs(self) -> list[float]:
        if self.duration_ns == 0:
            return [0.0] * len(self.delivered_bits)
        return [b / self.sim_time_s for b in self.delivered_bits]

    def ledger(self) -> EnergyLedger:
        led = EnergyLedger()
        for nid, per in self.sojourn_ns.items():
            for s, ns in per.items():
                led.add(nid, RadioState(s), ns * 1e-9)
        return led

    def node_powers(self) -> dict[int, float]:
        if self.duration_ns == 0:
            return {nid: 0.0 for nid in self.sojourn_ns}
        led = self.ledger()
        return {nid: node_power(led, nid) for nid in self.sojourn_ns}

    def _max_power(self, kind: str) -> float:
        p = [v for nid, v in self.node_powers().items() if self.node_kinds[nid] == kind]
        return max(p, default=0.0)

    @property
    def power_W_aggregate(self) -> float:
        return float(sum(self.node_powers().values()))

    @property
    def p_max_peer_W(self) -> float:
        return self._max_power(NodeKind.PEER.value)

    @property
    def p_max_alt_W(self) -> float:
        return self._max_power(NodeKind.ALTRUIST.value)

    @property
    def drops(self) -> int:
        return sum(self.dropped)

    @property
    def bmp(self) -> float:
        if self.duration_ns == 0:
            return 0.0
        return bmp(BmpInputs(self.flow_throughputs, self.flow_distances, self.n_peers,
                             self.n_altruists, self.p_max_peer_W, self.p_max_alt_W))

    def summary(self) -> dict:
        """Flat record in the run-result export schema."""
        return {
            "seed": self.seed, "variant": self.variant, "n_peers": self.n_peers,
            "n_altruists": self.n_altruists, "throughput_bps": self.throughput_bps,
            "power_W_aggregate": self.power_W_aggregate, "p_max_peer_W": self.p_max_peer_W,
            "p_max_alt_W": self.p_max_alt_W, "collisions": self.collisions, "invs": self.invs,
            "drops": self.drops, "sim_time_s": self.sim_time_s,
        }


# ---------------------------------------------------------------------------
# simulator internals
# ---------------------------------------------------------------------------

class _Packet:
    __slots__ = ("uid", "flow", "holder", "created")

    def __init__(self, uid, flow, holder, created):
        self.uid, self.flow, self.holder, self.created = uid, flow, holder, created


class _Tx:
    __slots__ = ("src", "frame", "channel", "start", "end", "receivers")

    def __init__(self, src, frame, channel, start, end):
        self.src, self.frame, self.channel, self.start, self.end = src, frame, channel, start, end
        self.receivers = []


class _Rx:
    __slots__ = ("tx", "node", "signal", "interference", "aborted")

    def __init__(self, tx, node, signal, interference):
        self.tx, self.node, self.signal, self.interference = tx, node, signal, interference
        self.aborted = False


class _Handshake:
    __slots__ = ("id", "role", "partner", "channel", "packet", "ccap_end",
                 "alarmed", "alarm_end", "inv")

    def __init__(self, hid, role, partner, channel, packet=None):
        self.id, self.role, self.partner, self.channel, self.packet = hid, role, partner, channel, packet
        self.ccap_end = -1
        self.alarmed = False
        self.alarm_end = 0
        self.inv = None


class _Node:
    __slots__ = ("id", "kind", "channel", "asleep", "engaged", "tx", "rx", "phase", "token",
                 "queue", "table", "hs", "retries", "cw", "defer_until", "inv_hs",
                 "bill", "bill_since", "acc")

    def __init__(self, nid, kind, cw):
        self.id, self.kind = nid, kind
        self.channel = CONTROL_CHANNEL
        self.asleep = False
        self.engaged = False
        self.tx = None
        self.rx = None
        self.phase = Phase.CONTROL_IDLE
        self.token = 0
        self.queue: deque[_Packet] = deque()
        self.table = ChannelUsageTable()
        self.hs: _Handshake | None = None
        self.retries = 0
        self.cw = cw
        self.defer_until = 0
        self.inv_hs = -1
        self.bill = RadioState.IDLE
        self.bill_since = 0
        self.acc = {s: 0 for s in RadioState}


class Simulator:
    """Event-driven run of one scenario.  Use :func:`run` for the one-liner."""

    def __init__(self, config: ScenarioConfig, topology: NetworkTopology | None = None,
                 flows: list[Flow] | None = None):
        self.cfg = config
        if topology is None or flows is None:
            topology, flows = build_scenario(config)
        self.topology = topology
        self.flows = flows
        self.variant = config.variant
        self.mac = config.mac
        self.radio = config.radio
        if topology.altruists and not self.variant.allows_altruists:
            raise ValueError(f"{self.variant.value} does not use altruists")

        mac_ss = _seed_streams(config.seed)[3]
        self.rng = random.Random(int(mac_ss.generate_state(1, np.uint64)[0]))
        self.q = EventQueue()

        ids = [n.id for n in topology.nodes]
        self.index = {nid: k for k, nid in enumerate(ids)}
        self.nodes = [_Node(n.id, n.kind, self.mac.cw_min) for n in topology.nodes]
        xy = np.array([(n.pos.x, n.pos.y) for n in topology.nodes], float).reshape(-1, 2)
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        r, ir = self.radio.tx_range, self.radio.interference_range
        self.dist = d
        self.in_tx = (d <= r).tolist()
        self.in_if = (d <= ir).tolist()
        self.pw = (np.maximum(d, 1.0) ** -self.radio.path_loss_exponent).tolist()
        n = len(ids)
        self.if_nbrs = [[j for j in range(n) if j != i and self.in_if[i][j]] for i in range(n)]
        self.cs_idx = [np.array([j for j in range(n) if self.in_if[i][j]], int) for i in range(n)]
        self.capture = self.radio.capture_ratio
        self.active: dict[int, list[_Tx]] = {c: [] for c in [CONTROL_CHANNEL] + config.data_channels}
        self.last_busy = np.full(n, -(10 ** 18), dtype=np.int64)

        self.t_ctrl = self.mac.frame_ns(FrameKind.PRA)
        self.t_inv = self.mac.frame_ns(FrameKind.INV)
        self.t_dataf = self.mac.frame_ns(FrameKind.DATA)
        self.t_ack = self.mac.frame_ns(FrameKind.ACK)
        self.t_data = self.mac.data_duration()
        self.data_channels = config.data_channels

        self.flow_of_src = {}
        self.gen = [0] * len(flows)
        self.deliv = [0] * len(flows)
        self.drop = [0] * len(flows)
        self.deliv_bits = [0] * len(flows)
        for k, f in enumerate(flows):
            self.flow_of_src.setdefault(f.src, []).append(k)
        self.total_generated = 0
        self._uid = 0
        self._hid = 0
        self.stopped = False
        self.stop_time = None
        self.stats = dict(collisions=0, data_collisions=0, invs=0, invs_suppressed=0,
                          ncfs=0, inv_aborts=0, frames=0)
        self.trace = [] if config.trace else None
        self.peers_sleep = self.variant.peers_sleep
        self._bill_lut = {(k, p, e): psm_radio_policy(self.variant, k, p, e)
                          for k in NodeKind for p in RadioState for e in (False, True)}

        for nd in self.nodes:
            if nd.kind is NodeKind.PEER and self.variant.peers_sleep:
                nd.asleep = True
            nd.bill = self._billed(nd)

    # -- helpers -----------------------------------------------------------

    @property
    def now(self) -> int:
        return self.q.now

    def _physical(self, nd: _Node) -> RadioState:
        if nd.tx is not None:
            return RadioState.TX
        if nd.rx is not None:
            return RadioState.RX
        return RadioState.SLEEP if nd.asleep else RadioState.IDLE

    def _billed(self, nd: _Node) -> RadioState:
        return self._bill_lut[nd.kind, self._physical(nd), nd.engaged]

    def _rebill(self, nd: _Node) -> None:
        if nd.tx is not None:
            phys = RadioState.TX
        elif nd.rx is not None:
            phys = RadioState.RX
        else:
            phys = RadioState.SLEEP if nd.asleep else RadioState.IDLE
        b = self._bill_lut[nd.kind, phys, nd.engaged]
        if b is not nd.bill:
            now = self.q.now
            nd.acc[nd.bill] += now - nd.bill_since
            nd.bill, nd.bill_since = b, now

    def _set_engaged(self, nd: _Node, engaged: bool) -> None:
        nd.engaged = engaged
        if self.peers_sleep and nd.kind is NodeKind.PEER:
            asleep = not engaged
            if asleep and nd.rx is not None:
                nd.rx.aborted = True
                nd.rx = None
            nd.asleep = asleep
        self._rebill(nd)

    def _timer(self, nd: _Node, delay: int, fn, *args) -> None:
        nd.token += 1
        self.q.schedule(self.q.now + delay, self._fire, nd, nd.token, fn, args)

    def _fire(self, nd, token, fn, args):
        if token == nd.token:
            fn(nd, *args)

    def _cancel(self, nd: _Node) -> None:
        nd.token += 1

    def _channel_idle(self, nd: _Node, since: int) -> bool:
        k = self.index[nd.id]
        if self.last_busy[k] > since:
            return False
        horizon = self.q.now - self.mac.cca_delay
        for tx in self.active[CONTROL_CHANNEL]:
            if self.in_if[self.index[tx.src]][k] and tx.start <= horizon:
                return False
        return True

    def _switch(self, nd: _Node, channel: int) -> None:
        if nd.channel != channel:
            if nd.rx is not None:
                nd.rx.aborted = True
                nd.rx = None
                self._rebill(nd)
            nd.channel = channel

    # -- physical layer ----------------------------------------------------

    def _start_tx(self, nd: _Node, frame: Frame, channel: int) -> None:
        i = self.index[nd.id]
        if nd.rx is not None:
            nd.rx.aborted = True
            nd.rx = None
        dur = self.mac.frame_ns(frame.kind)
        tx = _Tx(nd.id, frame, channel, self.q.now, self.q.now + dur)
        others = self.active[channel]
        nd.tx = tx
        self._rebill(nd)
        in_tx_i, pw_i = self.in_tx[i], self.pw[i]
        wake_dst = frame.kind is FrameKind.PRA and self.peers_sleep
        is_inv = frame.kind is FrameKind.INV
        for j in self.if_nbrs[i]:
            m = self.nodes[j]
            if m.rx is not None:
                if m.rx.tx.channel == channel:
                    m.rx.interference += pw_i[j]
                continue
            if m.tx is not None or m.channel != channel or not in_tx_i[j]:
                continue
            if m.asleep:
                if not (wake_dst and frame.dst == m.id):
                    continue
                self._set_engaged(m, True)   # ideal wake-on-request
            interf = 0.0
            for o in others:
                k = self.index[o.src]
                if self.in_if[k][j]:
                    interf += self.pw[k][j]
            rx = _Rx(tx, m, pw_i[j], interf)
            m.rx = rx
            tx.receivers.append(rx)
            self._rebill(m)
        if is_inv:
            for j in self.if_nbrs[i]:
                m = self.nodes[j]
                hs = m.hs
                if (hs is not None and in_tx_i[j] and m.channel == CONTROL_CHANNEL and m.tx is None
                        and m.phase in (Phase.CCAP_WAIT, Phase.AWAIT_CFA) and self.q.now <= hs.ccap_end):
                    hs.alarmed = True
                    hs.alarm_end = max(hs.alarm_end, tx.end)
        others.append(tx)
        self.stats["frames"] += 1
        self.q.schedule(tx.end, self._end_tx, tx)

    def _end_tx(self, tx: _Tx) -> None:
        self.active[tx.channel].remove(tx)
        src = self.nodes[self.index[tx.src]]
        src.tx = None
        self._rebill(src)
        if tx.channel == CONTROL_CHANNEL:
            self.last_busy[self.cs_idx[self.index[tx.src]]] = self.q.now
        f = tx.frame
        ok_nodes = []
        dst_outcome = NOT_HEARD
        for rx in tx.receivers:
            if rx.aborted:
                continue
            m = rx.node
            m.rx = None
            self._rebill(m)
            good = _captures(rx.signal, rx.interference, self.capture)
            if good:
                ok_nodes.append(m)
            if m.id == f.dst:
                dst_outcome = OK if good else COLLIDED
        if f.dst != BROADCAST and dst_outcome == COLLIDED:
            self.stats["collisions"] += 1
            if f.kind is FrameKind.DATA:
                self.stats["data_collisions"] += 1
        if self.trace is not None:
            out = OK if f.dst == BROADCAST else (OK if dst_outcome == OK else COLLIDED)
            self.trace.append((tx.start, f.src, f.dst, f.kind.value, tx.channel, out))

        self._after_tx(src, f)
        if f.kind in (FrameKind.PRA, FrameKind.PRB):
            self._cooperate(f, ok_nodes)
        informative = f.kind in _TABLE_KINDS
        for m in ok_nodes:
            if informative or m.id == f.dst:
                self._receive(m, f)
        if f.kind is FrameKind.PRA and self.variant.peers_sleep and f.dst != BROADCAST:
            m = self.nodes[self.index[f.dst]]
            if m.engaged and m.phase in UNENGAGED:
                self._set_engaged(m, False)   # woken for nothing: back to sleep

    # -- traffic -----------------------------------------------------------

    def _new_packet(self, fk: int) -> None:
        if self.stopped:
            return
        flow = self.flows[fk]
        holder = self.nodes[self.index[flow.src]]
        pkt = _Packet(self._uid, fk, flow.src, self.q.now)
        self._uid += 1
        holder.queue.append(pkt)
        self.gen[fk] += 1
        self.total_generated += 1
        if self.total_generated >= self.cfg.stop_after:
            self.stopped = True
            self.stop_time = self.q.now

    def _arrival(self, fk: int) -> None:
        if self.stopped:
            return
        self._new_packet(fk)
        nd = self.nodes[self.index[self.flows[fk].src]]
        if nd.phase is Phase.CONTROL_IDLE:
            self._try_start(nd, backoff=False)
        self._schedule_arrival(fk)

    def _schedule_arrival(self, fk: int) -> None:
        lam = self.flows[fk].rate_bps / self.mac.payload_bits
        gap = max(1, round(self.rng.expovariate(lam) * 1e9))
        self.q.schedule(self.q.now + gap, self._arrival, fk)

    def _pop_packet(self, nd: _Node, delivered_downstream: bool) -> None:
        pkt = nd.queue.popleft()
        if not delivered_downstream and pkt.holder == nd.id:
            self.drop[pkt.flow] += 1
            pkt.holder = None
        if self.cfg.saturated and self.flows[pkt.flow].src == nd.id \
                and not any(p.flow == pkt.flow for p in nd.queue):
            self._new_packet(pkt.flow)

    # -- MAC state machine: sender side -------------------------------------

    def _blocked_until(self, nd: _Node, dst: int) -> int | None:
        if nd.defer_until > self.q.now:
            return nd.defer_until
        if not self.variant.uses_table:
            return None
        t = nd.table.node_busy_until(dst, self.q.now)
        if t is not None:
            return t
        busy = nd.table.busy_channels(self.q.now)
        if all(c in busy for c in self.data_channels):
            return nd.table.next_release(self.q.now)
        return None

    def _next_hop(self, nd: _Node, pkt: _Packet) -> int:
        route = self.flows[pkt.flow].route
        return route[route.index(nd.id) + 1]

    def _try_start(self, nd: _Node, backoff: bool) -> None:
        if self.stopped:
            return
        if not nd.queue:
            nd.phase = Phase.CONTROL_IDLE
            self._cancel(nd)
            self._set_engaged(nd, False)
            return
        dst = self._next_hop(nd, nd.queue[0])
        until = self._blocked_until(nd, dst)
        if until is not None:
            nd.phase = Phase.DEFER
            self._set_engaged(nd, False)
            self._timer(nd, until - self.q.now, self._defer_done)
            return
        nd.phase = Phase.CONTEND
        self._set_engaged(nd, True)
        delay = self.mac.difs
        if backoff:
            delay += self.rng.randint(0, nd.cw) * self.mac.slot
        self._timer(nd, delay, self._contend_fire, self.q.now + delay - self.mac.difs)

    def _defer_done(self, nd: _Node) -> None:
        nd.phase = Phase.CONTROL_IDLE
        self._try_start(nd, backoff=True)

    def _contend_fire(self, nd: _Node, sense_from: int) -> None:
        if self.stopped:
            return
        if nd.tx is not None or not self._channel_idle(nd, sense_from):
            delay = self.mac.difs + self.rng.randint(0, nd.cw) * self.mac.slot
            self._timer(nd, delay, self._contend_fire, self.q.now + delay - self.mac.difs)
            return
        pkt = nd.queue[0]
        dst = self._next_hop(nd, pkt)
        if self._blocked_until(nd, dst) is not None:
            self._try_start(nd, backoff=True)
            return
        ch = select_channel(self.variant, nd.table, self.data_channels, self.q.now, self.rng)
        self._hid += 1
        nd.hs = _Handshake(self._hid, "sender", dst, ch, pkt)
        nd.phase = Phase.AWAIT_PRB
        self._start_tx(nd, Frame(FrameKind.PRA, nd.id, dst, ch, hs=nd.hs.id), CONTROL_CHANNEL)

    def _fail(self, nd: _Node, collided: bool, defer_until: int | None = None) -> None:
        nd.hs = None
        self._switch(nd, CONTROL_CHANNEL)
        nd.retries += 1
        if collided:
            nd.cw = min(2 * nd.cw + 1, self.mac.cw_max)
        if defer_until is not None:
            nd.defer_until = defer_until
        if nd.retries > self.mac.retry_limit:
            nd.retries = 0
            nd.cw = self.mac.cw_min
            self._pop_packet(nd, delivered_downstream=False)
        nd.phase = Phase.CONTROL_IDLE
        self._try_start(nd, backoff=True)

    def _succeed(self, nd: _Node) -> None:
        nd.hs = None
        nd.retries = 0
        nd.cw = self.mac.cw_min
        self._switch(nd, CONTROL_CHANNEL)
        self._pop_packet(nd, delivered_downstream=True)
        nd.phase = Phase.CONTROL_IDLE
        self._try_start(nd, backoff=False)

    def _ccap_done(self, nd: _Node) -> None:
        hs = nd.hs
        if hs.alarmed:
            nd.phase = Phase.INV_ABORT
            self.stats["inv_aborts"] += 1
            self._timer(nd, hs.alarm_end - self.q.now + 1, self._inv_abort_done)
            return
        until = self.q.now + 2 * self.t_ctrl + self.mac.sifs + self.mac.switch_delay + self.t_data
        nd.phase = Phase.AWAIT_CFB
        self._cancel(nd)
        self._start_tx(nd, Frame(FrameKind.CFA, nd.id, hs.partner, hs.channel, until, hs=hs.id),
                       CONTROL_CHANNEL)

    def _inv_abort_done(self, nd: _Node) -> None:
        b = on_inv_received("sender", Phase.CCAP_WAIT, nd.hs.inv, self.q.now, self.t_data)
        if b.entry is not None:
            nd.table.record(b.entry)
            self._fail(nd, collided=False)
        else:
            self._fail(nd, collided=False, defer_until=b.until)

    # -- MAC state machine: frame completion ---------------------------------

    def _after_tx(self, nd: _Node, f: Frame) -> None:
        k = f.kind
        if nd.hs is None or f.hs != nd.hs.id:
            return
        if k is FrameKind.PRA:
            self._timer(nd, self.mac.sifs + self.t_ctrl + 1, self._fail, True)
        elif k is FrameKind.PRB:
            nd.phase = Phase.AWAIT_CFA
            nd.hs.ccap_end = self.q.now + self.mac.ccap
            self._timer(nd, self.mac.ccap + self.t_ctrl + 1, self._receiver_done)
        elif k is FrameKind.CFA:
            self._timer(nd, self.mac.sifs + self.t_ctrl + 1, self._cfb_timeout)
        elif k is FrameKind.CFB:
            self._switch(nd, nd.hs.channel)
            nd.phase = Phase.AWAIT_DATA
            self._timer(nd, self.mac.switch_delay + self.mac.sifs + self.t_dataf + 1,
                        self._receiver_done)
        elif k is FrameKind.DATA:
            self._timer(nd, self.mac.sifs + self.t_ack + 1, self._fail, True)
        elif k is FrameKind.ACK:
            self._receiver_done(nd)
        elif k is FrameKind.NCF:
            self._fail(nd, collided=True)

    def _cfb_timeout(self, nd: _Node) -> None:
        hs = nd.hs
        nd.phase = Phase.NCF_TX
        self.stats["ncfs"] += 1
        self._start_tx(nd, Frame(FrameKind.NCF, nd.id, BROADCAST, hs.channel, hs=hs.id),
                       CONTROL_CHANNEL)

    def _receiver_done(self, nd: _Node) -> None:
        nd.hs = None
        self._cancel(nd)
        self._switch(nd, CONTROL_CHANNEL)
        nd.phase = Phase.CONTROL_IDLE
        self._try_start(nd, backoff=True)

    def _send(self, nd: _Node, kind: FrameKind, until: int = 0) -> None:
        hs = nd.hs
        ch = CONTROL_CHANNEL if kind in (FrameKind.PRB, FrameKind.CFB) else hs.channel
        self._start_tx(nd, Frame(kind, nd.id, hs.partner, hs.channel, until, hs=hs.id,
                                 packet=hs.packet if kind is FrameKind.DATA else None), ch)

    # -- MAC state machine: reception ---------------------------------------

    def _receive(self, nd: _Node, f: Frame) -> None:
        now = self.q.now
        mine = f.dst == nd.id
        if f.kind in _TABLE_KINDS:
            if (not mine and self.variant.overhears(nd.kind)) or (mine and f.kind is FrameKind.INV):
                update_table(nd.table, f, now)
        if nd.kind is NodeKind.ALTRUIST:
            return
        hs = nd.hs
        k = f.kind
        if k is FrameKind.INV:
            if hs is not None and f.hs == hs.id and nd.phase is Phase.INV_ABORT and hs.inv is None:
                hs.inv = f
            return
        if not mine:
            return
        if k is FrameKind.PRA:
            if nd.phase in MAY_COOPERATE and nd.channel == CONTROL_CHANNEL and nd.tx is None:
                ch = receiver_channel(self.variant, nd.table, f.channel, self.data_channels,
                                      now, self.rng)
                if ch is None:
                    return
                self._cancel(nd)
                nd.hs = _Handshake(f.hs, "receiver", f.src, ch)
                nd.phase = Phase.SEND_PRB
                self._set_engaged(nd, True)
                self._timer(nd, self.mac.sifs, self._send, FrameKind.PRB)
            return
        if hs is None or f.hs != hs.id or f.src != hs.partner:
            return
        if k is FrameKind.PRB and nd.phase is Phase.AWAIT_PRB:
            hs.channel = f.channel
            hs.ccap_end = now + self.mac.ccap
            nd.phase = Phase.CCAP_WAIT
            self._timer(nd, self.mac.ccap, self._ccap_done)
        elif k is FrameKind.CFA and nd.phase is Phase.AWAIT_CFA:
            if hs.alarmed:
                self._receiver_done(nd)     # suppress CFB; the sender will time out
                return
            until = now + self.mac.sifs + self.t_ctrl + self.mac.switch_delay + self.t_data
            nd.phase = Phase.SEND_CFB
            self._timer(nd, self.mac.sifs, self._send, FrameKind.CFB, until)
        elif k is FrameKind.CFB and nd.phase is Phase.AWAIT_CFB:
            self._switch(nd, hs.channel)
            nd.phase = Phase.DATA_TX
            self._timer(nd, self.mac.switch_delay + self.mac.sifs, self._send, FrameKind.DATA)
        elif k is FrameKind.DATA and nd.phase is Phase.AWAIT_DATA:
            self._accept(nd, f.packet, f.src)
            nd.phase = Phase.SEND_ACK
            self._timer(nd, self.mac.sifs, self._send, FrameKind.ACK)
        elif k is FrameKind.ACK and nd.phase is Phase.DATA_TX:
            self._cancel(nd)
            self._succeed(nd)

    def _accept(self, nd: _Node, pkt: _Packet, sender: int) -> None:
        # a retransmission of something already taken over is just re-acknowledged
        if pkt.holder == sender:
            flow = self.flows[pkt.flow]
            pkt.holder = nd.id
            if nd.id == flow.dst:
                self.deliv[pkt.flow] += 1
                self.deliv_bits[pkt.flow] += self.mac.payload_bits
                pkt.holder = None
            else:
                nd.queue.append(pkt)

    # -- cooperation ----------------------------------------------------------

    def _cooperate(self, f: Frame, heard: list[_Node]) -> None:
        v = self.variant
        if v in (ProtocolVariant.NON_DISH, ProtocolVariant.NON_DISH_PSM):
            return
        now = self.q.now
        found = {}
        for m in heard:
            if m.id in (f.src, f.dst) or m.inv_hs == f.hs:
                continue
            if m.kind is NodeKind.PEER:
                if v is ProtocolVariant.ALTRUISTIC or m.phase not in MAY_COOPERATE:
                    continue
            mcc = detect_mcc(m.table, f, now)
            if mcc is not None:
                found[m.id] = (m, mcc)
        if not found:
            return
        pick = best_neighbor({nid: p for nid, (_, p) in found.items()}) \
            if v is ProtocolVariant.GENIE_IN_SITU else None
        # CCAP opens when the PRB ends
        window = now + self.mac.sifs + self.t_ctrl if f.kind is FrameKind.PRA else now
        for nid in sorted(found):
            m, mcc = found[nid]
            act = cooperation_policy(v, m.kind, mcc, self.rng, self.mac.ccap,
                                     genie_pick=(pick is None or nid == pick))
            if act is None:
                continue
            m.inv_hs = f.hs
            inv = Frame(FrameKind.INV, m.id, f.src, mcc.entry.channel, usage=mcc.entry, hs=f.hs)
            # +1 ns keeps the INV behind the PRB's own end-of-frame event
            self.q.schedule(window + max(1, act.wait), self._inv_fire, m, inv, window)

    def _inv_fire(self, m: _Node, inv: Frame, window: int) -> None:
        if self.stopped:
            return
        eligible = (m.tx is None and m.channel == CONTROL_CHANNEL and not m.asleep
                    and (m.kind is NodeKind.ALTRUIST or m.phase in MAY_COOPERATE))
        if eligible and self._channel_idle(m, window):
            self.stats["invs"] += 1
            self._start_tx(m, inv, CONTROL_CHANNEL)
        else:
            self.stats["invs_suppressed"] += 1
            if self.trace is not None:
                self.trace.append((self.q.now, inv.src, inv.dst, inv.kind.value,
                                   CONTROL_CHANNEL, SUPPRESSED))

    # -- driver --------------------------------------------------------------

    def run(self) -> RunResult:
        import time as _time
        wall0 = _time.perf_counter()
        limit = None if self.cfg.max_time_s is None else round(self.cfg.max_time_s * 1e9)
        if self.cfg.stop_after <= 0:
            self.stopped, self.stop_time = True, 0
        else:
            for k, fl in enumerate(self.flows):
                if self.cfg.saturated:
                    self._new_packet(k)
                elif fl.rate_bps > 0:
                    self._schedule_arrival(k)
            if self.cfg.saturated:
                for nd in self.nodes:
                    if nd.queue and not self.stopped:
                        self._try_start(nd, backoff=False)
        q = self.q
        while not self.stopped and len(q):
            if limit is not None and q._heap[0][0] > limit:
                q.now = limit
                self.stopped, self.stop_time = True, limit
                break
            _, _, handler, args = q.pop()
            handler(*args)
        if self.stop_time is not None:
            end = self.stop_time
        else:
            end = self.q.now if limit is None else limit   # ran dry before the cap
        q.now = end
        for nd in self.nodes:
            nd.acc[nd.bill] += end - nd.bill_since
            nd.bill_since = end
        return self._result(end, _time.perf_counter() - wall0)

    def _in_flight(self) -> list[int]:
        counts = [0] * len(self.flows)
        for nd in self.nodes:
            for p in nd.queue:
                if p.holder == nd.id:
                    counts[p.flow] += 1
        return counts

    def _result(self, end: int, wall: float) -> RunResult:
        t = self.topology
        return RunResult(
            seed=self.cfg.seed, variant=self.variant.value,
            n_peers=len(t.peers), n_altruists=len(t.altruists), duration_ns=end,
            flows=[(f.src, f.dst, f.hops) for f in self.flows],
            flow_distances=[t.distance(f.src, f.dst) for f in self.flows],
            delivered_bits=list(self.deliv_bits), generated=list(self.gen),
            delivered=list(self.deliv), dropped=list(self.drop), in_flight=self._in_flight(),
            sojourn_ns={nd.id: {s.value: v for s, v in nd.acc.items()} for nd in self.nodes},
            node_kinds={nd.id: nd.kind.value for nd in self.nodes},
            events=self.q.popped, trace=self.trace, wall_s=wall, **self.stats,
        )


def run(config: ScenarioConfig) -> RunResult:
    """Build the scenario for ``config`` and simulate it to completion."""
    return Simulator(config).run()
