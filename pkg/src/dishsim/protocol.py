"""MAC building blocks shared by every protocol variant.

A handshake runs on the control channel::

    DIFS | PRA | SIFS | PRB | CCAP | CFA | SIFS | CFB | switch | SIFS | DATA | SIFS | ACK

Neighbors that spot a multi-channel coordination (MCC) problem in a PRA or PRB
send an INV during the CCAP window; the sender or receiver then gives up the
attempt.  Everything here is pure: the event engine owns time and radios and
calls into these functions for decisions.

Times are integer nanoseconds unless a name says otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .topology import NodeKind

BROADCAST = -1
CONTROL_CHANNEL = 0
NS_PER_US = 1000


class ProtocolVariant(str, enum.Enum):
    DISH_P = "dish-p"
    NON_DISH = "non-dish"
    NON_DISH_PSM = "non-dish-psm"
    GENIE_IN_SITU = "genie"
    ALTRUISTIC = "altruistic"

    @property
    def peers_sleep(self) -> bool:
        """Peers turn the radio off whenever they are not handling their own traffic."""
        return self in (ProtocolVariant.NON_DISH_PSM, ProtocolVariant.ALTRUISTIC)

    @property
    def allows_altruists(self) -> bool:
        return self is ProtocolVariant.ALTRUISTIC

    def overhears(self, kind: NodeKind) -> bool:
        """Whether a node of ``kind`` caches control frames not addressed to it."""
        if kind is NodeKind.ALTRUIST:
            return True
        return not self.peers_sleep

    @property
    def uses_table(self) -> bool:
        return self is not ProtocolVariant.NON_DISH_PSM


class FrameKind(str, enum.Enum):
    PRA = "PRA"
    PRB = "PRB"
    CFA = "CFA"
    CFB = "CFB"
    INV = "INV"
    NCF = "NCF"
    DATA = "DATA"
    ACK = "ACK"


class RadioState(str, enum.Enum):
    TX = "tx"
    RX = "rx"
    IDLE = "idle"
    SLEEP = "sleep"


class Phase(str, enum.Enum):
    """Per-node handshake phase."""

    CONTROL_IDLE = "control-idle"
    DEFER = "defer"            # waiting for a known-busy receiver or channel
    CONTEND = "contend"        # DIFS / random backoff before PRA
    AWAIT_PRB = "await-prb"
    CCAP_WAIT = "ccap-wait"
    AWAIT_CFB = "await-cfb"
    NCF_TX = "ncf-tx"
    INV_ABORT = "inv-abort"    # alarmed during CCAP, waiting to decode the INV
    DATA_TX = "data-tx"        # sender on the data channel
    # receiver side
    SEND_PRB = "send-prb"
    AWAIT_CFA = "await-cfa"
    SEND_CFB = "send-cfb"
    AWAIT_DATA = "await-data"
    SEND_ACK = "send-ack"


#: Phases in which a peer is not engaged in its own handshake.
UNENGAGED = frozenset({Phase.CONTROL_IDLE, Phase.DEFER})
#: Phases in which a peer may volunteer an INV for somebody else's handshake.
MAY_COOPERATE = frozenset({Phase.CONTROL_IDLE, Phase.DEFER, Phase.CONTEND})


class UsageEntry(NamedTuple):
    channel: int
    sender: int
    receiver: int
    release: int

    @property
    def pair(self) -> frozenset:
        return frozenset((self.sender, self.receiver))


@dataclass(frozen=True, slots=True)
class Frame:
    kind: FrameKind
    src: int
    dst: int
    channel: int = 0               # proposed / confirmed data channel
    until: int = 0                 # reservation end (CFA/CFB)
    usage: UsageEntry | None = None  # INV only
    hs: int = -1                   # handshake id, shared by one attempt's frames
    packet: object = None          # DATA only

    @property
    def pair(self) -> frozenset:
        return frozenset((self.src, self.dst))


ControlFrame = Frame


@dataclass(frozen=True)
class MacParams:
    """Frame sizes and interframe spaces.

    SIFS and CCAP follow the reference setup; DIFS, the control frame sizes and
    the contention window are our own choices.
    """

    bandwidth_bps: float = 1e6
    payload_bytes: int = 2048
    plcp_bytes: int = 15
    ctrl_bytes: int = 20          # PRA/PRB/CFA/CFB/NCF and the DATA/ACK MAC header
    inv_bytes: int = 30
    sifs_us: float = 10
    difs_us: float = 50
    ccap_us: float = 35
    slot_us: float = 20
    cca_delay_us: float = 5
    switch_delay_us: float = 0
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 7

    def _air_ns(self, nbytes: int) -> int:
        return round(nbytes * 8 * 1e9 / self.bandwidth_bps)

    def frame_ns(self, kind: FrameKind) -> int:
        if kind is FrameKind.INV:
            return self._air_ns(self.inv_bytes + self.plcp_bytes)
        if kind is FrameKind.DATA:
            return self._air_ns(self.payload_bytes + self.ctrl_bytes + self.plcp_bytes)
        return self._air_ns(self.ctrl_bytes + self.plcp_bytes)

    @property
    def sifs(self) -> int:
        return round(self.sifs_us * NS_PER_US)

    @property
    def difs(self) -> int:
        return round(self.difs_us * NS_PER_US)

    @property
    def ccap(self) -> int:
        return round(self.ccap_us * NS_PER_US)

    @property
    def slot(self) -> int:
        return round(self.slot_us * NS_PER_US)

    @property
    def cca_delay(self) -> int:
        return round(self.cca_delay_us * NS_PER_US)

    @property
    def switch_delay(self) -> int:
        return round(self.switch_delay_us * NS_PER_US)

    @property
    def payload_ns(self) -> int:
        return self._air_ns(self.payload_bytes)

    @property
    def payload_bits(self) -> int:
        return self.payload_bytes * 8

    def control_duration(self, include_difs: bool = True) -> int:
        """PRA through CFB, optionally preceded by DIFS."""
        c = self.frame_ns(FrameKind.PRA)
        t = 4 * c + 2 * self.sifs + self.ccap
        return t + self.difs if include_difs else t

    def data_duration(self) -> int:
        """SIFS, DATA, SIFS, ACK on the data channel (switching excluded)."""
        return 2 * self.sifs + self.frame_ns(FrameKind.DATA) + self.frame_ns(FrameKind.ACK)

    def cycle_duration(self) -> int:
        """One uncontended handshake plus data exchange."""
        return self.control_duration(True) + self.switch_delay + self.data_duration()


class TimelineStep(NamedTuple):
    name: str
    start: int
    duration: int
    channel: str   # "control" or "data"


def handshake_timeline(params: MacParams = MacParams()) -> list[TimelineStep]:
    """Uncontended schedule of one successful exchange, starting at t = 0."""
    f = params.frame_ns
    steps = [
        ("DIFS", params.difs, "control"), ("PRA", f(FrameKind.PRA), "control"),
        ("SIFS", params.sifs, "control"), ("PRB", f(FrameKind.PRB), "control"),
        ("CCAP", params.ccap, "control"), ("CFA", f(FrameKind.CFA), "control"),
        ("SIFS", params.sifs, "control"), ("CFB", f(FrameKind.CFB), "control"),
        ("SWITCH", params.switch_delay, "data"), ("SIFS", params.sifs, "data"),
        ("DATA", f(FrameKind.DATA), "data"), ("SIFS", params.sifs, "data"),
        ("ACK", f(FrameKind.ACK), "data"),
    ]
    out, t = [], 0
    for name, dur, ch in steps:
        out.append(TimelineStep(name, t, dur, ch))
        t += dur
    return out


class ChannelUsageTable:
    """Cache of overheard data-channel reservations, one entry per (channel, pair)."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Iterable[UsageEntry] = ()):
        self._entries: dict[tuple[int, frozenset], UsageEntry] = {}
        for e in entries:
            self.record(e)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(sorted(self._entries.values()))

    def __contains__(self, entry):
        return self._entries.get((entry[0], frozenset(entry[1:3]))) == entry

    def record(self, entry: UsageEntry) -> None:
        self._entries[(entry.channel, entry.pair)] = entry

    def forget_sender(self, sender: int, channel: int | None = None) -> None:
        for k, e in list(self._entries.items()):
            if e.sender == sender and (channel is None or e.channel == channel):
                del self._entries[k]

    def prune(self, now: int) -> None:
        for k, e in list(self._entries.items()):
            if e.release < now:
                del self._entries[k]

    def active(self, now: int) -> list[UsageEntry]:
        return [e for e in self._entries.values() if e.release > now]

    def on_channel(self, channel: int, now: int, exclude_pair=None) -> list[UsageEntry]:
        return [e for e in self._entries.values()
                if e.channel == channel and e.release > now and e.pair != exclude_pair]

    def involving(self, node: int, now: int, exclude_pair=None) -> list[UsageEntry]:
        return [e for e in self._entries.values()
                if node in (e.sender, e.receiver) and e.release > now and e.pair != exclude_pair]

    def busy_channels(self, now: int) -> set[int]:
        return {e.channel for e in self._entries.values() if e.release > now}

    def node_busy_until(self, node: int, now: int) -> int | None:
        rel = [e.release for e in self.involving(node, now)]
        return max(rel) if rel else None

    def next_release(self, now: int) -> int | None:
        rel = [e.release for e in self._entries.values() if e.release > now]
        return min(rel) if rel else None


def update_table(table: ChannelUsageTable, frame: Frame, now: int) -> ChannelUsageTable:
    """Fold one correctly received control frame into ``table`` (in place)."""
    k = frame.kind
    if k is FrameKind.CFA:
        table.record(UsageEntry(frame.channel, frame.src, frame.dst, frame.until))
    elif k is FrameKind.CFB:
        table.record(UsageEntry(frame.channel, frame.dst, frame.src, frame.until))
    elif k is FrameKind.NCF:
        table.forget_sender(frame.src, frame.channel)
    elif k is FrameKind.INV and frame.usage is not None:
        table.record(frame.usage)
    table.prune(now)
    return table


class MccKind(str, enum.Enum):
    CHANNEL_CONFLICT = "channel-conflict"
    DEAF_TERMINAL = "deaf-terminal"


class MccProblem(NamedTuple):
    kind: MccKind
    target: int        # conflicted channel, or the deaf receiver's id
    entry: UsageEntry  # the blocking reservation (longest residual time)


def _latest(entries):
    # longest residual time; ties to the lowest (sender, receiver, channel)
    return max(entries, key=lambda e: (e.release, -e.sender, -e.receiver, -e.channel))


def detect_mcc(table: ChannelUsageTable, frame: Frame, now: int) -> MccProblem | None:
    """Check a PRA or PRB against the detector's table.

    A deaf receiver is reported ahead of a channel conflict: while the receiver
    sits on a data channel no choice of channel can help.
    """
    if frame.kind not in (FrameKind.PRA, FrameKind.PRB):
        return None
    pair = frame.pair
    if frame.kind is FrameKind.PRA:
        deaf = table.involving(frame.dst, now, exclude_pair=pair)
        if deaf:
            return MccProblem(MccKind.DEAF_TERMINAL, frame.dst, _latest(deaf))
    busy = table.on_channel(frame.channel, now, exclude_pair=pair)
    if busy:
        return MccProblem(MccKind.CHANNEL_CONFLICT, frame.channel, _latest(busy))
    return None


class InvAction(NamedTuple):
    wait: int   # carrier-sensed delay inside the CCAP window


def cooperation_policy(variant: ProtocolVariant, detector_kind: NodeKind,
                       mcc: MccProblem | None, rng, ccap: int,
                       genie_pick: bool = True) -> InvAction | None:
    """Decide whether a detector volunteers an INV and after what CCAP wait.

    ``genie_pick`` tells a Genie In-Situ peer whether the genie chose it.
    ``rng`` needs a ``randint(a, b)`` method (``random.Random`` works).
    """
    if detector_kind is NodeKind.ALTRUIST and not variant.allows_altruists:
        raise ValueError(f"altruists do not exist under {variant.value}")
    if mcc is None:
        return None
    if variant is ProtocolVariant.DISH_P:
        pass
    elif variant is ProtocolVariant.GENIE_IN_SITU:
        if not genie_pick:
            return None
    elif variant is ProtocolVariant.ALTRUISTIC:
        if detector_kind is not NodeKind.ALTRUIST:
            return None
    else:
        return None
    return InvAction(rng.randint(0, ccap))


def best_neighbor(detections: Mapping[int, MccProblem | None]) -> int | None:
    """Neighbor holding the blocking entry with the latest release; ties to lowest id."""
    best = None
    for nid in sorted(detections):
        p = detections[nid]
        if p is None:
            continue
        if best is None or p.entry.release > detections[best].entry.release:
            best = nid
    return best


class Backoff(NamedTuple):
    until: int
    entry: UsageEntry | None   # decoded blocking reservation, if any


INV_SENSITIVE = {
    "sender": frozenset({Phase.CCAP_WAIT, Phase.AWAIT_CFB}),
    "receiver": frozenset({Phase.AWAIT_CFA}),
}


def on_inv_received(role: str, phase: Phase, inv: Frame | None, now: int,
                    estimated_backoff: int) -> Backoff | None:
    """Reaction of a handshake endpoint to an INV (``inv=None``: sensed but undecodable).

    Returns ``None`` when the INV arrives too late to matter (CFB already sent).
    """
    if phase not in INV_SENSITIVE[role]:
        return None
    if inv is not None and inv.usage is not None:
        return Backoff(max(inv.usage.release, now), inv.usage)
    return Backoff(now + estimated_backoff, None)


def select_channel(variant: ProtocolVariant, table: ChannelUsageTable,
                   data_channels: list[int], now: int, rng) -> int | None:
    """Uniform pick among channels the node believes free; ``None`` if all look busy."""
    if not variant.uses_table:
        return data_channels[rng.randrange(len(data_channels))]
    busy = table.busy_channels(now)
    free = [c for c in data_channels if c not in busy]
    if not free:
        return None
    return free[rng.randrange(len(free))]


def receiver_channel(variant: ProtocolVariant, table: ChannelUsageTable, proposed: int,
                     data_channels: list[int], now: int, rng) -> int | None:
    """Receiver's final say: keep the sender's proposal unless it looks busy."""
    if not variant.uses_table or proposed not in table.busy_channels(now):
        return proposed
    return select_channel(variant, table, data_channels, now, rng)


def psm_radio_policy(variant: ProtocolVariant, kind: NodeKind, physical: RadioState,
                     engaged: bool) -> RadioState:
    """Radio state to bill, given what the radio is physically doing.

    Genie In-Situ peers keep listening (their tables stay current) but idle time
    and overhearing are billed as sleep.
    """
    if kind is NodeKind.ALTRUIST:
        return RadioState.IDLE if physical is RadioState.SLEEP else physical
    if variant is ProtocolVariant.GENIE_IN_SITU and not engaged and physical is not RadioState.TX:
        return RadioState.SLEEP
    if variant.peers_sleep and not engaged and physical is not RadioState.TX:
        return RadioState.SLEEP
    return physical
