"""Energy, throughput and cost-efficiency figures of merit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .protocol import RadioState

#: Power draw per radio state in watts (25:18:15:1 x 50 mW).
POWER_W = {
    RadioState.TX: 1.250,
    RadioState.RX: 0.900,
    RadioState.IDLE: 0.750,
    RadioState.SLEEP: 0.050,
}

#: Initial energy per unit node cost; it cancels out of comparisons.
DEFAULT_B0 = 1.0


@dataclass
class EnergyLedger:
    """Per-node time spent in each radio state (seconds)."""

    sojourn: dict[int, dict[RadioState, float]] = field(default_factory=dict)

    def add(self, node: int, state: RadioState, seconds: float) -> None:
        per = self.sojourn.setdefault(node, {s: 0.0 for s in RadioState})
        per[state] += seconds

    def total(self, node: int) -> float:
        return sum(self.sojourn[node].values())


def node_power(ledger: EnergyLedger | Mapping[RadioState, float], node: int | None = None,
               rates: Mapping[RadioState, float] = POWER_W) -> float:
    """Time-weighted average power of one node in watts.

    Accepts either a ledger plus node id or a bare ``{state: seconds}`` mapping.
    """
    per = ledger.sojourn[node] if isinstance(ledger, EnergyLedger) else ledger
    duration = sum(per.values())
    if duration <= 0:
        raise ValueError("zero-duration sojourn record")
    return sum(rates[s] * t for s, t in per.items()) / duration


def aggregate_throughput(delivered_bits: Sequence[float] | float, duration_s: float) -> float:
    """End-to-end delivered payload bits per second, summed over flows."""
    total = float(np.sum(delivered_bits))
    if total == 0:
        return 0.0
    if duration_s <= 0:
        raise ValueError("non-positive duration with deliveries")
    return total / duration_s


@dataclass(frozen=True)
class BmpInputs:
    flow_throughputs: Sequence[float]     # bit/s
    flow_distances: Sequence[float]       # m, source-to-destination straight line
    n_peers: int
    n_altruists: int = 0
    p_peer_max: float = 0.0               # W
    p_alt_max: float = 0.0                # W
    b0: float = DEFAULT_B0                # J/$

    def __post_init__(self):
        if len(self.flow_throughputs) != len(self.flow_distances):
            raise ValueError("throughput and distance vectors differ in length")
        if self.n_peers < 1:
            raise ValueError("need at least one peer")
        if min(list(self.flow_throughputs) + list(self.flow_distances) + [0.0]) < 0:
            raise ValueError("negative throughput or distance")


def bmp(inputs: BmpInputs) -> float:
    """Bit-meter-price ratio in bit*m/$ (throughput x distance x lifetime / price)."""
    p = max(inputs.p_peer_max, inputs.p_alt_max)
    if p <= 0:
        raise ValueError("maximum power must be positive")
    fd = float(np.dot(inputs.flow_throughputs, inputs.flow_distances))
    return fd * inputs.b0 / ((inputs.n_peers + inputs.n_altruists) * p)


def bmp_from_product(fd: float, n_nodes: int, p_max: float, b0: float = DEFAULT_B0) -> float:
    """Same as :func:`bmp` when only the F.D product is known."""
    if p_max <= 0:
        raise ValueError("maximum power must be positive")
    return fd * b0 / (n_nodes * p_max)


def lifetime(e0: float, p_peer_max: float, p_alt_max: float = 0.0) -> float:
    """Seconds until the hungriest node drains ``e0`` joules."""
    p = max(p_peer_max, p_alt_max)
    if p <= 0:
        raise ValueError("maximum power must be positive")
    return e0 / p


def s_max(m: int, n_f: int, bandwidth: float, t_payload: float, t_cca_min: float,
          t_ctrl: float, t_data: float, t_sw: float = 0.0) -> float:
    """Single-hop saturated throughput ceiling (bit/s); durations in seconds."""
    denom = t_cca_min + t_ctrl + t_data + t_sw
    if denom <= 0:
        raise ValueError("zero cycle duration")
    return min(m, n_f) * t_payload * bandwidth / denom


def s_max_for(params, n_data_channels: int, n_flows: int) -> float:
    """:func:`s_max` evaluated with the durations of a :class:`MacParams`."""
    ns = 1e-9
    return s_max(n_data_channels, n_flows, params.bandwidth_bps, params.payload_ns * ns,
                 params.difs * ns, params.control_duration(include_difs=False) * ns,
                 params.data_duration() * ns, params.switch_delay * ns)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for fewer than two values)."""
    a = np.asarray(values, float)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0
