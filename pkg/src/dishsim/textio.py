"""Plain-text formats: topologies, placement plans, run records and configs.

Topology / plan files are CSV (``id,kind,x,y``) preceded by ``# key=value``
header lines.  Configs are flat TOML; every key is optional::

    variant = "altruistic"      # dish-p | non-dish | non-dish-psm | genie | altruistic
    multihop = true
    area = [750.0, 750.0]       # metres
    n_peers = 10                # or peer_density (per r^2)
    alt_density = 1.31          # per r^2; or n_altruists
    channels = 5
    rate_bps = 25000.0
    saturated = false
    stop_after = 10000
    seed = 0
    tx_range = 250.0
    interference_range = 500.0
    capture_db = 6.0
    path_loss_exponent = 4.0
    max_time_s = 60.0
"""

from __future__ import annotations

import csv
import io
import sys
from pathlib import Path
from typing import Iterable, TextIO

from .deployment import PlacementMethod, PlacementPlan
from .engine import RadioModel, RunResult, ScenarioConfig
from .protocol import ProtocolVariant
from .topology import NetworkTopology, Node, NodeKind, Point, build_adjacency, covered, enumerate_ups

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RESULT_FIELDS = ("seed", "variant", "n_peers", "n_altruists", "throughput_bps",
                 "power_W_aggregate", "p_max_peer_W", "p_max_alt_W", "collisions", "invs",
                 "drops", "sim_time_s")


class FormatError(ValueError):
    pass


def _open_read(src) -> str:
    if hasattr(src, "read"):
        return src.read()
    return Path(src).read_text()


def _parse_header(lines: list[str]) -> tuple[dict[str, str], list[str]]:
    meta, body = {}, []
    for ln in lines:
        s = ln.strip()
        if not s:
            continue
        if s.startswith("#"):
            for tok in s[1:].split():
                if "=" not in tok:
                    raise FormatError(f"bad header token {tok!r}")
                k, v = tok.split("=", 1)
                meta[k] = v
        else:
            body.append(s)
    return meta, body


def _format_topology(topo: NetworkTopology, extra: dict | None = None) -> str:
    out = io.StringIO()
    head = {"r": repr(topo.tx_range), "interference_range": repr(topo.interference_range)}
    if topo.area is not None:
        head["area_w"], head["area_h"] = repr(topo.area[0]), repr(topo.area[1])
    head.update(extra or {})
    out.write("# " + " ".join(f"{k}={v}" for k, v in head.items()) + "\n")
    out.write("id,kind,x,y\n")
    for n in topo.nodes:
        out.write(f"{n.id},{n.kind.value},{n.pos.x!r},{n.pos.y!r}\n")
    return out.getvalue()


def write_topology(topo: NetworkTopology, dst) -> None:
    text = _format_topology(topo)
    if hasattr(dst, "write"):
        dst.write(text)
    else:
        Path(dst).write_text(text)


def read_topology(src) -> NetworkTopology:
    meta, body = _parse_header(_open_read(src).splitlines())
    if "r" not in meta:
        raise FormatError("topology header lacks r=")
    if not body or body[0].replace(" ", "") != "id,kind,x,y":
        raise FormatError("expected an 'id,kind,x,y' column header")
    nodes = []
    for row in csv.reader(body[1:]):
        if len(row) != 4:
            raise FormatError(f"bad topology row {row!r}")
        try:
            nodes.append(Node(int(row[0]), Point(float(row[2]), float(row[3])), NodeKind(row[1].strip())))
        except ValueError as err:
            raise FormatError(f"bad topology row {row!r}: {err}") from None
    area = None
    if "area_w" in meta and "area_h" in meta:
        area = (float(meta["area_w"]), float(meta["area_h"]))
    ir = float(meta["interference_range"]) if "interference_range" in meta else None
    return build_adjacency(nodes, float(meta["r"]), ir, area=area)


def write_plan(plan: PlacementPlan, topo: NetworkTopology, dst) -> None:
    """The topology with the plan's altruists appended, plus plan metadata."""
    full = topo.with_altruists(plan.altruists)
    extra = {"method": plan.method.value, "target_pcov": repr(plan.target_pcov),
             "achieved_pcov": repr(plan.achieved_pcov), "n_up": str(len(plan.covered_ups) + len(plan.uncovered_ups))}
    text = _format_topology(full, extra)
    if hasattr(dst, "write"):
        dst.write(text)
    else:
        Path(dst).write_text(text)


def read_plan(src, mode=None) -> tuple[NetworkTopology, PlacementPlan]:
    text = _open_read(src)
    meta, _ = _parse_header(text.splitlines())
    topo = read_topology(io.StringIO(text))
    kw = {} if mode is None else {"mode": mode}
    ups = enumerate_ups(topo, **kw)
    cov = {p for p in ups if covered(p, topo)}
    target = meta.get("target_pcov")
    plan = PlacementPlan([a.pos for a in topo.altruists], cov, ups - cov,
                         PlacementMethod(meta.get("method", "greedy")),
                         None if target in (None, "None") else float(target))
    return topo, plan


# -- run records ---------------------------------------------------------------

def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def result_header() -> str:
    return ",".join(RESULT_FIELDS)


def result_row(result: RunResult | dict) -> str:
    rec = result.summary() if isinstance(result, RunResult) else result
    return ",".join(_fmt(rec[k]) for k in RESULT_FIELDS)


def write_results(results: Iterable[RunResult], dst: TextIO) -> None:
    dst.write(result_header() + "\n")
    for r in results:
        dst.write(result_row(r) + "\n")


def write_trace(result: RunResult, dst: TextIO) -> None:
    dst.write("time_ns,src,dst,kind,channel,outcome\n")
    for rec in result.trace or ():
        dst.write(",".join(str(x) for x in rec) + "\n")


# -- configs ---------------------------------------------------------------------

_SCALAR_KEYS = {
    "multihop": bool, "n_peers": int, "peer_density": float, "n_altruists": int,
    "alt_density": float, "rate_bps": float, "saturated": bool, "stop_after": int, "seed": int,
    "max_time_s": float, "trace": bool,
}
_RADIO_KEYS = {"tx_range": "tx_range", "interference_range": "interference_range",
               "capture_db": "capture_threshold_db", "path_loss_exponent": "path_loss_exponent"}


def config_from_mapping(data: dict, base: ScenarioConfig = ScenarioConfig()) -> ScenarioConfig:
    """Overlay the recognised keys of ``data`` onto ``base``; unknown keys are an error."""
    kw, radio = {}, {}
    for key, value in data.items():
        if key == "variant":
            try:
                kw["variant"] = ProtocolVariant(value)
            except ValueError:
                raise FormatError(f"unknown variant {value!r}") from None
        elif key == "area":
            if len(value) != 2:
                raise FormatError("area must be [width, height]")
            kw["area"] = (float(value[0]), float(value[1]))
        elif key == "channels":
            kw["n_data_channels"] = int(value)
        elif key in _SCALAR_KEYS:
            kw[key] = _SCALAR_KEYS[key](value)
        elif key in _RADIO_KEYS:
            radio[_RADIO_KEYS[key]] = float(value)
        else:
            raise FormatError(f"unknown config key {key!r}")
    if radio:
        r = base.radio
        kw["radio"] = RadioModel(**{**r.__dict__, **radio})
    return base.with_(**kw)


def load_config(path) -> tuple[ScenarioConfig, dict]:
    """Scenario part of a TOML file plus the leftover ``[campaign]`` table, if any."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    campaign = data.pop("campaign", {})
    return config_from_mapping(data), campaign


def config_to_mapping(cfg: ScenarioConfig) -> dict:
    out = {"variant": cfg.variant.value, "multihop": cfg.multihop,
           "area": list(cfg.scenario_area), "n_peers": cfg.n_peers,
           "channels": cfg.n_data_channels, "rate_bps": cfg.rate_bps,
           "saturated": cfg.saturated, "stop_after": cfg.stop_after, "seed": cfg.seed,
           "tx_range": cfg.radio.tx_range, "interference_range": cfg.radio.interference_range,
           "capture_db": cfg.radio.capture_threshold_db,
           "path_loss_exponent": cfg.radio.path_loss_exponent}
    for k in ("peer_density", "n_altruists", "alt_density", "max_time_s"):
        if getattr(cfg, k) is not None:
            out[k] = getattr(cfg, k)
    return out
