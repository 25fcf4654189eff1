"""Command-line front end.

    dishsim run       one replication, prints a result record
    dishsim campaign  sweep over variants / peers / altruist density / rate
    dishsim plan size minimum altruist density for a coverage target
    dishsim plan place greedy altruist placement for a topology file
    dishsim topo gen  random peer topology
"""

from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager

import numpy as np

from . import deployment, textio
from .campaign import Campaign, run_campaign, write_replications, write_table
from .engine import ScenarioConfig, UnroutableError, run
from .protocol import ProtocolVariant
from .topology import MccMode, Node, Point, build_adjacency


class CliError(Exception):
    pass


def _area(text: str) -> tuple[float, float]:
    try:
        w, h = (float(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"area must look like 1500x1500, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("area sides must be positive")
    return w, h


def _list(conv):
    def parse(text):
        try:
            return [conv(v) for v in text.split(",") if v]
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from None
    return parse


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _scenario_args(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    p.add_argument("--config", help="TOML scenario file; flags override it")
    if sweep:
        p.add_argument("--variant", type=_list(ProtocolVariant), help="comma-separated variants")
        p.add_argument("--peers", type=_list(int))
        p.add_argument("--alt-density", type=_list(float), help="altruists per r^2")
        p.add_argument("--rate", type=_list(float), help="per-flow offered load, bit/s")
    else:
        p.add_argument("--variant", type=ProtocolVariant, choices=list(ProtocolVariant),
                       metavar="{" + ",".join(v.value for v in ProtocolVariant) + "}")
        p.add_argument("--peers", type=int)
        p.add_argument("--alt-density", type=float, help="altruists per r^2")
        p.add_argument("--altruists", type=int, help="fixed altruist count")
        p.add_argument("--rate", type=float, help="per-flow offered load, bit/s")
        p.add_argument("--topology", help="use this topology file instead of a random one")
    p.add_argument("--peer-density", type=float, help="peers per r^2 (overrides --peers)")
    p.add_argument("--area", type=_area, help="WxH in metres")
    p.add_argument("--channels", type=int, help="number of data channels")
    p.add_argument("--saturated", action="store_true", default=None)
    p.add_argument("--multihop", action="store_true", default=None)
    p.add_argument("--stop-after", type=int, help="stop once this many packets were generated")
    p.add_argument("--max-time", type=float, help="simulated-time cap in seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (default stdout)")


def _base_config(args) -> tuple[ScenarioConfig, dict]:
    campaign = {}
    cfg = ScenarioConfig()
    if args.config:
        try:
            cfg, campaign = textio.load_config(args.config)
        except (OSError, ValueError) as err:
            raise CliError(f"cannot load config {args.config}: {err}") from None
    over = {"peer_density": args.peer_density, "area": args.area, "n_data_channels": args.channels,
            "saturated": args.saturated, "multihop": args.multihop, "stop_after": args.stop_after,
            "max_time_s": args.max_time, "seed": args.seed}
    cfg = cfg.with_(**{k: v for k, v in over.items() if v is not None})
    return cfg, campaign


def cmd_run(args) -> int:
    cfg, _ = _base_config(args)
    over = {"variant": args.variant, "n_peers": args.peers, "alt_density": args.alt_density,
            "n_altruists": args.altruists, "rate_bps": args.rate}
    cfg = cfg.with_(**{k: v for k, v in over.items() if v is not None})
    if args.topology:
        cfg = cfg.with_(topology=_read_topology(args.topology))
    if args.trace:
        cfg = cfg.with_(trace=True)
    result = run(cfg)
    with _output(args.out) as fh:
        textio.write_results([result], fh)
    if args.trace:
        with _output(args.trace) as fh:
            textio.write_trace(result, fh)
    return 0


def cmd_campaign(args) -> int:
    base, extra = _base_config(args)
    axes = {}
    for name, key in (("variant", "variant"), ("peers", "n_peers"),
                      ("alt_density", "alt_density"), ("rate", "rate_bps")):
        vals = getattr(args, name)
        if vals is None:
            vals = extra.get(key)
        if vals is not None:
            axes[key] = [v.value if isinstance(v, ProtocolVariant) else v for v in vals]
    reps = args.reps if args.reps is not None else int(extra.get("reps", 5))
    master = args.seed if args.seed is not None else int(extra.get("master_seed", 0))
    try:
        camp = Campaign(base, axes, reps=reps, master_seed=master, workers=args.workers)
    except ValueError as err:
        raise CliError(str(err)) from None
    results = run_campaign(camp)
    with _output(args.out) as fh:
        write_table(results, fh, master)
    if args.runs:
        with _output(args.runs) as fh:
            write_replications(results, fh)
    for pr in results:
        if not pr.complete:
            print(f"point {pr.index} incomplete: {[e for e in pr.errors if e]}", file=sys.stderr)
    return 0


def cmd_plan_size(args) -> int:
    if not 0 <= args.pcov < 1:
        raise CliError(f"--pcov must lie in [0, 1), got {args.pcov}")
    per_r2 = deployment.min_altruist_density(args.pcov)
    per_m2 = per_r2 / args.r ** 2
    w, h = args.area
    with _output(args.out) as fh:
        fh.write(f"p_cov={args.pcov}\nrho_alt_per_r2={per_r2:.4f}\nrho_alt_per_m2={per_m2:.6g}\n"
                 f"expected_altruists={per_m2 * w * h:.1f}\n"
                 f"grid_altruists={deployment.grid_cover_count(w, h, args.r)}\n")
    return 0


def _read_topology(path):
    try:
        return textio.read_topology(path)
    except (OSError, ValueError) as err:
        raise CliError(f"invalid topology file {path}: {err}") from None


def cmd_plan_place(args) -> int:
    topo = _read_topology(args.topology)
    if topo.altruists:
        topo = build_adjacency(topo.peers, topo.tx_range, topo.interference_range, topo.area)
    mode = MccMode(args.mode)
    if args.method == "grid":
        plan = deployment.grid_deploy(topo, mode)
    else:
        plan = deployment.greedy_set_cover_deploy(topo, mode)
    with _output(args.out) as fh:
        textio.write_plan(plan, topo, fh)
    print(f"altruists={len(plan.altruists)} n_up={len(plan.covered_ups) + len(plan.uncovered_ups)} "
          f"achieved_pcov={plan.achieved_pcov:.4f}", file=sys.stderr)
    return 0


def cmd_topo_gen(args) -> int:
    w, h = args.area
    n = args.peers
    if args.peer_density is not None:
        n = int(round(args.peer_density * w * h / args.r ** 2))
    if n is None or n < 0:
        raise CliError("give --peers or --peer-density")
    rng = np.random.default_rng(args.seed)
    xy = rng.uniform((0, 0), (w, h), size=(n, 2))
    nodes = [Node(k, Point(float(x), float(y))) for k, (x, y) in enumerate(xy)]
    topo = build_adjacency(nodes, args.r, args.interference_range, area=(w, h))
    with _output(args.out) as fh:
        textio.write_topology(topo, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dishsim", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="simulate one replication")
    _scenario_args(r)
    r.add_argument("--trace", help="write the frame trace to this file")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="sweep and replicate")
    _scenario_args(c, sweep=True)
    c.add_argument("--reps", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--runs", help="also write per-replication records here")
    c.set_defaults(func=cmd_campaign)

    plan = sub.add_parser("plan", help="altruist sizing and placement")
    psub = plan.add_subparsers(dest="plan_verb", required=True)
    ps = psub.add_parser("size")
    ps.add_argument("--pcov", type=float, default=deployment.DEFAULT_PCOV)
    ps.add_argument("--r", type=float, default=250.0)
    ps.add_argument("--area", type=_area, default=(1500.0, 1500.0))
    ps.add_argument("--out")
    ps.set_defaults(func=cmd_plan_size)
    pp = psub.add_parser("place")
    pp.add_argument("--topology", required=True)
    pp.add_argument("--mode", choices=[m.value for m in MccMode], default=MccMode.NO_PSM.value)
    pp.add_argument("--method", choices=["greedy", "grid"], default="greedy")
    pp.add_argument("--out")
    pp.set_defaults(func=cmd_plan_place)

    topo = sub.add_parser("topo", help="topology utilities")
    tsub = topo.add_subparsers(dest="topo_verb", required=True)
    tg = tsub.add_parser("gen")
    tg.add_argument("--peers", type=int)
    tg.add_argument("--peer-density", type=float, help="peers per r^2")
    tg.add_argument("--area", type=_area, default=(1500.0, 1500.0))
    tg.add_argument("--r", type=float, default=250.0)
    tg.add_argument("--interference-range", type=float)
    tg.add_argument("--seed", type=int, default=0)
    tg.add_argument("--out")
    tg.set_defaults(func=cmd_topo_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, UnroutableError, ValueError) as err:
        print(f"dishsim: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
