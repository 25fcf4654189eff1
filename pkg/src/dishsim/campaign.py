"""Parameter sweeps with seeded replications.

Each replication's seed is derived from the master seed, the sweep point index
and the replication index with :func:`derive_seed`, so any row can be re-run
on its own.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .engine import RunResult, ScenarioConfig, run
from .metrics import mean_std
from .protocol import ProtocolVariant

#: sweep axis name -> ScenarioConfig field
AXES = {"variant": "variant", "n_peers": "n_peers", "alt_density": "alt_density",
        "n_altruists": "n_altruists", "rate_bps": "rate_bps"}

SEED_RULE = "seed = SeedSequence([master, point, rep]).generate_state(1)[0]"


def derive_seed(master: int, point: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, point, rep]).generate_state(1)[0])


@dataclass(frozen=True)
class Campaign:
    """A cross product of sweep axes over a base scenario.

    ``axes`` maps names from :data:`AXES` to value lists.  No axes at all means
    the single base point; an axis with no values means no points.
    """

    base: ScenarioConfig
    axes: dict = field(default_factory=dict)
    reps: int = 5
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.axes) - set(AXES)
        if unknown:
            raise ValueError(f"unknown sweep axes {sorted(unknown)}")
        if self.reps < 1:
            raise ValueError("need at least one replication")

    def points(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[n] for n in names))]

    def config_for(self, values: dict, seed: int) -> ScenarioConfig:
        kw = {AXES[k]: (ProtocolVariant(v) if k == "variant" else v) for k, v in values.items()}
        if kw.get("variant", self.base.variant) is not ProtocolVariant.ALTRUISTIC:
            # altruist axes only apply to the variant that has altruists
            kw["alt_density"] = kw["n_altruists"] = None
        return self.base.with_(seed=seed, **kw)


@dataclass
class PointResult:
    index: int
    values: dict
    seeds: list[int]
    runs: list[RunResult | None]
    errors: list[str]

    @property
    def complete(self) -> bool:
        return not any(self.errors)

    def _stat(self, attr):
        vals = [getattr(r, attr) for r in self.runs if r is not None]
        return mean_std(vals)

    def row(self) -> dict:
        out = {"point": self.index}
        for k, v in self.values.items():
            out[k] = v.value if isinstance(v, ProtocolVariant) else v
        out["reps_ok"] = sum(r is not None for r in self.runs)
        out["complete"] = self.complete
        for attr, name in (("throughput_bps", "throughput_bps"), ("power_W_aggregate", "power_W"),
                           ("bmp", "bmp")):
            m, s = self._stat(attr)
            out[f"{name}_mean"], out[f"{name}_std"] = m, s
        return out


def _run_one(cfg: ScenarioConfig):
    try:
        return run(cfg), ""
    except Exception as err:   # a failed replication marks its point incomplete
        return None, f"{type(err).__name__}: {err}"


def run_campaign(campaign: Campaign) -> list[PointResult]:
    points = campaign.points()
    jobs = []
    for p, values in enumerate(points):
        for rep in range(campaign.reps):
            seed = derive_seed(campaign.master_seed, p, rep)
            jobs.append((p, seed, campaign.config_for(values, seed)))
    if campaign.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=campaign.workers) as pool:
            outs = list(pool.map(_run_one, [j[2] for j in jobs]))
    else:
        outs = [_run_one(j[2]) for j in jobs]
    results = [PointResult(p, values, [], [], []) for p, values in enumerate(points)]
    for (p, seed, _), (res, err) in zip(jobs, outs):
        results[p].seeds.append(seed)
        results[p].runs.append(res)
        results[p].errors.append(err)
    return results


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_table(results: list[PointResult], dst: TextIO, master_seed: int | None = None) -> None:
    """Aggregated rows as CSV; the seed rule and master seed go in a comment line."""
    dst.write(f"# {SEED_RULE}")
    if master_seed is not None:
        dst.write(f" master={master_seed}")
    dst.write("\n")
    if not results:
        return
    cols = list(results[0].row())
    dst.write(",".join(cols) + "\n")
    for pr in results:
        row = pr.row()
        dst.write(",".join(_cell(row[c]) for c in cols) + "\n")


def write_replications(results: list[PointResult], dst: TextIO) -> None:
    """One record per replication, with its derived seed, for single-point replay."""
    from .textio import RESULT_FIELDS, result_row
    dst.write("point,rep," + ",".join(RESULT_FIELDS) + ",error\n")
    for pr in results:
        for rep, (seed, res, err) in enumerate(zip(pr.seeds, pr.runs, pr.errors)):
            body = result_row(res) if res is not None else ",".join([str(seed)] + [""] * (len(RESULT_FIELDS) - 1))
            dst.write(f"{pr.index},{rep},{body},{err}\n")
