"""Sizing and placing altruists.

Random deployment follows the Poisson-coverage law: an unsafe pair at distance
``d`` is covered with probability ``1 - exp(-rho * A(d))`` where ``A(d)`` is the
lens-shaped overlap of the two transmission disks.  The worst case is ``d = r``,
which gives the minimum density for a target coverage.  For a known topology we
place altruists with greedy set cover over a finite candidate set.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .topology import MccMode, NetworkTopology, Point, enumerate_ups

#: Overlap area of two radius-1 disks whose centers are 1 apart.
UNIT_LENS_AT_R = 2 * math.pi / 3 - math.sqrt(3) / 2

#: Default target coverage and the matching density (per r^2).
DEFAULT_PCOV = 0.80
DEFAULT_RHO_ALT = 1.31


class PlacementMethod(str, enum.Enum):
    RANDOM = "random"
    GREEDY_SET_COVER = "greedy"
    GRID = "grid"


@dataclass(frozen=True)
class DensitySpec:
    rho_alt: float
    rho_peer: float
    p_cov_target: float

    def __post_init__(self):
        if not 0 <= self.p_cov_target < 1:
            raise ValueError("p_cov_target must lie in [0, 1)")
        if self.p_cov_target > 0 and not self.rho_alt > 0:
            raise ValueError("a positive coverage target needs a positive altruist density")


@dataclass(frozen=True)
class LensArea:
    d: float
    r: float
    area: float


@dataclass
class PlacementPlan:
    altruists: list[Point]
    covered_ups: set[tuple[int, int]]
    uncovered_ups: set[tuple[int, int]]
    method: PlacementMethod
    target_pcov: float | None = None
    candidates_considered: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def achieved_pcov(self) -> float:
        n = len(self.covered_ups) + len(self.uncovered_ups)
        return 1.0 if n == 0 else len(self.covered_ups) / n


def min_altruist_density(p_cov: float, r: float = 1.0) -> float:
    """Smallest altruist density giving every unsafe pair coverage probability ``p_cov``.

    Diverges as ``p_cov -> 1``; a target of exactly 1 is rejected.
    """
    if not 0 <= p_cov < 1:
        raise ValueError(f"p_cov must lie in [0, 1), got {p_cov}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return -math.log1p(-p_cov) / (UNIT_LENS_AT_R * r * r)


def lens_area(d: float, r: float) -> LensArea:
    """Intersection area of two radius-``r`` disks with centers ``d`` apart."""
    if not r > 0 or d < 0:
        raise ValueError("need r > 0 and d >= 0")
    if d > 2 * r:
        raise ValueError(f"d={d} exceeds 2r={2 * r}")
    theta = math.acos(d / (2 * r))
    return LensArea(d, r, 2 * r * r * theta - r * r * math.sin(2 * theta))


def pair_coverage_probability(rho_alt: float, d: float, r: float) -> float:
    if rho_alt < 0:
        raise ValueError("density must be non-negative")
    if d > r:
        raise ValueError("an unsafe pair is at most r apart")
    if math.isinf(rho_alt):
        return 1.0
    return -math.expm1(-rho_alt * lens_area(d, r).area)


def poisson_deploy(area: tuple[float, float], rho: float, seed) -> list[Point]:
    """Homogeneous Poisson point process on ``[0, w] x [0, h]``.

    ``seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    w, h = area
    if w <= 0 or h <= 0 or rho < 0:
        raise ValueError("need a positive area and a non-negative density")
    rng = np.random.default_rng(seed)
    n = rng.poisson(rho * w * h)
    xy = rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
    return [Point(float(x), float(y)) for x, y in xy]


def grid_cover_count(w: float, h: float, r: float) -> int:
    """Disks of radius ``r`` needed to tile a ``w x h`` rectangle with inscribed squares."""
    if w <= 0 or h <= 0 or r <= 0:
        raise ValueError("dimensions and range must be positive")
    side = math.sqrt(2) * r
    # guard against 1.0000000000000002-style ceil artifacts
    return math.ceil(w / side - 1e-12) * math.ceil(h / side - 1e-12)


def grid_positions(w: float, h: float, r: float) -> list[Point]:
    """Centers of the square cells used by :func:`grid_cover_count`."""
    side = math.sqrt(2) * r
    nx = math.ceil(w / side - 1e-12)
    ny = math.ceil(h / side - 1e-12)
    return [Point((ix + 0.5) * side, (iy + 0.5) * side) for ix in range(nx) for iy in range(ny)]


def grid_deploy(topology: NetworkTopology, mode: MccMode = MccMode.NO_PSM) -> PlacementPlan:
    """Cover the whole scenario rectangle; this does *not* guarantee UP coverage."""
    if topology.area is None:
        raise ValueError("topology has no area")
    pos = grid_positions(*topology.area, topology.tx_range)
    ups = enumerate_ups(topology, mode)
    hit = _hit(_coverage_matrix(topology, sorted(ups), pos))
    ordered = sorted(ups)
    return PlacementPlan(pos, {p for p, c in zip(ordered, hit) if c},
                         {p for p, c in zip(ordered, hit) if not c}, PlacementMethod.GRID, 1.0)


def _circle_intersections(p: Point, q: Point, r: float) -> list[Point]:
    d = p.dist(q)
    if d == 0 or d > 2 * r:
        return []
    mx, my = (p.x + q.x) / 2, (p.y + q.y) / 2
    # pulled a hair towards the chord midpoint so the point lies strictly inside
    # both disks despite rounding
    hh = math.sqrt(max(r * r - (d / 2) ** 2, 0.0)) * (1 - 1e-7)
    ux, uy = (q.y - p.y) / d, -(q.x - p.x) / d
    pts = [Point(mx + hh * ux, my + hh * uy), Point(mx - hh * ux, my - hh * uy)]
    return pts[:1] if hh == 0 else pts


def candidate_sites(topology: NetworkTopology, ups) -> list[Point]:
    """Finite candidate set: peer positions, UP midpoints and circle intersections.

    Sorted lexicographically by (x, y) and deduplicated on a 1e-9 grid.
    """
    r = topology.tx_range
    pts = [n.pos for n in topology.peers]
    ends = sorted({i for p in ups for i in p})
    for i, j in ups:
        a, b = topology.node(i).pos, topology.node(j).pos
        pts.append(Point((a.x + b.x) / 2, (a.y + b.y) / 2))
    for k, i in enumerate(ends):
        for j in ends[k + 1:]:
            pts.extend(_circle_intersections(topology.node(i).pos, topology.node(j).pos, r))
    seen = {}
    for p in pts:
        seen.setdefault((round(p.x, 9), round(p.y, 9)), p)
    return [seen[k] for k in sorted(seen)]


def _coverage_matrix(topology: NetworkTopology, ups: list[tuple[int, int]],
                     sites: list[Point]) -> sparse.csr_matrix:
    """Sparse boolean ``[site, up]`` matrix, same closed-disk rule as :func:`covered`."""
    shape = (len(sites), len(ups))
    if not sites or not ups:
        return sparse.csr_matrix(shape, dtype=bool)
    r = topology.tx_range
    s = np.array([(p.x, p.y) for p in sites])
    a = np.array([(topology.node(i).pos.x, topology.node(i).pos.y) for i, _ in ups])
    b = np.array([(topology.node(j).pos.x, topology.node(j).pos.y) for _, j in ups])
    # every point of the lens lies within this radius of the chord midpoint
    half = np.hypot(*(b - a).T) / 2
    reach = np.sqrt(np.maximum(r * r - half * half, 0.0)) * (1 + 1e-9) + 1e-9
    tree = cKDTree(s)
    rows, cols = [], []
    for k, near in enumerate(tree.query_ball_point((a + b) / 2, reach)):
        if not near:
            continue
        c = np.asarray(near)
        ok = ((np.hypot(s[c, 0] - a[k, 0], s[c, 1] - a[k, 1]) <= r)
              & (np.hypot(s[c, 0] - b[k, 0], s[c, 1] - b[k, 1]) <= r))
        rows.append(c[ok])
        cols.append(np.full(int(ok.sum()), k))
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    return sparse.csr_matrix((np.ones(len(rows), bool), (rows, cols)), shape=shape)


def _hit(cov: sparse.csr_matrix) -> np.ndarray:
    return cov.getnnz(axis=0) > 0


def greedy_set_cover_deploy(topology: NetworkTopology, mode: MccMode = MccMode.NO_PSM,
                            candidates: list[Point] | None = None) -> PlacementPlan:
    """Repeatedly place an altruist at the candidate covering most uncovered UPs.

    Ties go to the lowest candidate index (candidates are (x, y)-sorted).  UPs no
    candidate can cover are reported in ``uncovered_ups``.
    """
    ups = sorted(enumerate_ups(topology, mode))
    sites = candidate_sites(topology, ups) if candidates is None else list(candidates)
    cov = _coverage_matrix(topology, ups, sites)
    remaining = np.ones(len(ups), bool)
    chosen: list[int] = []
    while remaining.any() and len(sites):
        gains = cov @ remaining.astype(np.int64)
        if gains.max() == 0:
            break
        best = int(np.argmax(gains))  # first maximum == lowest index
        chosen.append(best)
        remaining[cov.indices[cov.indptr[best]:cov.indptr[best + 1]]] = False
    return PlacementPlan(
        altruists=[sites[k] for k in chosen],
        covered_ups={p for p, left in zip(ups, remaining) if not left},
        uncovered_ups={p for p, left in zip(ups, remaining) if left},
        method=PlacementMethod.GREEDY_SET_COVER,
        target_pcov=1.0,
        candidates_considered=len(sites),
    )


def random_deploy(topology: NetworkTopology, rho_alt: float, seed,
                  mode: MccMode = MccMode.NO_PSM, p_cov_target: float | None = None) -> PlacementPlan:
    """Poisson altruists over the topology's area, with the resulting UP split."""
    if topology.area is None:
        raise ValueError("topology has no area")
    pos = poisson_deploy(topology.area, rho_alt, seed)
    ups = sorted(enumerate_ups(topology, mode))
    hit = _hit(_coverage_matrix(topology, ups, pos))
    return PlacementPlan(pos, {p for p, c in zip(ups, hit) if c},
                         {p for p, c in zip(ups, hit) if not c}, PlacementMethod.RANDOM, p_cov_target)
