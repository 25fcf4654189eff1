import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dishsim.deployment import (
    UNIT_LENS_AT_R, DensitySpec, PlacementMethod, candidate_sites, greedy_set_cover_deploy,
    grid_cover_count, grid_deploy, grid_positions, lens_area, min_altruist_density,
    pair_coverage_probability, poisson_deploy, random_deploy,
)
from dishsim.topology import MccMode, Node, Point, build_adjacency, covered, enumerate_ups

from oracles import optimal_cover_size

R = 250.0
DENSITY_TABLE = {0.50: 0.56, 0.60: 0.75, 0.70: 0.98, 0.80: 1.31, 0.90: 1.87, 0.95: 2.44, 0.99: 3.75}


def peers(xy):
    return [Node(k, Point(float(x), float(y))) for k, (x, y) in enumerate(xy)]


def lens_by_quadrature(d, r):
    """Overlap of disks at (0,0) and (d,0) by integrating the vertical chord."""
    def chord(x):
        h = min(r * r - x * x, r * r - (x - d) ** 2)
        return 2 * math.sqrt(h) if h > 0 else 0.0
    val, _ = integrate.quad(chord, d - r, r, limit=200)
    return val


# -- density law -------------------------------------------------------------------

@pytest.mark.parametrize("p,rho", sorted(DENSITY_TABLE.items()))
def test_min_density_table_values(p, rho):
    assert min_altruist_density(p) == pytest.approx(rho, abs=0.01)


def test_zero_target_needs_no_altruists():
    assert min_altruist_density(0.0) == 0.0


def test_density_scales_with_inverse_r_squared():
    assert min_altruist_density(0.8, R) == pytest.approx(min_altruist_density(0.8) / R ** 2)


@pytest.mark.parametrize("p,r", [(1.0, 1.0), (-0.1, 1.0), (1.5, 1.0), (0.5, 0.0), (0.5, -2.0)])
def test_min_density_rejects(p, r):
    with pytest.raises(ValueError):
        min_altruist_density(p, r)


@settings(max_examples=200)
@given(st.floats(0.0, 0.999), st.floats(0.1, 1000.0))
def test_density_inverts_coverage_at_range(p, r):
    rho = min_altruist_density(p, r)
    assert abs(pair_coverage_probability(rho, r, r) - p) < 1e-9


@settings(max_examples=100)
@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_density_strictly_increasing(p, q):
    if p < q:
        assert min_altruist_density(p) < min_altruist_density(q)


def test_density_spec_validation():
    DensitySpec(1.31, 10.0, 0.8)
    with pytest.raises(ValueError):
        DensitySpec(1.31, 10.0, 1.0)
    with pytest.raises(ValueError):
        DensitySpec(0.0, 10.0, 0.5)


# -- lens area ---------------------------------------------------------------------------

def test_lens_full_overlap():
    assert lens_area(0, 1).area == pytest.approx(math.pi)


def test_lens_at_range():
    assert lens_area(1, 1).area == pytest.approx(1.2284, abs=1e-4)
    assert lens_area(1, 1).area == pytest.approx(UNIT_LENS_AT_R, rel=1e-12)


def test_lens_tangent_is_empty():
    assert lens_area(2, 1).area == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("d", [0.0, 0.1, 0.37, 0.5, 0.99, 1.0, 1.3, 1.9])
def test_lens_matches_quadrature(d):
    assert lens_area(d * R, R).area == pytest.approx(lens_by_quadrature(d * R, R), rel=1e-7)


def test_lens_strictly_decreasing():
    a = [lens_area(d, 1.0).area for d in np.linspace(0, 2, 401)]
    assert all(x > y for x, y in zip(a, a[1:]))


@pytest.mark.parametrize("d,r", [(2.01, 1.0), (-0.1, 1.0), (0.5, 0.0)])
def test_lens_rejects(d, r):
    with pytest.raises(ValueError):
        lens_area(d, r)


# -- pair coverage -------------------------------------------------------------------

def test_pair_coverage_at_table_density():
    assert pair_coverage_probability(1.31, 1.0, 1.0) == pytest.approx(0.80, abs=0.001)


def test_pair_coverage_limits():
    assert pair_coverage_probability(0.0, 0.5, 1.0) == 0.0
    assert pair_coverage_probability(math.inf, 0.5, 1.0) == 1.0
    with pytest.raises(ValueError):
        pair_coverage_probability(-1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        pair_coverage_probability(1.0, 1.5, 1.0)


@settings(max_examples=100)
@given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0, 1), st.floats(0, 1))
def test_pair_coverage_monotone(rho1, rho2, d1, d2):
    lo, hi = sorted((rho1, rho2))
    assert pair_coverage_probability(lo, d1, 1) <= pair_coverage_probability(hi, d1, 1)
    near, far = sorted((d1, d2))
    assert pair_coverage_probability(rho1, near, 1) >= pair_coverage_probability(rho1, far, 1)


def test_pair_coverage_small_monte_carlo():
    # 2000 pairs at d = r in a 12r x 12r field; a loose check, the tight one is an acceptance criterion
    rng = np.random.default_rng(7)
    hits = 0
    n = 2000
    for _ in range(n):
        alts = np.array([(p.x, p.y) for p in poisson_deploy((12.0, 12.0), 1.31, rng)])
        c = rng.uniform(4.0, 8.0, 2)
        phi = rng.uniform(0, 2 * np.pi)
        a, b = c, c + (np.cos(phi), np.sin(phi))
        hits += bool(np.any((np.hypot(*(alts - a).T) <= 1) & (np.hypot(*(alts - b).T) <= 1)))
    p = pair_coverage_probability(1.31, 1.0, 1.0)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 4 * se


# -- Poisson deployment -------------------------------------------------------------------

def test_poisson_deploy_deterministic():
    assert poisson_deploy((100, 100), 1e-3, 42) == poisson_deploy((100, 100), 1e-3, 42)


def test_poisson_deploy_mean_count():
    counts = [len(poisson_deploy((100, 100), 1e-3, s)) for s in range(400)]
    assert np.mean(counts) == pytest.approx(10, abs=3 * math.sqrt(10 / 400))


def test_poisson_deploy_inside_rectangle():
    pts = poisson_deploy((30, 70), 0.05, 3)
    assert pts and all(0 <= p.x <= 30 and 0 <= p.y <= 70 for p in pts)


def test_random_deploy_partition():
    xy = np.random.default_rng(1).uniform(0, 750, (40, 2))
    t = build_adjacency(peers(xy), R, area=(750, 750))
    plan = random_deploy(t, 1.31 / R ** 2, 5)
    ups = enumerate_ups(t)
    assert plan.covered_ups | plan.uncovered_ups == ups
    assert not plan.covered_ups & plan.uncovered_ups
    assert plan.method is PlacementMethod.RANDOM


# -- grid ----------------------------------------------------------------------------------

@pytest.mark.parametrize("w,h,r,n", [(100, 100, 250, 1), (1500, 1500, 250, 25),
                                     (math.sqrt(2) * 250, math.sqrt(2) * 250, 250, 1)])
def test_grid_cover_count(w, h, r, n):
    assert grid_cover_count(w, h, r) == n


def test_grid_cells_cover_rectangle():
    w, h = 1000.0, 700.0
    centers = np.array([(p.x, p.y) for p in grid_positions(w, h, R)])
    assert len(centers) == grid_cover_count(w, h, R)
    xs, ys = np.meshgrid(np.linspace(0, w, 60), np.linspace(0, h, 60))
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    d = np.hypot(pts[:, None, 0] - centers[None, :, 0], pts[:, None, 1] - centers[None, :, 1])
    assert np.all(d.min(axis=1) <= R + 1e-9)


def test_area_cover_does_not_cover_every_up():
    # C4 straddling the two grid cells of a 2*sqrt2 r x sqrt2 r area
    xy = [(1.0, 0.01), (1.9, 0.01), (1.9, 0.9), (1.0, 0.9)]
    t = build_adjacency(peers([(x * R, y * R) for x, y in xy]), R,
                        area=(2 * math.sqrt(2) * R, math.sqrt(2) * R))
    assert len(enumerate_ups(t)) == 4
    plan = grid_deploy(t)
    assert len(plan.altruists) == 2
    assert (0, 1) in plan.uncovered_ups


# -- greedy set cover ----------------------------------------------------------------------

def test_greedy_prefers_larger_cover():
    t = build_adjacency(peers([(200.0 * k, 0.0) for k in range(6)]), R)
    assert enumerate_ups(t) == {(1, 2), (2, 3), (3, 4)}
    cands = [Point(300, 0), Point(600, 0), Point(700, 0)]
    plan = greedy_set_cover_deploy(t, candidates=cands)
    assert plan.altruists == [Point(600, 0), Point(300, 0)]
    assert not plan.uncovered_ups


def test_single_hop_clique_needs_one_altruist():
    xy = np.random.default_rng(0).uniform(0, 100, (10, 2))
    t = build_adjacency(peers(xy), R, area=(100, 100))
    plan = greedy_set_cover_deploy(t)
    assert len(enumerate_ups(t)) == 45
    assert len(plan.altruists) == 1 and plan.achieved_pcov == 1.0


def test_single_hop_any_central_altruist_gives_full_coverage():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = build_adjacency(peers(rng.uniform(0, 100, (8, 2))), R, area=(100, 100))
        full = t.with_altruists([Point(50, 50)])
        assert all(covered(p, full) for p in enumerate_ups(t))


def test_uncoverable_ups_reported():
    t = build_adjacency(peers([(200.0 * k, 0.0) for k in range(5)]), R)
    plan = greedy_set_cover_deploy(t, candidates=[Point(5000, 5000)])
    assert plan.altruists == [] and plan.uncovered_ups == enumerate_ups(t)


def test_candidates_sorted_and_unique():
    xy = np.random.default_rng(2).uniform(0, 600, (8, 2))
    t = build_adjacency(peers(xy), R)
    c = candidate_sites(t, sorted(enumerate_ups(t)))
    keys = [(p.x, p.y) for p in c]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)


def test_greedy_within_log_factor_of_optimum():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 15:
        t = build_adjacency(peers(rng.uniform(0, 2.5 * R, (8, 2))), R)
        if not enumerate_ups(t):
            continue
        opt, n_up = optimal_cover_size(t)
        plan = greedy_set_cover_deploy(t)
        assert len(plan.altruists) <= opt * (1 + math.log(n_up))
        checked += 1


def test_greedy_plan_valid_and_deterministic():
    rng = np.random.default_rng(4)
    for _ in range(10):
        t = build_adjacency(peers(rng.uniform(0, 3 * R, (12, 2))), R)
        plan = greedy_set_cover_deploy(t)
        again = greedy_set_cover_deploy(t)
        assert plan.altruists == again.altruists
        full = t.with_altruists(plan.altruists)
        assert all(covered(p, full) for p in plan.covered_ups)
        assert plan.covered_ups | plan.uncovered_ups == enumerate_ups(t)
        assert not plan.uncovered_ups   # midpoints make every UP coverable
