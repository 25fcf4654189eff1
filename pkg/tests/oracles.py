"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools

import networkx as nx

from dishsim.deployment import candidate_sites
from dishsim.topology import MccMode, enumerate_ups


def literal_up(g: nx.Graph, i, j, mode: MccMode) -> bool:
    """Independent reading of the unsafe-pair clauses on a networkx graph."""
    di, dj = g.degree[i], g.degree[j]
    if mode is MccMode.PSM_DEAF_TERMINAL:
        return (di >= 1 and dj >= 1) and not (di == 1 and dj == 1)
    clause_a = di >= 2 and dj >= 2 and not (di == 2 and dj == 2)
    on_triangle = len(list(nx.common_neighbors(g, i, j))) > 0
    clause_b = di == 2 and dj == 2 and not on_triangle
    return clause_a or clause_b


def small_connected_graphs(max_n=6):
    for g in nx.graph_atlas_g():
        if 1 <= g.number_of_nodes() <= max_n and nx.is_connected(g):
            yield g


def as_adj(g: nx.Graph):
    return {v: set(g.neighbors(v)) for v in g.nodes}


def optimal_cover_size(t, mode=MccMode.NO_PSM):
    """Minimum number of candidate sites covering every coverable UP (exhaustive)."""
    ups = sorted(enumerate_ups(t, mode))
    sites = candidate_sites(t, ups)
    r = t.tx_range
    masks = set()
    for s in sites:
        m = 0
        for k, (i, j) in enumerate(ups):
            if s.dist(t.node(i).pos) <= r and s.dist(t.node(j).pos) <= r:
                m |= 1 << k
        if m:
            masks.add(m)
    # drop dominated sites; they never help a minimum cover
    masks = [m for m in masks if not any(o != m and o | m == o for o in masks)]
    goal = 0
    for m in masks:
        goal |= m
    for k in range(len(masks) + 1):
        for combo in itertools.combinations(masks, k):
            acc = 0
            for m in combo:
                acc |= m
            if acc == goal:
                return k, len(ups)
    raise AssertionError("unreachable")
