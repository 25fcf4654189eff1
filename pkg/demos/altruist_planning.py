"""How many altruists does a field need, and where do they go?

Walks from the density law to a concrete placement on a random multi-hop
field: the analytical density for a coverage target, what a Poisson drop at
that density actually achieves, and how a greedy plan and a plain grid compare.

    python demos/altruist_planning.py [seed]
"""

import sys

import numpy as np

from dishsim import (
    MccMode, Node, Point, build_adjacency, cooperation_coverage, enumerate_ups, grid_deploy,
    greedy_set_cover_deploy, min_altruist_density, random_deploy,
)

R = 250.0
SIDE = 1500.0
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

print("coverage target -> altruists per r^2")
for p in (0.5, 0.8, 0.9, 0.99):
    print(f"  {p:4.2f} -> {min_altruist_density(p):.2f}")

rng = np.random.default_rng(seed)
n_peers = int(10 * SIDE * SIDE / R ** 2)
xy = rng.uniform(0, SIDE, (n_peers, 2))
field = build_adjacency([Node(k, Point(*p)) for k, p in enumerate(xy)], R, area=(SIDE, SIDE))
ups = enumerate_ups(field)
print(f"\n{n_peers} peers on {SIDE:.0f} m square, {len(ups)} unsafe pairs")

rho = min_altruist_density(0.8)           # per r^2
drop = random_deploy(field, rho / R ** 2, rng)
cov = cooperation_coverage(field.with_altruists(drop.altruists))
print(f"random drop at {rho:.2f}/r^2: {len(drop.altruists)} altruists, coverage {cov.fraction:.3f}")

for name, plan in (("greedy", greedy_set_cover_deploy(field)), ("grid", grid_deploy(field))):
    print(f"{name:6s}: {len(plan.altruists):3d} altruists, coverage {plan.achieved_pcov:.3f}")

# with sleeping peers the deaf-terminal condition decides which pairs are unsafe
psm = greedy_set_cover_deploy(field, MccMode.PSM_DEAF_TERMINAL)
print(f"greedy with sleeping peers: {len(psm.covered_ups) + len(psm.uncovered_ups)} pairs, "
      f"{len(psm.altruists)} altruists")
