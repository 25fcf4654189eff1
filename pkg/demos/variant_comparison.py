"""Throughput, power and cost of the five MAC variants on one multi-hop field.

A 3r x 3r field holds ten peers per r^2, each sourcing a 40 kbit/s Poisson
flow over a shortest route.  Always-on cooperation (dish-p) and the genie
bound fix most channel-coordination failures; the altruistic variant gets
close while letting peers sleep.

    python demos/variant_comparison.py [replications]
"""

import sys

import numpy as np

from dishsim import ProtocolVariant, ScenarioConfig, run

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 2
base = ScenarioConfig(multihop=True, area=(750.0, 750.0), peer_density=10.0, rate_bps=40_000.0,
                      stop_after=2000)

print(f"{'variant':13s} {'Mbit/s':>7s} {'power W':>8s} {'max peer W':>10s} {'altruists':>9s} "
      f"{'BMP Mbit*m/$':>12s}")
rows = {}
for v in ProtocolVariant:
    cfg = base.with_(variant=v, alt_density=1.31 if v is ProtocolVariant.ALTRUISTIC else None)
    runs = [run(cfg.with_(seed=s)) for s in range(reps)]
    thr = np.mean([r.throughput_bps for r in runs])
    pw = np.mean([r.power_W_aggregate for r in runs])
    rows[v] = thr, pw
    print(f"{v.value:13s} {thr / 1e6:7.3f} {pw:8.2f} {np.mean([r.p_max_peer_W for r in runs]):10.3f} "
          f"{np.mean([r.n_altruists for r in runs]):9.1f} {np.mean([r.bmp for r in runs]) / 1e6:12.1f}")

nd = rows[ProtocolVariant.NON_DISH][0]
alt_thr, alt_pw = rows[ProtocolVariant.ALTRUISTIC]
print(f"\naltruistic vs non-dish throughput: {alt_thr / nd:.2f}x")
print(f"altruistic vs dish-p power: {alt_pw / rows[ProtocolVariant.DISH_P][1]:.2f}x")
