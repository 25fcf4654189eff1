"""Saturated single-hop throughput against the closed-form ceiling.

With every peer in range of every other and one central altruist, the
control channel becomes the bottleneck as flows are added.  The ceiling
counts one handshake per data slot and five data channels.

    python demos/single_hop_bound.py
"""

from dishsim import MacParams, ProtocolVariant, ScenarioConfig, run
from dishsim.metrics import s_max_for

print(f"{'peers':>5s} {'flows':>5s} {'variant':13s} {'Mbit/s':>7s} {'bound':>7s} {'ratio':>6s} "
      f"{'data coll':>9s}")
for n in (2, 4, 6, 8, 10, 12):
    for v in (ProtocolVariant.NON_DISH_PSM, ProtocolVariant.ALTRUISTIC):
        r = run(ScenarioConfig(variant=v, n_peers=n, saturated=True, stop_after=2000, seed=1))
        bound = s_max_for(MacParams(), 5, len(r.flows))
        print(f"{n:5d} {len(r.flows):5d} {v.value:13s} {r.throughput_bps / 1e6:7.3f} "
              f"{bound / 1e6:7.3f} {r.throughput_bps / bound:6.3f} {r.data_collisions:9d}")
