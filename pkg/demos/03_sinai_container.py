"""Billiard statistics in the dispersing container and one 2D piston run.

    python demos/03_sinai_container.py
"""

import math

import numpy as np

from adiabatic_piston.averaged import AveragedSystem, integrate_averaged
from adiabatic_piston.billiard2d import (flux_time_average, get_domain, induced_piston_stats, mean_free_flight,
                                         sample_state_2d, simulate_2d)
from adiabatic_piston.core import SlowState, sup_deviation

dom = get_domain("sinai")
rng = np.random.default_rng(0)
Q = 0.5
table = dom.table(1, Q)
print(f"left chamber at Q={Q}: area {table.area():.5f}, perimeter {table.perimeter:.5f}, face {dom.ell}")

# Mean free flight between boundary hits, sampled from the collision measure.
est = mean_free_flight(dom, 1, Q, 1.0, 100_000, rng)
print(f"mean free flight  {est.value:.5f} +- {est.stderr:.5f}   predicted {est.predicted:.5f}")

# Returns to the piston face alone.
ind = induced_piston_stats(dom, 1, Q, 1.0, 50_000, rng)
print(f"mean return time  {ind.flight.value:.5f} +- {ind.flight.stderr:.5f}   predicted {ind.flight.predicted:.5f}")
print(f"mean |v_perp|     {ind.momentum.value:.5f}   predicted {math.pi / 4:.5f}")

# Time-averaged push on a frozen piston by a single particle.
flux = flux_time_average(dom, 1, Q, 0.5, 20_000, rng)
print(f"momentum flux     {flux.value:.5f} +- {flux.stderr:.5f}   predicted {flux.predicted:.5f}")

# A moving piston with two particles per side, against the d=2 averaged orbit.
h0 = SlowState(0.3, 0.0, (0.5, 0.5), (0.5, 0.5), dim=2)
av = integrate_averaged(AveragedSystem("ddim", d=2, A1=dom.A1, A2=dom.A2, ell=dom.ell), h0, 1.0, step=1e-3)
for M in (1e3, 1e4, 1e5):
    state = sample_state_2d(dom, h0.Q, M, h0.left, h0.right, np.random.default_rng(1))
    eps = 1 / math.sqrt(M)
    tr = simulate_2d(state, dom, 1 / eps, 1e-3 / eps, Emax=state.total_energy())
    ev = tr.meta["events"]
    print(f"M={M:.0e}: sup deviation {sup_deviation(tr, av, 1.0):.3f}, piston hits {ev['particle-piston']},"
          f" non-clean {ev['non_clean']}, energy drift {tr.meta['energy_drift']:.1e}")
