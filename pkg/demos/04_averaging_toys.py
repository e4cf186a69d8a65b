"""Three small slow-fast systems where averaging is first order in eps.

    python demos/04_averaging_toys.py
"""

from adiabatic_piston.studies import DEMOS, StudyConfig, run_study

for name, demo in DEMOS.items():
    print(f"{name}: {demo['doc']}")

res = run_study(StudyConfig(kind="demos", eps_list=[1e-1, 1e-2, 1e-3]))
print("\n  eps      " + "  ".join(f"{n:>14}" for n in DEMOS))
for eps in (1e-1, 1e-2, 1e-3):
    devs = [r["sup_deviation"] for r in res.rows if r["eps"] == eps]
    print(f"  {eps:<8.0e} " + "  ".join(f"{d:14.3e}" for d in devs))
print("\nfitted slopes against 1/eps:", {k: round(v, 3) for k, v in res.summary["slopes"].items()})
