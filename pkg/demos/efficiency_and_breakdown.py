"""Efficiency of the rank estimator against difference in means, and its breakdown point.

Run with ``python demos/efficiency_and_breakdown.py``.
"""
import numpy as np

from rankeffect.theory import (
    DensitySpec,
    are_closed_form,
    are_numeric,
    breakdown_point_asymptotic,
    breakdown_point_finite,
    pilot_efficiency_estimate,
)

print(f"{'family':<14}{'closed form':>12}{'quadrature':>12}")
for name in ("normal", "uniform", "laplace", "t3", "exponential", "pareto:3"):
    spec = DensitySpec.parse(name)
    print(f"{name:<14}{are_closed_form(spec):>12.4f}{are_numeric(spec):>12.4f}")
print(f"{'epanechnikov':<14}{'':>12}{are_numeric(DensitySpec.epanechnikov()):>12.4f}")
print("(pareto:3 closed form is the tabulated expression; quadrature includes the factor 12)\n")

print("breakdown point by treated fraction, limit and N=100")
for lam in (0.1, 0.25, 1 / 3, 0.5, 0.75, 0.9):
    m = round(100 * lam)
    print(f"  {lam:5.3f}  {breakdown_point_asymptotic(lam):.4f}  {breakdown_point_finite(100, m):.2f}")

rng = np.random.default_rng(0)
print("\npilot-sample efficiency estimates, n = 2000")
for label, pilot in (("normal", rng.normal(size=2000)),
                     ("exponential", rng.exponential(size=2000)),
                     ("t3", rng.standard_t(3, size=2000))):
    print(f"  {label:<12}{pilot_efficiency_estimate(pilot):.3f}")
