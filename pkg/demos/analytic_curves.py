"""Closed-form propagation speed of both schemes across traffic density.

Prints the per-lane density, the blocking probability, both speeds, their
ratio, and the dense-traffic ceilings R/tau and r/tau for reference.
"""

import numpy as np

from vmimo_highway import ScenarioParams, analytic_report, asymptotics_report

base = ScenarioParams()
print(f"{'lambda/lane':>11} {'p_b':>10} {'vmimo m/s':>11} {'flooding m/s':>13} {'gain':>6}")
for lam in np.geomspace(5e-4, 0.05, 12):
    rep = analytic_report(base.with_(lambda_r=lam, lambda_f=lam))
    print(f"{lam:11.4g} {rep.transition.p_b:10.3e} {rep.ips_vmimo:11.5g} "
          f"{rep.ips_conventional:13.5g} {rep.gain:6.3f}")

a = asymptotics_report(base)
print(f"\nceilings: R/tau = {a.high_density_limit:g} m/s, r/tau = {base.r / base.tau:g} m/s, "
      f"gain -> R/r = {a.gain_limit:g}")
print(f"sparse limit (carried at the relative speed 2v): {a.low_density_limit:g} m/s")
