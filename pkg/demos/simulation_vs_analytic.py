"""Slotted simulation next to the renewal-reward closed form.

A handful of replications per density is enough to see the pattern: the two
agree in order of magnitude at high density, while at mid density the
simulated head waits much longer in blocked states than the closed form
assumes.  Pass a number on the command line to change the replication count.
"""

import sys

from vmimo_highway import ScenarioParams, ips_conventional, ips_vmimo
from vmimo_highway.engine import Budget, estimate_ips, simulate
from vmimo_highway.experiments import replication_seed

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 6
budget = Budget(max_slots=20000, min_cycles=50)
print(f"{'lambda/lane':>11} {'scheme':>9} {'simulated':>18} {'closed form':>12}")
for i, lam in enumerate((0.002, 0.005, 0.01, 0.02)):
    p = ScenarioParams(lambda_r=lam, lambda_f=lam)
    for scheme, closed in (("vmimo", ips_vmimo(p)), ("flooding", ips_conventional(p))):
        est = estimate_ips([simulate(p, scheme, budget, replication_seed(1, i, k)).ips
                            for k in range(reps)])
        sim = f"{est.mean:.4g} +- {est.ci95_halfwidth:.2g}"
        print(f"{lam:11g} {scheme:>9} {sim:>18} {closed:12.4g}")
