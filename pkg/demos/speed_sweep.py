"""Faster traffic carries the beacon across gaps sooner.

Closed-form speed against vehicle speed at a sparse density, with the
infinite-speed bound, followed by a short simulated comparison of v=5 and v=40.
"""

from vmimo_highway import ScenarioParams, asymptotics_report, ips_vmimo
from vmimo_highway.engine import Budget, estimate_ips, simulate
from vmimo_highway.experiments import replication_seed

base = ScenarioParams(lambda_r=0.003, lambda_f=0.003)
print(f"{'v (m/s)':>8} {'closed form':>12} {'v->inf bound':>13}")
for v in (5.0, 10.0, 20.0, 40.0, 80.0):
    p = base.with_(v=v)
    print(f"{v:8g} {ips_vmimo(p):12.4g} {asymptotics_report(p).infinite_speed_limit:13.4g}")

budget = Budget(max_slots=40000, min_cycles=50)
for v in (5.0, 40.0):
    est = estimate_ips([simulate(base.with_(v=v), "vmimo", budget, replication_seed(5, 0, k)).ips
                        for k in range(8)])
    print(f"simulated v={v:g}: {est.mean:.4g} +- {est.ci95_halfwidth:.3g} m/s")
