"""Why combining helps: two transmitters 250 m away reach a receiver together.

A single link decodes only inside r; summing the normalized SNR of every
transmitter within R lets several distant copies clear the same threshold.
"""

from vmimo_highway import ScenarioParams, combined_snr_statistic, decode_test

p = ScenarioParams()
threshold = 1.0 / p.r**2
print(f"decode threshold 1/r^2 = {threshold:.3e}  (r = {p.r:g} m, R = {p.R:g} m)\n")
print(f"{'transmitter distances (m)':<30} {'sum 1/d^2':>11}  decodes")
for ds in ([150.0], [250.0], [250.0, 250.0], [300.0, 400.0, 500.0], [550.0] * 4, [590.0] * 9):
    s = combined_snr_statistic(ds)
    print(f"{str(ds):<30} {s:11.3e}  {decode_test(s, p.r)}")
