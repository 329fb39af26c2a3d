"""Which perturbations of a fair coin stay equivalent to it, and which become singular.

Run: python3 demos/dichotomy.py
"""
from nseb import presets
from nseb.analysis import hellinger_series
from nseb.source import dissipative_schedule, kakutani_divergence

fair = presets.fair_coin()
for exponent in (0.5, 0.75, 1.0):
    r = kakutani_divergence(presets.fair_power_decay(exponent), fair, 10 ** 5)
    print(f"|n|^-{exponent}: partial sum {r.partial_sum:.3f}, verdict {r.verdict}")

h = hellinger_series(dissipative_schedule(), N=200, K=2000)
print("dissipative schedule: log-log slope of Hellinger affinities", round(h.loglog_slope, 1))
