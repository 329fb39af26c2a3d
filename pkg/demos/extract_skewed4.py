"""Extract fair bits from a four-symbol source whose marginals drift as |n|^-1/2.

Run: python3 demos/extract_skewed4.py
"""
import numpy as np

from nseb import presets
from nseb.acceptance import demo_codebook
from nseb.analysis import plug_in_entropy, tv_to_uniform
from nseb.factor import coding_radius_profile, extract_stream

schedule = presets.skewed4_power_decay()
codebook, plan = demo_codebook()
print("codebook:", codebook.summary())
print("plan: j =", plan.j, "bits per output symbol, rate", plan.rate)

out = extract_stream(schedule, codebook, plan, 0, 999_999, seed=1)
bits = out.resolved_symbols()
print(f"resolved {bits.size} of {len(out)} positions")
print("frequency of 1:", bits.mean())
print("TV of 4-blocks to uniform:", tv_to_uniform(bits[: bits.size // 4 * 4].reshape(-1, 4) @ (1 << np.arange(4)), 16))
print("plug-in entropy rate of 8-blocks:", plug_in_entropy(bits, 8, 2).plug_in_rate)
prof = coding_radius_profile(out, R=1000)
print("coding radius: median", prof["median"], "q99", prof["q99"], "share above 1000", prof["tail_fraction"])
