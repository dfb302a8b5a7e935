"""Role rewards, the concave meta utility, and tail-penalty shaping.

Run:  python demos/03_reward_shaping.py
"""

import numpy as np

from marsbid import (
    ShapingParams,
    reward_cvar_shaped,
    reward_meta,
    reward_neutral,
    reward_safe,
    reward_spec,
)

p = ShapingParams()

# The safe agent is paid only for the day-ahead share of profit and fined
# for real-time exposure; the speculator is the mirror image. Their sum is
# always profit minus the role fine, whatever the allocation.
print("profit 1000 $, shaped by role:")
print(f"{'alpha':>6} {'safe':>9} {'spec':>9} {'neutral':>9} {'sum s+s':>9}")
for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
    rs = reward_safe(1000.0, alpha, p)
    rp = reward_spec(1000.0, alpha, p)
    rn = reward_neutral(1000.0, alpha, p)
    print(f"{alpha:6.2f} {rs:9.1f} {rp:9.1f} {rn:9.1f} {rs + rp:9.1f}")

# The meta controller optimizes a concave utility: linear in profit, with a
# quadratic magnitude penalty. Its maximum sits at s_var^2 / (lambda *
# s_linear) = 2 $, which is what makes the controller prefer consistent
# small outcomes over jackpots.
print("\nconcave utility (argmax at 2 $):")
for pi in (-1000, -100, 0, 2, 100, 1000, 5000):
    bar = "#" * max(0, int(40 + reward_meta(float(pi), p) * 1.5))
    print(f"  pi {pi:6d} -> r_meta {reward_meta(float(pi), p):10.3f} {bar}")

# CVaR-style shaping fines only outcomes below the rolling left-tail
# quantile of recent profits.
rng = np.random.default_rng(0)
history = rng.normal(100, 50, 200)
print("\ntail shaping against a N(100, 50) profit history:")
for pi in (150.0, 50.0, 0.0, -100.0, -500.0):
    print(f"  pi {pi:7.1f} -> shaped {reward_cvar_shaped(pi, history, p):9.1f}")
