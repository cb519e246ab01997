"""Adaptive gradient clipping and the training schedules.

The clip threshold is alpha times the norm of an exponential moving average
of past gradients, so it tracks the natural decay of gradient magnitude and
only reacts to abnormal spikes.

Run: python demos/adaptive_clipping.py
"""

import numpy as np

import asympatch as ap

rng = np.random.default_rng(0)
state = ap.ClipState(m=0.4, alpha=1.05)

print("decaying gradient stream with two injected spikes:")
for t in range(12):
    scale = 1.0 / (1.0 + 0.3 * t)
    if t in (5, 9):
        scale *= 6.0           # abnormal fluctuation
    g = rng.normal(size=64) * scale
    out = ap.clip_update(state, g)
    flag = "CLIPPED" if out is not g else "       "
    print(f"  t={t:2d} |g|={np.linalg.norm(g):7.3f} -> "
          f"|out|={np.linalg.norm(out):7.3f} {flag}")

print("\ncosine learning rate with warmup:")
for step in (0, 5, 10, 55, 100):
    print(f"  step {step:3d}: lr = {ap.cosine_lr(step, 10, 100, 1e-3):.2e}")

print("\nmomentum-encoder coefficient schedule 0.99 -> 1.0:")
sched = ap.EmaSchedule(0.99, 1.0, total_steps=100)
for step in (0, 25, 50, 100):
    print(f"  step {step:3d}: coefficient = {sched.coefficient(step):.5f}")
