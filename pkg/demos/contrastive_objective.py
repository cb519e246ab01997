"""The stop-gradient contrastive objective and its exact gradients.

Run: python demos/contrastive_objective.py
"""

import numpy as np

import asympatch as ap

rng = np.random.default_rng(0)
n, dim = 8, 16
q1, z1, q2, z2 = (rng.normal(size=(n, dim)) for _ in range(4))

res = ap.contrastive_loss(q1, z1, q2, z2, tau=0.1)
print(f"loss value {res.value:.4f}")
print("stop-gradient partials are exactly zero:",
      not res.grad_z1.any() and not res.grad_z2.any())

# finite differences on a few coordinates of q1, with the targets frozen
h = 1e-5
checks = []
for i, j in [(0, 0), (3, 7), (5, 15)]:
    qp = q1.copy(); qp[i, j] += h
    qm = q1.copy(); qm[i, j] -= h
    fd = (ap.contrastive_loss(qp, z1, q2, z2, 0.1).value
          - ap.contrastive_loss(qm, z1, q2, z2, 0.1).value) / (2 * h)
    rel = abs(fd - res.grad_q1[i, j]) / max(abs(fd), 1e-12)
    checks.append(rel)
    print(f"d/dq1[{i},{j}]: finite-diff {fd:+.6f}  analytic "
          f"{res.grad_q1[i, j]:+.6f}  rel err {rel:.2e}")

# cosine normalization: rescaling a row changes nothing, and the row's
# gradient is orthogonal to the row
q1s = q1.copy(); q1s[2] *= 2.0
same = ap.contrastive_loss(q1s, z1, q2, z2, 0.1).value
print(f"row rescale leaves value unchanged: {abs(same - res.value):.2e}")
print(f"grad-row orthogonality: {abs(float(res.grad_q1[2] @ q1[2])):.2e}")

# four views, cross pairs only: how the training harness consumes it
views = [(rng.normal(size=(n, dim)), rng.normal(size=(n, dim)))
         for _ in range(4)]
pairs = [(j, k) for j in (0, 1) for k in (2, 3)]
pairs += [(k, j) for j in (0, 1) for k in (2, 3)]
mv = ap.multiview_loss(views, 0.1, ordered_pairs=pairs)
print(f"4-view cross-branch loss {mv.value:.4f} over {len(pairs)} ordered pairs")
