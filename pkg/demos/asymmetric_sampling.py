"""How the two sampling branches differ.

View 1 keeps a uniform 25% of its patches. View 2 is drawn with weight
(1 - r)^gamma against view 1's footprint: the higher the overlap ratio of a
patch, the less likely it survives. With gamma large, view 2 visibly avoids
view 1.

Run: python demos/asymmetric_sampling.py
"""

import numpy as np

import asympatch as ap

rng = np.random.default_rng(7)

# identical crops make the avoidance easy to read: each view-2 patch either
# coincides with a sampled view-1 cell (r = 1) or does not (r = 0)
crop = ap.full_image_crop(32)
grid = ap.PatchGrid(crop=crop, patch_size=2)

view1 = ap.sample_sparse(grid, 0.25, rng)
profile = ap.overlap_profile(view1, grid)
print(f"{len(view1)} view-1 patches of {grid.n_patches}")

for gamma in (0.0, 1.0, 3.0, 8.0):
    weights = ap.selective_weights(profile, gamma)
    hits = []
    for _ in range(200):
        view2 = ap.sample_selective(grid, weights, 0.25, rng)
        hits.append(profile[list(view2.indices)].mean())
    print(f"gamma={gamma:>4}: mean overlap of view-2 picks "
          f"{np.mean(hits):.4f} (uniform would be {profile.mean():.4f})")

# multi-view reuse: four pairwise-disjoint uniform views tile the grid
views = ap.sample_multi_view(grid, 0.25, 4, rng)
all_idx = sorted(i for v in views for i in v.indices)
print("4 disjoint views cover the grid exactly:",
      all_idx == list(range(grid.n_patches)))
