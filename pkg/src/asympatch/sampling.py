"""Dual patch sampling: uniform sparse draws for view 1 and selective,
overlap-penalized draws for view 2, plus disjoint multi-view reuse.

View 1 keeps a uniform sample of ``round(s1 * N)`` patches. View 2 is drawn
without replacement with per-patch weight ``(1 - r)**gamma``, where ``r`` is
the patch's overlap ratio against the union of view-1's sampled footprints;
fully overlapped patches (r = 1) get weight zero and are never drawn while
positive-weight patches remain. The constant ``(gamma + 1) * s1`` prefactor
of the selective density cancels in normalized draws, so it lives in the
analyzer (:mod:`asympatch.asymmetry`), not here.

Weighted sampling without replacement is realized with exponential race
keys: drawing the ``k`` smallest of ``E_i / w_i`` (``E_i`` iid standard
exponential) is distributed exactly like ``k`` sequential draws with
renormalized weights, but vectorizes. The equivalence is covered by an
enumeration test against the sequential scheme.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import PatchGrid, column_intervals, row_intervals


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling ratios, selectivity power, and view count."""

    s1: float = 0.25
    s2: float = 0.25
    gamma: float = 3.0
    n_views: int = 2

    def __post_init__(self):
        for name, s in (("s1", self.s1), ("s2", self.s2)):
            if not 0.0 < s <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {s}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.n_views < 1:
            raise ValueError(f"n_views must be >= 1, got {self.n_views}")
        if self.n_views > 2 and (self.n_views + 1) // 2 * max(self.s1, self.s2) > 1.0 + 1e-12:
            raise ValueError("disjoint multi-view reuse needs n_views/2 * s <= 1")


@dataclass(frozen=True)
class PatchIndexSet:
    """A sorted, duplicate-free set of patch indices on one grid."""

    grid: PatchGrid
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if any(idx[i] >= idx[i + 1] for i in range(len(idx) - 1)):
            raise ValueError("indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.grid.n_patches):
            raise ValueError("patch index out of grid range")

    def __len__(self) -> int:
        return len(self.indices)

    def mask(self) -> np.ndarray:
        """Boolean membership mask over the grid, shape (n_rows, n_cols)."""
        m = np.zeros(self.grid.n_patches, dtype=bool)
        m[list(self.indices)] = True
        return m.reshape(self.grid.n_rows, self.grid.n_cols)


def sample_count(ratio: float, n: int) -> int:
    """Number of patches kept at a given ratio: round-half-up of ratio * n."""
    return int(np.floor(ratio * n + 0.5))


def _as_index_set(grid: PatchGrid, idx: np.ndarray) -> PatchIndexSet:
    return PatchIndexSet(grid=grid, indices=tuple(int(i) for i in np.sort(idx)))


def sample_sparse(grid: PatchGrid, s1: float, rng: np.random.Generator) -> PatchIndexSet:
    """Uniform sample without replacement of round(s1 * N) patch indices."""
    if not 0.0 < s1 <= 1.0:
        raise ValueError(f"s1 must lie in (0, 1], got {s1}")
    n = grid.n_patches
    k = sample_count(s1, n)
    if k < 1:
        raise ValueError(f"ratio {s1} keeps no patch on a {n}-patch grid")
    return _as_index_set(grid, rng.choice(n, size=k, replace=False))


def overlap_profile(view1: PatchIndexSet, grid2: PatchGrid) -> np.ndarray:
    """Per-patch overlap ratios of ``grid2`` against view-1's sampled union.

    Element ``i`` equals the fraction of grid-2 patch ``i`` covered by the
    union of view-1's sampled footprints, all measured in source-image
    coordinates. Exploits the tensor-product structure of both grids: the
    intersection of patch (r2, c2) with cell (r1, c1) factors into a row
    overlap times a column overlap, so the whole profile is two small
    matrix products instead of N x N rect intersections.
    """
    grid1 = view1.grid
    if grid1.crop.source_size != grid2.crop.source_size:
        raise ValueError(
            "grids reference different source images: "
            f"{grid1.crop.source_size} vs {grid2.crop.source_size}"
        )
    ox = _interval_overlaps(column_intervals(grid2), column_intervals(grid1))
    oy = _interval_overlaps(row_intervals(grid2), row_intervals(grid1))
    m = view1.mask().astype(float)                      # (r1, c1)
    areas = oy @ m @ ox.T                               # (r2, c2)
    patch2_area = (grid2.patch_size * grid2.crop.scale_x) * \
                  (grid2.patch_size * grid2.crop.scale_y)
    return np.clip(areas / patch2_area, 0.0, 1.0).ravel()


def _interval_overlaps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise overlap lengths of interval arrays (m, 2), (k, 2) -> (m, k)."""
    lo = np.maximum(a[:, None, 0], b[None, :, 0])
    hi = np.minimum(a[:, None, 1], b[None, :, 1])
    return np.clip(hi - lo, 0.0, None)


def selective_weights(profile: np.ndarray, gamma: float) -> np.ndarray:
    """Relative draw weights (1 - r)**gamma for the selective view-2 sample."""
    r = np.asarray(profile, dtype=float)
    if r.min() < -1e-9 or r.max() > 1.0 + 1e-9:
        raise ValueError("overlap profile entries must lie in [0, 1]")
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return np.power(1.0 - np.clip(r, 0.0, 1.0), gamma)


def weighted_sample_without_replacement(weights: np.ndarray, k: int,
                                        rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` distinct indices with sequential-renormalized-draw law.

    Implemented as an exponential race: the k smallest keys ``E_i / w_i``.
    Indices with zero weight are only used to pad when fewer than ``k``
    weights are positive, uniformly at random, with a warning.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if not 0 < k <= w.size:
        raise ValueError(f"cannot draw {k} of {w.size} items")
    n_pos = int(np.count_nonzero(w > 0.0))
    keys = np.full(w.size, np.inf)
    pos = w > 0.0
    keys[pos] = rng.standard_exponential(n_pos) / w[pos]
    if n_pos >= k:
        return np.argpartition(keys, k - 1)[:k]
    warnings.warn(
        f"only {n_pos} positive weights for a draw of {k}; "
        "padding uniformly from zero-weight indices",
        RuntimeWarning,
        stacklevel=2,
    )
    chosen = np.flatnonzero(pos)
    zeros = np.flatnonzero(~pos)
    pad = rng.choice(zeros, size=k - n_pos, replace=False)
    return np.concatenate([chosen, pad])


def sample_selective(grid2: PatchGrid, weights: np.ndarray, s2: float,
                     rng: np.random.Generator) -> PatchIndexSet:
    """Weighted sample without replacement of round(s2 * N) grid-2 patches."""
    if not 0.0 < s2 <= 1.0:
        raise ValueError(f"s2 must lie in (0, 1], got {s2}")
    w = np.asarray(weights, dtype=float)
    if w.size != grid2.n_patches:
        raise ValueError(
            f"{w.size} weights for a {grid2.n_patches}-patch grid"
        )
    k = sample_count(s2, grid2.n_patches)
    if k < 1:
        raise ValueError(f"ratio {s2} keeps no patch on this grid")
    return _as_index_set(grid2, weighted_sample_without_replacement(w, k, rng))


def sample_selective_views(grid2: PatchGrid, weights: np.ndarray, s2: float,
                           n_views: int, rng: np.random.Generator) -> list[PatchIndexSet]:
    """Pairwise-disjoint selective samples for multi-view reuse.

    Consecutive chunks of the race ordering are exactly the continuation of
    sequential weighted draws, so view ``v`` is drawn from the pool left by
    views ``0..v-1`` with renormalized weights.
    """
    n = grid2.n_patches
    k = sample_count(s2, n)
    if n_views * k > n:
        raise ValueError(f"{n_views} disjoint views of {k} patches exceed {n}")
    w = np.asarray(weights, dtype=float)
    pos = w > 0.0
    keys = np.full(w.size, np.inf)
    keys[pos] = rng.standard_exponential(int(pos.sum())) / w[pos]
    if int(pos.sum()) >= n_views * k:
        order = np.argsort(keys, kind="stable")
    else:
        # zero-weight pool is tie-broken uniformly, mirroring the padding policy
        warnings.warn(
            "padding multi-view selective draw from zero-weight indices",
            RuntimeWarning,
            stacklevel=2,
        )
        chosen = np.flatnonzero(pos)[np.argsort(keys[pos], kind="stable")]
        order = np.concatenate([chosen, rng.permutation(np.flatnonzero(~pos))])
    return [_as_index_set(grid2, order[v * k:(v + 1) * k]) for v in range(n_views)]


def sample_multi_view(grid: PatchGrid, s: float, n_views: int,
                      rng: np.random.Generator) -> list[PatchIndexSet]:
    """Pairwise-disjoint uniform samples, each over the remaining pool."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    n = grid.n_patches
    k = sample_count(s, n)
    if k < 1:
        raise ValueError(f"ratio {s} keeps no patch on this grid")
    if n_views * k > n:
        raise ValueError(f"{n_views} disjoint views of {k} patches exceed {n}")
    perm = rng.permutation(n)
    return [_as_index_set(grid, perm[v * k:(v + 1) * k]) for v in range(n_views)]
