"""Analytic and Monte Carlo quantification of positive-pair spatial asymmetry.

The closed forms:

* naive expectation ``s1 * s2`` — both views sample the same crop uniformly,
  so each grid patch is jointly kept with probability ``s1 * s2``;
* selective expectation ``s1 * s2 / (gamma + 2)`` — the idealized
  continuous-overlap model of the selective density
  ``p(r) = (gamma + 1) * s1 * (1 - r)**gamma``;
* the normalization identity: the density integrates to ``s1`` over
  ``r in [0, 1]`` for every ``gamma >= 0``.

The Monte Carlo estimator simulates the actual pipeline (random or identical
crops, uniform view-1 sampling, weighted view-2 sampling without
replacement) and reports the mean pair overlap ratio: the summed overlap of
view-2's sampled patches against view-1's sampled union, normalized by the
full view-2 grid area. Under identical crops this makes the naive estimator
an exact, unbiased probe of ``s1 * s2``.

Pair overlap of a trial is ``sum_i r_i / N`` over view-2's sampled patches,
i.e. the fraction of the view-2 crop covered by both sampled views.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import integrate

CROP_MODELS = ("identical", "random")

# random-resized-crop distribution used by the simulated views (CIFAR-style):
# crop area fraction uniform in [0.15, 1], aspect ratio log-uniform in [3/4, 4/3]
DEFAULT_AREA_RANGE = (0.15, 1.0)
DEFAULT_ASPECT_RANGE = (0.75, 4.0 / 3.0)


def expected_overlap_naive(s1: float, s2: float) -> float:
    """Expected pair overlap when both views sample one crop uniformly."""
    _check_ratio("s1", s1)
    _check_ratio("s2", s2)
    return s1 * s2


def expected_overlap_selective(s1: float, s2: float, gamma: float) -> float:
    """Expected pair overlap of the selective strategy, continuous-r model."""
    _check_ratio("s1", s1)
    _check_ratio("s2", s2)
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return s1 * s2 / (gamma + 2.0)


def selective_density(r, gamma: float, s1: float):
    """Selective sampling density (gamma + 1) * s1 * (1 - r)**gamma."""
    return (gamma + 1.0) * s1 * np.power(1.0 - np.asarray(r, dtype=float), gamma)


def pdf_normalization(gamma: float, s1: float) -> float:
    """Numeric integral of the selective density over r in [0, 1].

    Adaptive quadrature, deliberately not reusing the closed form it is meant
    to verify; the result must equal ``s1``.
    """
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    _check_ratio("s1", s1)
    value, _ = integrate.quad(selective_density, 0.0, 1.0, args=(gamma, s1))
    return float(value)


@dataclass(frozen=True)
class AsymmetryReport:
    """One strategy's analytic expectation next to its Monte Carlo estimate."""

    strategy: str
    crop_model: str
    analytic: float
    estimate: float
    std_error: float
    trials: int
    s1: float
    s2: float
    gamma: float
    grid_size: int

    def __post_init__(self):
        if not 0.0 <= self.analytic <= self.s1 * self.s2 + 1e-12:
            raise ValueError("analytic expectation must lie in [0, s1*s2]")

    @property
    def non_overlap_estimate(self) -> float:
        return 1.0 - self.estimate

    @property
    def non_overlap_analytic(self) -> float:
        return 1.0 - self.analytic

    def csv_row(self) -> str:
        return ",".join([
            self.strategy, self.crop_model, repr(self.s1), repr(self.s2),
            repr(self.gamma), str(self.grid_size), str(self.trials),
            repr(self.analytic), repr(self.estimate), repr(self.std_error),
        ])


CSV_HEADER = ("strategy,crop_model,s1,s2,gamma,grid,trials,"
              "analytic,estimate,std_error")


def reports_to_csv(reports) -> str:
    lines = [CSV_HEADER] + [r.csv_row() for r in reports]
    return "\n".join(lines) + "\n"


def reports_to_table(reports) -> str:
    """Plain-text comparison table, one row per configuration."""
    buf = io.StringIO()
    cols = ("strategy", "crops", "s1", "s2", "gamma", "grid",
            "trials", "analytic", "estimate", "stderr")
    buf.write("{:<10} {:<10} {:>5} {:>5} {:>6} {:>5} {:>8} {:>10} {:>10} {:>10}\n"
              .format(*cols))
    for r in reports:
        buf.write(
            f"{r.strategy:<10} {r.crop_model:<10} {r.s1:>5.3g} {r.s2:>5.3g} "
            f"{r.gamma:>6.3g} {r.grid_size:>5d} {r.trials:>8d} "
            f"{r.analytic:>10.6f} {r.estimate:>10.6f} {r.std_error:>10.2e}\n"
        )
    return buf.getvalue()


def monte_carlo_overlap(strategy: str, s1: float, s2: float, gamma: float,
                        crop_model: str, grid_size: int, trials: int,
                        seed=0, chunk: int = 4096,
                        area_range=DEFAULT_AREA_RANGE,
                        aspect_range=DEFAULT_ASPECT_RANGE) -> AsymmetryReport:
    """Estimate the expected pair overlap ratio of a sampling strategy.

    Args:
        strategy: "naive" (uniform view 2) or "selective" (overlap-weighted).
        crop_model: "identical" (both views share the full-image crop) or
            "random" (independent random-resized crops for each view).
        grid_size: patches per side of both view grids.
        trials: number of simulated positive pairs (>= 1000).
        seed: int or ``numpy.random.SeedSequence``; trials run on spawned
            child streams, one per chunk, so partitioned (parallel-style) and
            serial execution of the same master seed agree in distribution.

    Returns an :class:`AsymmetryReport` holding both the analytic expectation
    of the strategy's idealized model and the empirical estimate.
    """
    if strategy not in ("naive", "selective"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if crop_model not in CROP_MODELS:
        raise ValueError(f"unknown crop model {crop_model!r}")
    if trials < 1000:
        raise ValueError("at least 1000 trials are required")
    values = _simulate_pair_overlaps(
        strategy, s1, s2, gamma, crop_model, grid_size, trials, seed, chunk,
        area_range, aspect_range,
    )
    analytic = (expected_overlap_naive(s1, s2) if strategy == "naive"
                else expected_overlap_selective(s1, s2, gamma))
    return AsymmetryReport(
        strategy=strategy,
        crop_model=crop_model,
        analytic=analytic,
        estimate=float(values.mean()),
        std_error=float(values.std(ddof=1) / np.sqrt(values.size)),
        trials=trials,
        s1=s1,
        s2=s2,
        gamma=gamma,
        grid_size=grid_size,
    )


def mechanism_expectation(s1: float, s2: float, gamma: float, crop_model: str,
                          grid_size: int, trials: int, seed=0,
                          chunk: int = 4096,
                          area_range=DEFAULT_AREA_RANGE,
                          aspect_range=DEFAULT_ASPECT_RANGE) -> float:
    """Selective expectation by direct integration over simulated geometry.

    Instead of drawing view 2, integrates the inclusion-probability model
    ``pi_i = k2 * w_i / sum(w)`` against the simulated overlap profiles:
    ``E[sum_i pi_i * r_i / N]``. This is the weighted-draw expectation with
    inclusion probabilities taken exactly proportional to the weights, and
    serves as an independent confirmation route for the Monte Carlo
    estimator (they agree up to the without-replacement correction).
    """
    values = _simulate_pair_overlaps(
        "mean-field", s1, s2, gamma, crop_model, grid_size, trials, seed,
        chunk, area_range, aspect_range,
    )
    return float(values.mean())


def _simulate_pair_overlaps(strategy, s1, s2, gamma, crop_model, grid_size,
                            trials, seed, chunk, area_range, aspect_range):
    _check_ratio("s1", s1)
    _check_ratio("s2", s2)
    n = int(grid_size)
    if n < 2:
        raise ValueError("grid_size must be at least 2")
    big_n = n * n
    k1 = int(np.floor(s1 * big_n + 0.5))
    k2 = int(np.floor(s2 * big_n + 0.5))
    seq = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    n_chunks = (trials + chunk - 1) // chunk
    streams = [np.random.default_rng(s) for s in seq.spawn(n_chunks)]
    out = np.empty(trials)
    done = 0
    for rng in streams:
        c = min(chunk, trials - done)
        r = _chunk_profiles(rng, c, n, k1, crop_model, area_range, aspect_range)
        if strategy == "naive":
            sel = _uniform_masks(rng, c, big_n, k2)
            vals = (r * sel).sum(axis=1) / big_n
        elif strategy == "selective":
            w = np.power(1.0 - r, gamma)
            keys = np.full((c, big_n), np.inf)
            pos = w > 0.0
            keys[pos] = rng.standard_exponential(int(pos.sum())) / w[pos]
            enough = pos.sum(axis=1) >= k2
            take = np.argpartition(keys, k2 - 1, axis=1)[:, :k2]
            vals = np.take_along_axis(r, take, axis=1).sum(axis=1) / big_n
            if not np.all(enough):
                # rare degenerate rows: route through the padding policy
                from .sampling import weighted_sample_without_replacement
                for i in np.flatnonzero(~enough):
                    idx = weighted_sample_without_replacement(w[i], k2, rng)
                    vals[i] = r[i, idx].sum() / big_n
        else:  # mean-field integration, no draw
            w = np.power(1.0 - r, gamma)
            vals = k2 * (w * r).sum(axis=1) / w.sum(axis=1) / big_n
        out[done:done + c] = vals
        done += c
    return out


def _chunk_profiles(rng, c, n, k1, crop_model, area_range, aspect_range):
    """Overlap profiles of grid-2 patches vs the sampled view-1 union, (c, n*n)."""
    side = 32.0  # source image side; the profile is scale-invariant
    if crop_model == "identical":
        x0a = np.zeros(c); y0a = np.zeros(c)
        wa = np.full(c, side); ha = np.full(c, side)
        x0b, y0b, wb, hb = x0a, y0a, wa, ha
    else:
        x0a, y0a, wa, ha = _random_crops(rng, c, side, area_range, aspect_range)
        x0b, y0b, wb, hb = _random_crops(rng, c, side, area_range, aspect_range)
    j = np.arange(n)
    xs1 = x0a[:, None] + j * (wa[:, None] / n)
    ys1 = y0a[:, None] + j * (ha[:, None] / n)
    xs2 = x0b[:, None] + j * (wb[:, None] / n)
    ys2 = y0b[:, None] + j * (hb[:, None] / n)
    ox = _pair_overlap(xs2, wb / n, xs1, wa / n)        # (c, c2, c1)
    oy = _pair_overlap(ys2, hb / n, ys1, ha / n)        # (c, r2, r1)
    m = _uniform_masks(rng, c, n * n, k1).reshape(c, n, n)
    areas = (oy @ m) @ np.swapaxes(ox, 1, 2)            # (c, r2, c2)
    patch2 = (wb / n) * (hb / n)
    return np.clip(areas / patch2[:, None, None], 0.0, 1.0).reshape(c, n * n)


def _pair_overlap(starts2, len2, starts1, len1):
    lo = np.maximum(starts2[:, :, None], starts1[:, None, :])
    hi = np.minimum((starts2 + len2[:, None])[:, :, None],
                    (starts1 + len1[:, None])[:, None, :])
    return np.clip(hi - lo, 0.0, None)


def _uniform_masks(rng, c, big_n, k):
    u = rng.random((c, big_n))
    part = np.argpartition(u, k - 1, axis=1)[:, :k]
    m = np.zeros((c, big_n))
    np.put_along_axis(m, part, 1.0, axis=1)
    return m


def _random_crops(rng, c, side, area_range, aspect_range):
    """Vectorized random-resized-crop boxes with resample-then-fallback."""
    lo, hi = area_range
    alo, ahi = aspect_range
    w = np.full(c, side * 0.9)
    h = np.full(c, side * 0.9)
    need = np.ones(c, dtype=bool)
    for _ in range(10):
        m = int(need.sum())
        if m == 0:
            break
        area = rng.uniform(lo, hi, m) * side * side
        ar = np.exp(rng.uniform(np.log(alo), np.log(ahi), m))
        ww = np.sqrt(area * ar)
        hh = np.sqrt(area / ar)
        ok = (ww <= side) & (hh <= side)
        rows = np.flatnonzero(need)[ok]
        w[rows] = ww[ok]
        h[rows] = hh[ok]
        need[rows] = False
    x0 = rng.random(c) * (side - w)
    y0 = rng.random(c) * (side - h)
    return x0, y0, w, h


def _check_ratio(name: str, value: float):
    if not 0.0 < value <= 1.0:
        raise ValueError(f"{name} must lie in (0, 1], got {value}")
