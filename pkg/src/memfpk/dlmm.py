"""Discretized local mean estimates of the memory-dependent diffusion coefficients.

``b_kl(y, t) = sigma_k E[D_k Y_l(t) | Y(t) = y]`` is estimated by binning the
ensemble in state space, averaging the Malliavin samples per bin (empty bins
take the global mean), smoothing with a uniform kernel and interpolating
onto the solver grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import uniform_filter

from .grid import GridGeometry
from .simulate import EnsembleResult

log = logging.getLogger(__name__)


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class BinGrid:
    """``n1 x n2`` equal cells on a rectangle; counts are intervals, not edges."""

    y1_min: float
    y1_max: float
    y2_min: float
    y2_max: float
    n1: int = 30
    n2: int = 30

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise EstimatorError("bin counts must be >= 1")
        if not (self.y1_max > self.y1_min and self.y2_max > self.y2_min):
            raise EstimatorError("bin domain is degenerate")

    @property
    def edges1(self) -> np.ndarray:
        return np.linspace(self.y1_min, self.y1_max, self.n1 + 1)

    @property
    def edges2(self) -> np.ndarray:
        return np.linspace(self.y2_min, self.y2_max, self.n2 + 1)

    @property
    def centers1(self) -> np.ndarray:
        e = self.edges1
        return 0.5 * (e[:-1] + e[1:])

    @property
    def centers2(self) -> np.ndarray:
        e = self.edges2
        return 0.5 * (e[:-1] + e[1:])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)


@dataclass(frozen=True)
class BinAssignment:
    """Flat bin index per sample (``-1`` = excluded) and per-bin counts."""

    index: np.ndarray
    counts: np.ndarray  # (n1, n2)
    n_outside: int
    n_invalid: int

    @property
    def n_excluded(self) -> int:
        return self.n_outside + self.n_invalid


def _axis_index(y, edges):
    # half-open [e_k, e_{k+1}); the last cell also takes its upper edge
    n = len(edges) - 1
    idx = np.searchsorted(edges, y, side="right") - 1
    idx = np.where(y == edges[-1], n - 1, idx)
    inside = (y >= edges[0]) & (y <= edges[-1])
    return np.where(inside, idx, -1)


def bin_assign(states: np.ndarray, bins: BinGrid) -> BinAssignment:
    """Assign ``(N, 2)`` states to bins; NaN rows (diverged paths) count as invalid."""
    states = np.asarray(states, dtype=float)
    invalid = ~np.all(np.isfinite(states), axis=1)
    with np.errstate(invalid="ignore"):
        i = _axis_index(states[:, 0], bins.edges1)
        j = _axis_index(states[:, 1], bins.edges2)
    ok = (i >= 0) & (j >= 0) & ~invalid
    flat = np.where(ok, i * bins.n2 + j, -1)
    counts = np.bincount(flat[ok], minlength=bins.n1 * bins.n2).reshape(bins.shape)
    return BinAssignment(flat, counts, int((~ok & ~invalid).sum()), int(invalid.sum()))


def local_means(assign: BinAssignment, values: np.ndarray, sigma_k: float,
                shape: tuple[int, int]) -> np.ndarray:
    """Per-bin mean of ``sigma_k * d``; empty bins take the mean over all valid samples."""
    values = np.asarray(values, dtype=float)
    valid = np.isfinite(values)
    if not valid.any():
        raise EstimatorError("no valid samples to average")
    if sigma_k == 0:
        return np.zeros(shape)
    scaled = sigma_k * values
    fallback = scaled[valid].mean()
    ok = assign.index >= 0
    sums = np.bincount(assign.index[ok], weights=scaled[ok], minlength=shape[0] * shape[1])
    counts = assign.counts.ravel()
    out = np.full(counts.shape, fallback)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    return out.reshape(shape)


def local_standard_errors(assign: BinAssignment, values: np.ndarray, sigma_k: float,
                          shape: tuple[int, int]) -> np.ndarray:
    """Standard error of each bin mean (NaN for bins with fewer than two samples)."""
    scaled = sigma_k * np.asarray(values, dtype=float)
    ok = assign.index >= 0
    n = shape[0] * shape[1]
    s1 = np.bincount(assign.index[ok], weights=scaled[ok], minlength=n)
    counts = assign.counts.ravel().astype(float)
    out = np.full(n, np.nan)
    many = counts > 1
    mean = np.zeros(n)
    mean[many] = s1[many] / counts[many]
    dev = (scaled[ok] - mean[assign.index[ok]]) ** 2
    s2 = np.bincount(assign.index[ok], weights=dev, minlength=n)
    out[many] = np.sqrt(s2[many] / (counts[many] - 1.0) / counts[many])
    return out.reshape(shape)


def smooth(raw: np.ndarray, radius: int) -> np.ndarray:
    """Uniform ``(2r+1) x (2r+1)`` moving average with nearest-edge replication."""
    if radius < 0:
        raise EstimatorError("smoothing radius must be >= 0")
    raw = np.asarray(raw, dtype=float)
    if radius == 0:
        return raw.copy()
    return uniform_filter(raw, size=2 * radius + 1, mode="nearest")


@dataclass
class CoefficientField:
    """Raw and smoothed ``b_kl`` at bin centers for each snapshot.

    ``raw[s, k, l]`` and ``smoothed[s, k, l]`` have the bin-grid shape.
    """

    times: np.ndarray
    bins: BinGrid
    raw: np.ndarray  # (S, 2, 2, n1, n2)
    smoothed: np.ndarray
    counts: np.ndarray  # (S, n1, n2)
    excluded: np.ndarray  # (S,)
    radius: int
    n_samples: int
    meta: dict = field(default_factory=dict)

    def snapshot_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"no snapshot at t={t}")
        return k


def estimate(ensemble: EnsembleResult, bins: BinGrid, radius: int = 1,
             symmetrize: bool = False) -> CoefficientField:
    """Build the coefficient field from every snapshot of ``ensemble``.

    ``symmetrize`` adds the reflected sample ``(-Y, D)`` for each ``(Y, D)``.
    That is exact for drifts odd under ``y -> -y`` (the Jacobian is then even,
    so the reflected path has the same Malliavin derivative) and removes the
    finite-ensemble asymmetry of the estimate.
    """
    if ensemble.n_samples == 0:
        raise EstimatorError("ensemble is empty")
    n_snap = len(ensemble.times)
    shape = bins.shape
    raw = np.zeros((n_snap, 2, 2) + shape)
    smoothed = np.zeros_like(raw)
    counts = np.zeros((n_snap,) + shape, dtype=np.int64)
    excluded = np.zeros(n_snap, dtype=np.int64)
    sigma = ensemble.sigma
    for s in range(n_snap):
        states = ensemble.states[s]
        mal = ensemble.malliavin[s]
        if symmetrize:
            states = np.concatenate([states, -states])
            mal = np.concatenate([mal, mal])
        assign = bin_assign(states, bins)
        counts[s] = assign.counts
        excluded[s] = assign.n_excluded
        for k in range(2):
            for l in range(2):
                raw[s, k, l] = local_means(assign, mal[:, k, l], sigma[k], shape)
                smoothed[s, k, l] = smooth(raw[s, k, l], radius)
    meta = {
        "model": ensemble.model_name,
        "seed": ensemble.master_seed,
        "symmetrized": symmetrize,
        "bins": [bins.y1_min, bins.y1_max, bins.y2_min, bins.y2_max, bins.n1, bins.n2],
    }
    return CoefficientField(np.asarray(ensemble.times, dtype=float), bins, raw, smoothed,
                            counts, excluded, radius, ensemble.n_samples, meta)


# --- interpolation onto the solver grid -------------------------------------


def _spatial(values: np.ndarray, bins: BinGrid, geometry: GridGeometry, method: str):
    c1, c2 = bins.centers1, bins.centers2
    pts = geometry.points()
    # constant extrapolation outside the hull of bin centers
    q1 = np.clip(pts[..., 0], c1[0], c1[-1])
    q2 = np.clip(pts[..., 1], c2[0], c2[-1])
    if len(c1) == 1 or len(c2) == 1:
        if values.size == 1:
            return np.full(geometry.shape, float(values.ravel()[0]))
        raise EstimatorError("interpolation needs at least two bins per axis")
    interp = RegularGridInterpolator((c1, c2), values, method=method)
    return interp(np.stack([q1, q2], axis=-1))


def _bracket(times, t):
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise EstimatorError(f"t={t} outside the snapshot range [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), len(times) - 2) if len(times) > 1 else 0
    if len(times) == 1:
        return 0, 0, 0.0
    w = (t - times[k]) / (times[k + 1] - times[k])
    return k, k + 1, float(np.clip(w, 0.0, 1.0))


def interpolate(coeffs: CoefficientField, geometry: GridGeometry, t: float,
                method: str = "linear", smoothed: bool = True):
    """``(b11, b12, b21, b22)`` on the solver nodes at time ``t``."""
    data = coeffs.smoothed if smoothed else coeffs.raw
    k0, k1, w = _bracket(coeffs.times, t)
    out = []
    for k in range(2):
        for l in range(2):
            a = _spatial(data[k0, k, l], coeffs.bins, geometry, method)
            if w > 0:
                a = (1.0 - w) * a + w * _spatial(data[k1, k, l], coeffs.bins, geometry, method)
            out.append(a)
    return tuple(out)


class DlmmCoefficients:
    """Coefficient source for the solver backed by a :class:`CoefficientField`.

    Spatial interpolation is done once per snapshot; each call only blends
    the two bracketing snapshots linearly in time.
    """

    name = "dlmm"

    def __init__(self, coeffs: CoefficientField, geometry: GridGeometry, method: str = "linear"):
        if method not in ("linear", "cubic"):
            raise EstimatorError("interpolation must be 'linear' or 'cubic'")
        self.times = coeffs.times
        self.method = method
        data = coeffs.smoothed
        # entries that vanish identically are passed to the solver as scalar 0
        self.zero = [[not np.any(data[:, k, l]) for l in range(2)] for k in range(2)]
        self.fields = np.zeros((len(self.times), 2, 2) + geometry.shape)
        for s in range(len(self.times)):
            for k in range(2):
                for l in range(2):
                    if not self.zero[k][l]:
                        self.fields[s, k, l] = _spatial(data[s, k, l], coeffs.bins, geometry, method)

    def __call__(self, t):
        k0, k1, w = _bracket(self.times, t)
        out = []
        for k in range(2):
            for l in range(2):
                if self.zero[k][l]:
                    out.append(0.0)
                elif w == 0:
                    out.append(self.fields[k0, k, l])
                else:
                    out.append((1.0 - w) * self.fields[k0, k, l] + w * self.fields[k1, k, l])
        return tuple(out)
