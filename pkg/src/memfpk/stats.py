"""Marginals, moments, Monte Carlo histograms and error metrics on node grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .grid import GridGeometry, PdfGrid


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class MarginalPdf:
    axis: int  # 1 or 2
    centers: np.ndarray
    densities: np.ndarray
    time: float = 0.0

    @property
    def spacing(self) -> float:
        return float(self.centers[1] - self.centers[0])

    @property
    def mass(self) -> float:
        return float(self.densities.sum() * self.spacing)


@dataclass(frozen=True)
class Moments:
    mean: float
    std: float
    skewness: float
    kurtosis: float


@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    mean: np.ndarray  # (T, 2)
    std: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray

    @classmethod
    def from_pdfs(cls, pdfs) -> "MomentSeries":
        rows = [moments(p) for p in pdfs]
        def col(attr):
            return np.array([[getattr(m, attr) for m in r] for r in rows])
        return cls(np.array([p.time for p in pdfs]), col("mean"), col("std"),
                   col("skewness"), col("kurtosis"))


def marginals(p: PdfGrid) -> tuple[MarginalPdf, MarginalPdf]:
    """Riemann sums of the joint density along the other axis."""
    g = p.geometry
    m1 = p.values.sum(axis=1) * g.d2
    m2 = p.values.sum(axis=0) * g.d1
    return MarginalPdf(1, g.y1, m1, p.time), MarginalPdf(2, g.y2, m2, p.time)


def _moments_1d(x, f) -> Moments:
    mass = f.sum()
    if not mass > 0:
        raise StatsError("density has no mass")
    w = f / mass
    mu = float(w @ x)
    d = x - mu
    var = float(w @ d**2)
    if not var > 0:
        raise StatsError("density has zero variance")
    sd = var**0.5
    return Moments(mu, sd, float(w @ d**3) / sd**3, float(w @ d**4) / var**2)


def moments(p):
    """Moments of a :class:`MarginalPdf`, or a pair of them for a :class:`PdfGrid`.

    Kurtosis is the plain fourth standardized moment (3 for a Gaussian).
    """
    if isinstance(p, MarginalPdf):
        return _moments_1d(p.centers, p.densities)
    m1, m2 = marginals(p)
    return _moments_1d(m1.centers, m1.densities), _moments_1d(m2.centers, m2.densities)


def sample_moments(x) -> Moments:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return _moments_1d(x, np.ones_like(x))


def _cell_index(y, lo, d, n):
    # cells are [node - d/2, node + d/2), the last one closed
    k = np.floor((y - lo) / d + 0.5).astype(np.int64)
    top = lo + (n - 0.5) * d
    k = np.where(y == top, n - 1, k)
    inside = (y >= lo - 0.5 * d) & (y <= top) & (k >= 0) & (k < n)
    return np.where(inside, k, -1)


def histogram2d(states, geometry: GridGeometry, time: float = 0.0) -> PdfGrid:
    """Histogram density on the node grid; cells are centered on the nodes.

    Counts are divided by the total number of samples (diverged NaN rows
    included) and the cell area, so the mass equals the in-domain fraction.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    if n == 0:
        raise StatsError("no samples")
    with np.errstate(invalid="ignore"):
        i = _cell_index(states[:, 0], geometry.y1_min, geometry.d1, geometry.n1)
        j = _cell_index(states[:, 1], geometry.y2_min, geometry.d2, geometry.n2)
    ok = (i >= 0) & (j >= 0)
    if not ok.any():
        raise StatsError("no samples inside the grid")
    counts = np.bincount(i[ok] * geometry.n2 + j[ok], minlength=geometry.n1 * geometry.n2)
    vals = counts.reshape(geometry.shape) / (n * geometry.cell_area)
    return PdfGrid(vals, geometry, time, {"n_samples": n, "n_inside": int(ok.sum())})


@dataclass(frozen=True)
class Comparison:
    max_abs: float
    l1: float
    log_tail_max_abs: float
    threshold: float

    def as_dict(self) -> dict:
        return {"max_abs": self.max_abs, "l1": self.l1,
                "log_tail_max_abs": self.log_tail_max_abs, "threshold": self.threshold}


def compare(pa: PdfGrid, pb: PdfGrid, threshold: float = 1e-8) -> Comparison:
    if pa.geometry != pb.geometry:
        raise StatsError("grids differ")
    diff = np.abs(pa.values - pb.values)
    both = (pa.values > threshold) & (pb.values > threshold)
    if both.any():
        tail = float(np.max(np.abs(np.log10(pa.values[both]) - np.log10(pb.values[both]))))
    else:
        tail = float("nan")
    return Comparison(float(diff.max()), float(diff.sum() * pa.geometry.cell_area), tail, threshold)


def marginal_l1(a: MarginalPdf, b: MarginalPdf) -> float:
    if a.axis != b.axis or a.centers.shape != b.centers.shape or not np.allclose(a.centers, b.centers):
        raise StatsError("marginals live on different grids")
    return float(np.abs(a.densities - b.densities).sum() * a.spacing)


def local_maxima_1d(f, rel_height: float = 1e-3) -> np.ndarray:
    """Indices of interior local maxima above ``rel_height * max(f)``."""
    f = np.asarray(f, dtype=float)
    c = f[1:-1]
    peak = (c > f[:-2]) & (c >= f[2:]) & (c > rel_height * f.max())
    return np.flatnonzero(peak) + 1


def local_maxima_2d(values, rel_height: float = 1e-3) -> np.ndarray:
    """``(k, 2)`` node indices that dominate their 8 neighbours and exceed ``rel_height * max``."""
    v = np.asarray(values, dtype=float)
    top = maximum_filter(v, size=3, mode="constant", cval=-np.inf)
    peak = (v == top) & (v > rel_height * v.max())
    # keep only the first node of a flat plateau
    idx = np.argwhere(peak)
    keep = []
    for i, j in idx:
        if not any(abs(i - a) <= 1 and abs(j - b) <= 1 for a, b in keep):
            keep.append((i, j))
    return np.array(keep, dtype=int).reshape(-1, 2)
