"""Exact fractional Gaussian noise on a uniform grid.

Increments ``B^H(t_{m+1}) - B^H(t_m)`` are drawn with the Davies-Harte
circulant embedding; a dense Cholesky factor is used for short sequences when
the embedding is not nonnegative-definite.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# largest sequence for which the dense Cholesky fallback is attempted
CHOLESKY_MAX_N = 4096


class FgnError(ValueError):
    """Invalid noise parameters or an unusable covariance embedding."""


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche on 64-bit integers."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, index: int) -> int:
    """Per-sample seed ``splitmix64(master + (index + 1) * golden) mod 2**64``.

    Depends only on ``(master_seed, index)``, so an ensemble is reproducible
    regardless of the order or grouping in which samples are drawn.
    """
    return splitmix64((int(master_seed) + (int(index) + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class FgnSpec:
    hurst: float
    dt: float
    n_steps: int
    seed: int = 0
    white_noise: bool = False

    def __post_init__(self):
        if self.white_noise:
            if self.hurst != 0.5:
                raise FgnError("white-noise mode requires hurst == 0.5")
        elif not 0.5 < self.hurst < 1.0:
            raise FgnError(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if not self.dt > 0:
            raise FgnError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise FgnError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise FgnError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class FgnIncrements:
    values: np.ndarray
    spec: FgnSpec

    def __len__(self):
        return len(self.values)


def increment_autocovariance(hurst, lag, dt=1.0):
    """Covariance of two FBM increments ``lag`` steps apart.

    ``gamma(k) = dt**(2H) / 2 * (|k+1|**(2H) - 2|k|**(2H) + |k-1|**(2H))``.
    ``lag`` may be an integer array.
    """
    if not 0.0 < hurst < 1.0:
        raise FgnError(f"hurst must lie in (0, 1), got {hurst}")
    if dt <= 0:
        raise FgnError(f"dt must be positive, got {dt}")
    k = np.abs(np.asarray(lag, dtype=float))
    h2 = 2.0 * hurst
    g = 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)
    g = g * dt ** h2
    return float(g) if g.ndim == 0 else g


def psd(hurst: float, omega: float) -> float:
    """Power spectral density ``H Gamma(2H) sin(H pi) / pi * |omega|**(1-2H)``."""
    if not 0.0 < hurst < 1.0:
        raise FgnError(f"hurst must lie in (0, 1), got {hurst}")
    if omega == 0 and hurst > 0.5:
        raise FgnError("the spectral density diverges at omega = 0 for H > 1/2")
    scale = hurst * math.gamma(2.0 * hurst) * math.sin(hurst * math.pi) / math.pi
    return scale * abs(omega) ** (1.0 - 2.0 * hurst)


@functools.lru_cache(maxsize=16)
def _embedding(hurst: float, n: int):
    """Scaled square-root eigenvalues of the circulant embedding (unit dt).

    Returns ``("circulant", sqrt(lambda / 2n))`` or ``("cholesky", L)``.
    """
    gam = increment_autocovariance(hurst, np.arange(n + 1), 1.0)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() >= -1e-10 * lam.max():
        root = np.sqrt(np.clip(lam, 0.0, None) / len(row))
        root.setflags(write=False)
        return "circulant", root
    if n > CHOLESKY_MAX_N:
        raise FgnError(
            f"circulant embedding has negative eigenvalue {lam.min():.3e} "
            f"and n={n} exceeds the Cholesky fallback limit"
        )
    idx = np.arange(n)
    cov = gam[np.abs(idx[:, None] - idx[None, :])]
    low = np.linalg.cholesky(cov)
    low.setflags(write=False)
    return "cholesky", low


def _draw(hurst, n, rng, white_noise):
    if white_noise:
        return rng.standard_normal(n)
    kind, factor = _embedding(float(hurst), int(n))
    if kind == "cholesky":
        return factor @ rng.standard_normal(n)
    m = len(factor)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(factor * z).real[:n]


def sample_path(spec: FgnSpec) -> FgnIncrements:
    """One exact realization of ``n_steps`` increments, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(int(spec.seed))
    x = _draw(spec.hurst, spec.n_steps, rng, spec.white_noise)
    return FgnIncrements(x * spec.dt ** spec.hurst, spec)


def sample_increments(hurst, dt, n_steps, rngs, white_noise=False):
    """Rows of exact increments, one per generator in ``rngs``.

    Each row is what :func:`sample_path` would return for the generator's
    seed; callers that need several channels draw them in sequence from the
    same generator.
    """
    if not rngs:
        return np.empty((0, n_steps))
    FgnSpec(hurst, dt, n_steps, 0, white_noise)  # validation only
    out = np.empty((len(rngs), n_steps))
    for row, rng in enumerate(rngs):
        out[row] = _draw(hurst, n_steps, rng, white_noise)
    return out * dt ** hurst
