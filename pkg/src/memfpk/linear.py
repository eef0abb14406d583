"""Exact results for the linear oscillator ``x'' + c x' + k x = sigma xi^H``.

State ``(x, v)``, system matrix ``A = [[0, 1], [-k, -c]]``. The response is
Gaussian; its mean is ``e^{At} mu0`` and its covariance is a double integral
against the kernel ``|u - v|^(2H-2)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from ._linalg import expm2
from .fgn import increment_autocovariance
from .grid import GridGeometry, PdfGrid
from .models import GaussianInit, ModelError, SystemModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearParams:
    k: float
    c: float
    sigma: float
    hurst: float
    init: GaussianInit

    def __post_init__(self):
        if self.k < 0 or self.c < 0:
            raise ModelError("k and c must be nonnegative")
        if not 0.5 <= self.hurst < 1.0:
            raise ModelError(f"hurst must lie in [1/2, 1), got {self.hurst}")

    @classmethod
    def from_model(cls, model: SystemModel) -> "LinearParams":
        if not model.is_linear:
            raise ModelError(f"model {model.name!r} is not the linear oscillator")
        return cls(model.params["k"], model.params["c"], model.sigma[1], model.hurst[1], model.init)

    @property
    def A(self) -> np.ndarray:
        return np.array([[0.0, 1.0], [-self.k, -self.c]])

    @property
    def damping_ratio(self) -> float:
        return self.c / (2.0 * math.sqrt(self.k)) if self.k > 0 else math.inf


@dataclass(frozen=True)
class GaussianSummary:
    times: np.ndarray
    means: np.ndarray  # (n, 2)
    covariances: np.ndarray  # (n, 2, 2)
    errors: np.ndarray  # (n,) estimated max-abs error of each covariance


def expm_A(params: LinearParams, t) -> np.ndarray:
    """``e^{At}`` for scalar or array ``t >= 0``; shape ``t.shape + (2, 2)``.

    Underdamped systems use the trigonometric closed form; everything else
    falls back to the generic 2x2 exponential.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    zeta = params.damping_ratio
    if not zeta < 1.0:
        return expm2(t[..., None, None] * params.A)
    wn = math.sqrt(params.k)
    wd = wn * math.sqrt(1.0 - zeta**2)
    r = zeta / math.sqrt(1.0 - zeta**2)
    e = np.exp(-zeta * wn * t)
    cs, sn = np.cos(wd * t), np.sin(wd * t)
    out = np.empty(t.shape + (2, 2))
    out[..., 0, 0] = e * (cs + r * sn)
    out[..., 0, 1] = e * sn / wd
    out[..., 1, 0] = -e * wn / math.sqrt(1.0 - zeta**2) * sn
    out[..., 1, 1] = e * (cs - r * sn)
    return out


# --- memory kernel integrals -------------------------------------------------


def kernel_cell_weights(hurst: float, h: float, n: int) -> np.ndarray:
    """Exact integrals of ``u^(2H-2)`` over ``[m h, (m+1) h]``, m = 0..n-1."""
    a = 2.0 * hurst - 1.0
    m = np.arange(n, dtype=float)
    w = np.empty(n)
    w[0] = h**a / a
    lo = np.log(m[1:] * h)
    # u1^a - u0^a written to stay accurate when a is small
    w[1:] = np.exp(a * lo) * np.expm1(a * np.log1p(1.0 / m[1:])) / a
    return w


def _kernel_integral(params: LinearParams, t: float, n: int) -> np.ndarray:
    """Midpoint product rule for ``int_0^t e^{Au} e2 u^(2H-2) du`` on n cells."""
    h = t / n
    mid = (np.arange(n) + 0.5) * h
    col = expm_A(params, mid)[:, :, 1]
    return kernel_cell_weights(params.hurst, h, n) @ col


def linear_memfpk_coeffs(params: LinearParams, t: float, rtol: float = 1e-6,
                         return_error: bool = False):
    """Diffusion coefficients ``(b21, b22)`` of the linear memory-dependent FPK equation.

    ``b2j = H (2H-1) sigma^2 int_0^t [e^{A(t-s)}]_{j2} (t-s)^(2H-2) ds``; the
    column taken is the one that multiplies the excited (velocity) channel.
    ``b11 = b12 = 0``. The singular kernel is integrated exactly per cell and
    the leading ``h^(2H)`` error term is removed by Richardson extrapolation;
    cells are halved until successive extrapolants agree to ``rtol`` in
    each component.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    h_ = params.hurst
    if t == 0 or params.sigma == 0:
        out = (0.0, 0.0)
        return (out, 0.0) if return_error else out
    if h_ == 0.5:
        out = gwn_coeffs(params.sigma)
        return (out, 0.0) if return_error else out

    pref = h_ * (2.0 * h_ - 1.0) * params.sigma**2
    fac = 2.0 ** (2.0 * h_)
    n = max(16, int(math.ceil(t / 0.02)))
    prev_int = _kernel_integral(params, t, n)
    prev_ext = None
    err = math.inf
    while n < 2**22:
        n *= 2
        cur = _kernel_integral(params, t, n)
        ext = (fac * cur - prev_int) / (fac - 1.0)
        if prev_ext is not None:
            diff = np.abs(ext - prev_ext)
            err = float(diff.max())
            # componentwise, so a small b21 is resolved as well as b22
            if np.all(diff <= rtol * np.abs(ext) + 1e-15):
                break
        prev_int, prev_ext = cur, ext
    else:
        log.warning("memory coefficient quadrature stopped at n=%d, error %.2e", n, err)
    b = pref * ext
    out = (float(b[0]), float(b[1]))
    return (out, pref * err) if return_error else out


def memfpk_coeff_series(params: LinearParams, dt: float, n_steps: int, sub: int = 4):
    """``(b21, b22)`` at ``t_n = n dt`` for n = 0..n_steps, computed cumulatively.

    One pass of the midpoint product rule on cells of ``dt/sub`` and one on
    ``dt/(2 sub)`` combined by Richardson extrapolation. Returns an array of
    shape ``(n_steps + 1, 2)``.
    """
    h_ = params.hurst
    if h_ == 0.5:
        out = np.tile(gwn_coeffs(params.sigma), (n_steps + 1, 1))
        out[0] = 0.0
        return out
    pref = h_ * (2.0 * h_ - 1.0) * params.sigma**2

    def cumulative(s):
        n = n_steps * s
        h = dt / s
        mid = (np.arange(n) + 0.5) * h
        col = expm_A(params, mid)[:, :, 1]
        acc = np.cumsum(kernel_cell_weights(h_, h, n)[:, None] * col, axis=0)
        return np.vstack([np.zeros(2), acc[s - 1::s]])

    coarse, fine = cumulative(sub), cumulative(2 * sub)
    fac = 2.0 ** (2.0 * h_)
    return pref * (fac * fine - coarse) / (fac - 1.0)


def gwn_coeffs(sigma: float):
    """Constant white-noise diffusion ``(b21, b22) = (0, sigma^2 / 2)``."""
    return (0.0, 0.5 * sigma**2)


# --- Gaussian response -----------------------------------------------------


def _toeplitz_quadform(gam: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``sum_{m,n} f_m f_n^T gam[|m-n|]`` for f of shape (n, 2), via FFT."""
    n = len(gam)
    col = np.concatenate([gam, [0.0], gam[:0:-1]])
    spec = np.fft.rfft(col)
    pad = np.zeros((2 * n, f.shape[1]))
    pad[:n] = f
    tf = np.fft.irfft(spec[:, None] * np.fft.rfft(pad, axis=0), n=2 * n, axis=0)[:n]
    out = f.T @ tf
    return 0.5 * (out + out.T)


def _noise_covariance(params: LinearParams, t: float, n: int) -> np.ndarray:
    # cell-pair integrals of H(2H-1)|u-v|^(2H-2) equal the FBM increment covariance
    h = t / n
    mid = (np.arange(n) + 0.5) * h
    f = params.sigma * expm_A(params, t - mid)[:, :, 1]
    gam = increment_autocovariance(params.hurst, np.arange(n), h)
    return _toeplitz_quadform(np.atleast_1d(gam), f)


def transient_covariance(params: LinearParams, t: float, atol: float = 1e-10):
    """Covariance of ``(X(t), V(t))`` and an error estimate.

    The square ``[0, t]^2`` is split into cell pairs on which the singular
    kernel is integrated exactly and the smooth factor is taken at the cell
    midpoints; grids are halved with Richardson extrapolation (order 2)
    until successive extrapolants agree to ``atol``.
    """
    e = expm_A(params, t)
    base = e @ params.init.covariance @ e.T
    if t == 0 or params.sigma == 0:
        return base, 0.0
    if params.hurst == 0.5:
        raise ValueError("use the white-noise Lyapunov solution for H = 1/2")
    n = max(32, int(math.ceil(t / 0.05)))
    prev = _noise_covariance(params, t, n)
    prev_ext = None
    err = math.inf
    while n < 2**20:
        n *= 2
        cur = _noise_covariance(params, t, n)
        ext = (4.0 * cur - prev) / 3.0
        if prev_ext is not None:
            err = float(np.max(np.abs(ext - prev_ext)))
            if err <= atol:
                break
        prev, prev_ext = cur, ext
    else:
        log.warning("covariance quadrature stopped at n=%d, error %.2e", n, err)
    return base + ext, err


def gaussian_summary(params: LinearParams, times, atol: float = 1e-10) -> GaussianSummary:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    means = expm_A(params, times) @ np.asarray(params.init.mean, dtype=float)
    covs = np.empty((len(times), 2, 2))
    errs = np.empty(len(times))
    for i, t in enumerate(times):
        covs[i], errs[i] = transient_covariance(params, float(t), atol)
    return GaussianSummary(times, means, covs, errs)


def gwn_stationary_covariance(params: LinearParams) -> np.ndarray:
    """Stationary covariance of the white-noise oscillator: ``A S + S A^T + diag(0, sigma^2) = 0``."""
    q = np.diag([0.0, params.sigma**2])
    return solve_continuous_lyapunov(params.A, -q)


def gaussian_pdf(geometry: GridGeometry, mean, cov, time: float = 0.0) -> PdfGrid:
    """Bivariate normal density at the grid nodes."""
    cov = np.asarray(cov, dtype=float)
    det = np.linalg.det(cov)
    if not det > 0:
        raise np.linalg.LinAlgError(f"covariance is singular (det={det:.3e})")
    inv = np.linalg.inv(cov)
    y1, y2 = geometry.mesh()
    d1, d2 = y1 - mean[0], y2 - mean[1]
    quad = inv[0, 0] * d1 * d1 + 2.0 * inv[0, 1] * d1 * d2 + inv[1, 1] * d2 * d2
    vals = np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))
    return PdfGrid(vals, geometry, time)


def analytic_pdf(params: LinearParams, t: float, geometry: GridGeometry) -> PdfGrid:
    s = gaussian_summary(params, [t])
    return gaussian_pdf(geometry, s.means[0], s.covariances[0], t)
