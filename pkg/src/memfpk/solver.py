"""Explicit finite-difference solver for the memory-dependent FPK equation.

    dp/dt = - sum_i d/dy_i (a_i p) + sum_ij d^2/(dy_i dy_j) (b_ij p)

with drift ``a = f(y)`` from the model and diffusion coefficients ``b_ij(y, t)``
supplied by a coefficient source. Forward Euler in time, centered
differences on the products ``a_i p`` and ``b_ij p``, homogeneous Dirichlet
boundary.

The advection and pure second-derivative terms use 4th-order centered
stencils by default (``order=2`` gives the classic 3-point ones). The mixed
derivative always uses the compact 4-point cross stencil: for the
single-degree-of-freedom oscillators the diffusion matrix is indefinite,
and the wider 4th-order cross stencil amplifies the anti-diffusive direction
until the march becomes unstable.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridGeometry, PdfGrid, SolverGrid
from .linear import LinearParams, gaussian_pdf, gwn_coeffs, memfpk_coeff_series
from .models import GaussianInit, SystemModel

log = logging.getLogger(__name__)

SCHEME = "forward-euler/centered/dirichlet"


class SolverError(RuntimeError):
    """Numerical failure while time marching."""


class CflError(SolverError):
    def __init__(self, t, dt_max, dt):
        super().__init__(f"CFL violated at t={t:.4g}: stable dt estimate {dt_max:.3e} < dt={dt:.3e}")
        self.t, self.dt_max, self.dt = t, dt_max, dt


@dataclass(frozen=True)
class SolverOptions:
    clamp: bool = False
    renormalize: bool = False
    upwind: bool = False
    check_cfl: bool = True
    order: int = 4


def initial_pdf(init: GaussianInit, geometry: GridGeometry) -> PdfGrid:
    """Initial Gaussian at the nodes, renormalized to unit grid mass."""
    p = gaussian_pdf(geometry, init.mean, init.covariance, 0.0)
    mass = p.mass
    if mass < 0.999:
        raise SolverError(f"grid captures only {mass:.6f} of the initial distribution")
    p.values /= mass
    return p


# --- coefficient sources ----------------------------------------------------
# Each source is called with a time and returns (b11, b12, b21, b22); each
# entry is a scalar or an array on the solver grid.


class GwnCoefficients:
    """White-noise limit: constant ``b22 = sigma^2 / 2``."""

    name = "gwn"

    def __init__(self, sigma: float):
        self.b = gwn_coeffs(sigma)

    def __call__(self, t):
        return 0.0, 0.0, self.b[0], self.b[1]


class LinearCoefficients:
    """Exact state-independent coefficients of the linear oscillator."""

    name = "analytic"

    def __init__(self, params: LinearParams, dt: float, t_final: float):
        n = int(round(t_final / dt))
        self.times = np.arange(n + 1) * dt
        self.series = memfpk_coeff_series(params, dt, n)

    def __call__(self, t):
        b21 = float(np.interp(t, self.times, self.series[:, 0]))
        b22 = float(np.interp(t, self.times, self.series[:, 1]))
        return 0.0, 0.0, b21, b22


# --- stencils ---------------------------------------------------------------
# Operators act on arrays padded with ``pad`` ghost layers of zeros (the
# Dirichlet condition extended outward) and return values on the nodes
# strictly inside the domain, shape (n1 - 2, n2 - 2).


def _shift(q, pad, di, dj):
    n1, n2 = q.shape[0] - 2 * pad, q.shape[1] - 2 * pad
    i0, j0 = pad + 1 + di, pad + 1 + dj
    return q[i0:i0 + n1 - 2, j0:j0 + n2 - 2]


def _first(q, d, axis, pad, order):
    def s(k):
        return _shift(q, pad, k, 0) if axis == 0 else _shift(q, pad, 0, k)
    if order == 2:
        return (s(1) - s(-1)) / (2.0 * d)
    return (8.0 * (s(1) - s(-1)) - (s(2) - s(-2))) / (12.0 * d)


def _second(q, d, axis, pad, order):
    def s(k):
        return _shift(q, pad, k, 0) if axis == 0 else _shift(q, pad, 0, k)
    if order == 2:
        return (s(1) - 2.0 * s(0) + s(-1)) / (d * d)
    return (16.0 * (s(1) + s(-1)) - 30.0 * s(0) - (s(2) + s(-2))) / (12.0 * d * d)


def _mixed(q, d1, d2, pad):
    return (_shift(q, pad, 1, 1) - _shift(q, pad, 1, -1)
            - _shift(q, pad, -1, 1) + _shift(q, pad, -1, -1)) / (4.0 * d1 * d2)


def _upwind_div(a, p, d, axis, pad):
    """Donor-node first-order approximation of ``d(a p)/dy``."""
    q = a * p
    def s(k):
        return _shift(q, pad, k, 0) if axis == 0 else _shift(q, pad, 0, k)
    back = (s(0) - s(-1)) / d
    fwd = (s(1) - s(0)) / d
    return np.where(_shift(a, pad, 0, 0) > 0, back, fwd)


def _is_zero(b):
    return np.isscalar(b) and b == 0


def _padded(x, pad):
    if np.isscalar(x):
        return x
    return np.pad(x, pad)


def rhs(p, a1, a2, b11, b12, b21, b22, geometry: GridGeometry, upwind=False, order=4):
    """Spatial operator on the interior nodes, shape ``(n1 - 2, n2 - 2)``.

    ``order`` selects 2nd- or 4th-order centered differences for every term
    but the mixed one. ``b12`` and ``b21`` share the same mixed stencil, so
    they enter through their sum; the coefficients are not symmetrized
    further.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    pad = order // 2
    d1, d2 = geometry.d1, geometry.d2
    pp = np.pad(p, pad)
    a1, a2 = _padded(a1, pad), _padded(a2, pad)
    if upwind:
        out = -_upwind_div(a1, pp, d1, 0, pad) - _upwind_div(a2, pp, d2, 1, pad)
    else:
        out = -_first(a1 * pp, d1, 0, pad, order) - _first(a2 * pp, d2, 1, pad, order)
    if not _is_zero(b11):
        out += _second(_padded(b11, pad) * pp, d1, 0, pad, order)
    if not _is_zero(b22):
        out += _second(_padded(b22, pad) * pp, d2, 1, pad, order)
    bx = np.add(b12, b21)
    if not _is_zero(bx):
        out += _mixed(_padded(bx, pad) * pp, d1, d2, pad)
    return out


def step(p: PdfGrid, a1, a2, b11, b12, b21, b22, dt: float, upwind: bool = False,
         order: int = 4) -> PdfGrid:
    """One forward-Euler step; boundary nodes stay at zero."""
    vals = p.values
    new = np.zeros_like(vals)
    with np.errstate(invalid="ignore", over="ignore"):
        new[1:-1, 1:-1] = vals[1:-1, 1:-1] + dt * rhs(vals, a1, a2, b11, b12, b21, b22,
                                                       p.geometry, upwind, order)
    if not np.all(np.isfinite(new)):
        raise SolverError(f"non-finite density after step at t={p.time + dt:.4g}")
    return PdfGrid(new, p.geometry, p.time + dt)


def stable_dt(a1, a2, b11, b12, b21, b22, geometry: GridGeometry) -> float:
    """Heuristic explicit-scheme bound.

    ``1 / max(2|b11|/d1^2 + 2|b22|/d2^2 + |b12+b21|/(d1 d2) + |a1|/d1 + |a2|/d2)``
    """
    d1, d2 = geometry.d1, geometry.d2
    rate = (2.0 * np.abs(b11) / d1**2 + 2.0 * np.abs(b22) / d2**2
            + np.abs(np.add(b12, b21)) / (d1 * d2) + np.abs(a1) / d1 + np.abs(a2) / d2)
    top = float(np.max(rate))
    return math.inf if top == 0 else 1.0 / top


@dataclass
class SolveResult:
    pdfs: list
    diagnostics: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def at(self, t: float) -> PdfGrid:
        for p in self.pdfs:
            if abs(p.time - t) < 1e-9:
                return p
        raise KeyError(f"no density reported at t={t}")

    @property
    def max_mass_drift(self) -> float:
        return max(d["mass_drift"] for d in self.diagnostics)


def solve(model: SystemModel, coefficients, grid: SolverGrid,
          options: SolverOptions = SolverOptions(), initial: PdfGrid | None = None) -> SolveResult:
    """March the initial density to ``grid.t_final``; densities are kept at ``grid.report_times``."""
    geom = grid.geometry
    p = initial_pdf(model.init, geom) if initial is None else initial
    pts = geom.points()
    drift = model.drift(pts)
    a1, a2 = drift[..., 0], drift[..., 1]

    report_steps = {grid.step_index(t): t for t in grid.report_times}
    out, diags = [], []
    clamped_total = 0.0
    renorm_total = 0.0
    backward_steps = 0

    def record(p, n):
        vals = p.values
        peak = float(vals.max())
        diags.append({
            "time": report_steps[n],
            "mass": p.mass,
            "mass_drift": abs(p.mass - 1.0),
            "min": float(vals.min()),
            "max": peak,
            "min_over_max": float(vals.min()) / peak if peak > 0 else 0.0,
            "clamped_mass": clamped_total,
            "renormalized_mass": renorm_total,
            "backward_diffusion_steps": backward_steps,
        })
        out.append(PdfGrid(vals.copy(), geom, report_steps[n]))

    if 0 in report_steps:
        record(p, 0)
    dt = grid.dt
    for n in range(grid.n_steps):
        t = n * dt
        b11, b12, b21, b22 = coefficients(t)
        if options.check_cfl:
            dt_max = stable_dt(a1, a2, b11, b12, b21, b22, geom)
            if dt_max < dt:
                raise CflError(t, dt_max, dt)
        if np.min(b11) < 0 or np.min(b22) < 0:
            # locally backward diffusion: ill-posed, usually an under-smoothed estimate
            if backward_steps == 0:
                log.warning("negative diagonal diffusion coefficient at t=%.4g", t)
            backward_steps += 1
        p = step(p, a1, a2, b11, b12, b21, b22, dt, options.upwind, options.order)
        if options.clamp:
            neg = p.values < 0
            if neg.any():
                clamped_total += float(-p.values[neg].sum() * geom.cell_area)
                p.values[neg] = 0.0
        if options.renormalize:
            m = p.mass
            renorm_total += abs(m - 1.0)
            p.values /= m
        p.time = (n + 1) * dt
        if n + 1 in report_steps:
            record(p, n + 1)

    meta = {
        "scheme": SCHEME,
        "upwind": options.upwind,
        "stencil_order": options.order,
        "clamp": options.clamp,
        "renormalize": options.renormalize,
        "coefficients": getattr(coefficients, "name", type(coefficients).__name__),
        "dt": dt,
        "grid": [geom.y1_min, geom.y1_max, geom.y2_min, geom.y2_max, geom.n1, geom.n2],
    }
    return SolveResult(out, diags, meta)
