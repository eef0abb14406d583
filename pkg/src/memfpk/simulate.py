"""Sample-path ensembles with Malliavin-derivative tracking.

Each path of ``dY = f(Y) dt + diag(sigma) dB^H`` is integrated with a Heun
predictor-corrector driven by exact FBM increments. Along the path the
one-step propagators ``P_m = exp(J(Y_mid) dt)`` of the variational equation
are stored, and at snapshot times the diagonal Malliavin derivatives

    D_i Y(t_h) = H_i (2H_i - 1) sigma_i int_0^{t_h} Phi(t_h, s) e_i (t_h - s)^(2H_i - 2) ds

are evaluated by product integration: the singular kernel is integrated
exactly over each step and ``Phi(t_h, s)`` is taken at the step midpoint,
accumulated backward from the stored propagators (no matrix inversion).
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from ._linalg import expm2, matmul2
from .fgn import _draw, mix_seed
from .linear import kernel_cell_weights
from .models import SystemModel

log = logging.getLogger(__name__)

SCHEME = "heun-predictor-corrector/exact-fgn-davies-harte"

# state magnitude treated as divergence
BLOWUP = 1e8
MAX_DIVERGED_FRACTION = 0.01


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimGrid:
    dt: float
    n_steps: int
    snapshot_stride: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or self.snapshot_stride < 1:
            raise ValueError("n_steps and snapshot_stride must be >= 1")
        if self.n_steps % self.snapshot_stride:
            raise ValueError("snapshot_stride must divide n_steps")

    @property
    def snapshot_steps(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.snapshot_stride)

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.snapshot_steps * self.dt

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def step_of(self, t: float) -> int:
        m = int(round(t / self.dt))
        if abs(m * self.dt - t) > 1e-9 * max(1.0, t) or not 0 <= m <= self.n_steps:
            raise ValueError(f"time {t} is not on the simulation grid")
        return m


@dataclass
class SamplePath:
    states: np.ndarray  # (n+1, 2)
    step_props: np.ndarray  # (n, 2, 2)
    half_props: np.ndarray  # (n, 2, 2), exp(J dt / 2)
    diverged_at: int = -1
    malliavin: dict = field(default_factory=dict)  # t_h -> (2 channels, 2) array

    @property
    def valid(self) -> bool:
        return self.diverged_at < 0


@dataclass
class EnsembleResult:
    """Per-snapshot table of states and Malliavin diagonals.

    ``malliavin[s, q, i, j]`` is ``D_{i,t_s} Y_j(t_s)`` of sample ``q`` (noise
    intensity included, channel ``i``, state component ``j``).
    """

    times: np.ndarray  # (S,)
    states: np.ndarray  # (S, N, 2)
    malliavin: np.ndarray  # (S, N, 2, 2)
    diverged_at: np.ndarray  # (N,), -1 when the path stayed finite
    model_name: str
    sigma: tuple
    grid: SimGrid
    master_seed: int
    scheme: str = SCHEME
    kernel_point: str = "midpoint"

    @property
    def n_samples(self) -> int:
        return self.states.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.diverged_at < 0

    @property
    def n_diverged(self) -> int:
        return int((~self.valid).sum())


# --- integration -------------------------------------------------------------


def _integrate_batch(model: SystemModel, grid: SimGrid, y0, db):
    """Heun integration of N paths at once.

    ``y0`` is (N, 2), ``db`` is (N, 2, n) FBM increments (zero rows for
    silent channels). Returns states (n+1, N, 2), P (n, N, 2, 2),
    Q (n, N, 2, 2) and the divergence step per path.
    """
    n, dt = grid.n_steps, grid.dt
    nsamp = y0.shape[0]
    sig = np.asarray(model.sigma, dtype=float)
    states = np.empty((n + 1, nsamp, 2))
    props = np.empty((n, nsamp, 2, 2))
    halves = np.empty((n, nsamp, 2, 2))
    diverged = np.full(nsamp, -1, dtype=np.int64)
    y = np.array(y0, dtype=float)
    states[0] = y
    noise = np.transpose(db, (2, 0, 1)) * sig  # (n, N, 2)
    eye = np.eye(2)
    for m in range(n):
        f0 = model.drift(y)
        pred = y + dt * f0 + noise[m]
        with np.errstate(all="ignore"):
            ynew = y + 0.5 * dt * (f0 + model.drift(pred)) + noise[m]
            bad = ~np.all(np.isfinite(ynew) & (np.abs(ynew) < BLOWUP), axis=1)
        if bad.any():
            fresh = bad & (diverged < 0)
            diverged[fresh] = m + 1
            ynew[bad] = 0.0
        with np.errstate(all="ignore"):
            # paths about to blow up may overflow here; they are reset below
            half = expm2(model.jacobian(0.5 * (y + ynew)) * (0.5 * dt))
            halves[m] = half
            props[m] = matmul2(half, half)
        stiff = ~np.all(np.isfinite(props[m]), axis=(1, 2)) & (diverged < 0)
        diverged[stiff] = m + 1
        if (diverged >= 0).any():
            dead = diverged >= 0
            halves[m, dead] = eye
            props[m, dead] = eye
            ynew[dead] = 0.0
        states[m + 1] = ynew
        y = ynew
    for q in np.flatnonzero(diverged >= 0):
        states[diverged[q]:, q] = np.nan
    return states, props, halves, diverged


@numba.njit(cache=True, nogil=True)
def _malliavin_kernel(props, halves, snap_steps, weights, midpoint, out):
    # props, halves: (n, N, 2, 2); weights: (2, n + 1) with weights[c, k] the
    # scaled kernel integral over the step ending k steps before t_h
    nsamp = props.shape[1]
    for q in range(nsamp):
        for s in range(snap_steps.shape[0]):
            h = snap_steps[s]
            f00, f01, f10, f11 = 1.0, 0.0, 0.0, 1.0
            a00 = 0.0
            a01 = 0.0
            a10 = 0.0
            a11 = 0.0
            for m in range(h - 1, -1, -1):
                k = h - m
                if midpoint:
                    g = halves[m, q]
                else:
                    g = props[m, q]
                r00 = f00 * g[0, 0] + f01 * g[1, 0]
                r01 = f00 * g[0, 1] + f01 * g[1, 1]
                r10 = f10 * g[0, 0] + f11 * g[1, 0]
                r11 = f10 * g[0, 1] + f11 * g[1, 1]
                w0 = weights[0, k]
                w1 = weights[1, k]
                # channel 0 uses column 0 of Phi, channel 1 column 1
                a00 += w0 * r00
                a01 += w0 * r10
                a10 += w1 * r01
                a11 += w1 * r11
                p = props[m, q]
                t00 = f00 * p[0, 0] + f01 * p[1, 0]
                t01 = f00 * p[0, 1] + f01 * p[1, 1]
                t10 = f10 * p[0, 0] + f11 * p[1, 0]
                t11 = f10 * p[0, 1] + f11 * p[1, 1]
                f00, f01, f10, f11 = t00, t01, t10, t11
            out[s, q, 0, 0] = a00
            out[s, q, 0, 1] = a01
            out[s, q, 1, 0] = a10
            out[s, q, 1, 1] = a11


def _channel_weights(model: SystemModel, dt: float, n: int) -> np.ndarray:
    w = np.zeros((2, n + 1))
    for c in model.channels:
        h = model.hurst[c]
        if h > 0.5:
            w[c, 1:] = h * (2.0 * h - 1.0) * model.sigma[c] * kernel_cell_weights(h, dt, n)
    return w


def _white_noise_channels(model: SystemModel):
    return [c for c in model.channels if model.hurst[c] == 0.5]


def _malliavin_batch(model, grid, props, halves, snap_steps, kernel_point="midpoint"):
    if kernel_point not in ("midpoint", "left"):
        raise ValueError("kernel_point must be 'midpoint' or 'left'")
    nsamp = props.shape[1]
    out = np.zeros((len(snap_steps), nsamp, 2, 2))
    weights = _channel_weights(model, grid.dt, grid.n_steps)
    _malliavin_kernel(props, halves, np.asarray(snap_steps, dtype=np.int64), weights,
                      kernel_point == "midpoint", out)
    # H = 1/2: the kernel degenerates to a delta at s = t with half weight
    for c in _white_noise_channels(model):
        out[:, :, c, :] = 0.0
        out[np.asarray(snap_steps) > 0, :, c, c] = 0.5 * model.sigma[c]
    return out


def integrate_path(model: SystemModel, grid: SimGrid, noise, y0) -> SamplePath:
    """Integrate one path.

    ``noise`` holds one increment sequence per channel (arrays or
    :class:`FgnIncrements`); entries for silent channels may be ``None``.
    """
    db = np.zeros((1, 2, grid.n_steps))
    for c in range(2):
        inc = noise[c] if c < len(noise) else None
        if inc is None:
            if model.sigma[c] != 0:
                raise ValueError(f"channel {c} is excited but no noise was given")
            continue
        vals = np.asarray(getattr(inc, "values", inc), dtype=float)
        if vals.shape != (grid.n_steps,):
            raise ValueError(f"channel {c} noise has length {vals.shape}, expected {grid.n_steps}")
        db[0, c] = vals
    states, props, halves, div = _integrate_batch(model, grid, np.atleast_2d(y0), db)
    if div[0] >= 0:
        log.warning("path diverged at step %d", div[0])
    return SamplePath(states[:, 0], props[:, 0], halves[:, 0], int(div[0]))


def malliavin_diagonal(path: SamplePath, model: SystemModel, grid: SimGrid, t_h: float,
                       kernel_point: str = "midpoint") -> np.ndarray:
    """``(D_1 Y(t_h), D_2 Y(t_h))`` as a (2, 2) array, row = channel."""
    h = grid.step_of(t_h)
    if h > len(path.step_props):
        raise ValueError("path was not integrated through t_h")
    if not path.valid and path.diverged_at <= h:
        return np.full((2, 2), np.nan)
    out = _malliavin_batch(model, grid, path.step_props[:, None], path.half_props[:, None],
                           [h], kernel_point)
    return out[0, 0]


# --- ensembles ---------------------------------------------------------------


def _draw_inputs(model: SystemModel, n_steps: int, master_seed: int, indices):
    """Initial states and increments for the given sample indices.

    Sample ``q`` always uses the generator seeded with ``mix_seed(master, q)``
    and consumes it in the same order: initial state, channel 1, channel 2.
    """
    y0 = np.empty((len(indices), 2))
    db = np.zeros((len(indices), 2, n_steps))
    for row, q in enumerate(indices):
        rng = np.random.default_rng(mix_seed(master_seed, q))
        y0[row] = model.init.sample(rng)
        for c in model.channels:
            h = model.hurst[c]
            db[row, c] = _draw(h, n_steps, rng, h == 0.5)
    return y0, db


def _scale_increments(model, db, dt):
    for c in model.channels:
        db[:, c] *= dt ** model.hurst[c]
    return db


def _run_chunk(model, grid, master_seed, indices, kernel_point):
    y0, db = _draw_inputs(model, grid.n_steps, master_seed, indices)
    _scale_increments(model, db, grid.dt)
    states, props, halves, div = _integrate_batch(model, grid, y0, db)
    snaps = grid.snapshot_steps
    mal = _malliavin_batch(model, grid, props, halves, snaps, kernel_point)
    for row in np.flatnonzero(div >= 0):
        mal[snaps >= div[row], row] = np.nan
    return states[snaps], mal, div


def _chunks(n, size):
    return [np.arange(a, min(a + size, n)) for a in range(0, n, size)]


def run_ensemble(model: SystemModel, grid: SimGrid, n_samples: int, master_seed: int,
                 threads: int = 1, chunk_size: int = 128,
                 kernel_point: str = "midpoint") -> EnsembleResult:
    """Simulate ``n_samples`` independent paths with Malliavin diagonals at every snapshot.

    Samples are processed in fixed-size chunks; ``threads`` only changes how
    many chunks run concurrently, never the numbers produced.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    chunks = _chunks(n_samples, chunk_size)

    def work(idx):
        return _run_chunk(model, grid, master_seed, idx, kernel_point)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(idx) for idx in chunks]
    states = np.concatenate([p[0] for p in parts], axis=1)
    mal = np.concatenate([p[1] for p in parts], axis=1)
    div = np.concatenate([p[2] for p in parts])
    result = EnsembleResult(grid.snapshot_times, states, mal, div, model.name,
                            tuple(model.sigma), grid, int(master_seed), kernel_point=kernel_point)
    frac = result.n_diverged / n_samples
    if frac > MAX_DIVERGED_FRACTION:
        raise EnsembleError(f"{result.n_diverged} of {n_samples} paths diverged")
    if result.n_diverged:
        log.warning("%d paths diverged and are excluded", result.n_diverged)
    return result


def sample_states(model: SystemModel, dt: float, n_steps: int, times, n_samples: int,
                  master_seed: int, chunk_size: int = 1024, threads: int = 1) -> np.ndarray:
    """States only (no variational tracking) at ``times``; shape (len(times), N, 2).

    Used for Monte Carlo reference densities. Diverged paths are NaN.
    """
    grid = SimGrid(dt, n_steps, 1)
    steps = np.array([grid.step_of(t) for t in times])

    def work(idx):
        y0, db = _draw_inputs(model, n_steps, master_seed, idx)
        _scale_increments(model, db, dt)
        return _states_only(model, grid, y0, db, steps)

    chunks = _chunks(n_samples, chunk_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(idx) for idx in chunks]
    return np.concatenate(parts, axis=1)


def _states_only(model, grid, y0, db, steps):
    dt = grid.dt
    sig = np.asarray(model.sigma, dtype=float)
    noise = np.transpose(db, (2, 0, 1)) * sig
    out = np.empty((len(steps), y0.shape[0], 2))
    want = {int(s): i for i, s in enumerate(steps)}
    y = np.array(y0, dtype=float)
    dead = np.zeros(y.shape[0], dtype=bool)
    if 0 in want:
        out[want[0]] = y
    for m in range(grid.n_steps):
        f0 = model.drift(y)
        pred = y + dt * f0 + noise[m]
        with np.errstate(all="ignore"):
            y = y + 0.5 * dt * (f0 + model.drift(pred)) + noise[m]
            bad = ~np.all(np.isfinite(y) & (np.abs(y) < BLOWUP), axis=1)
        if bad.any():
            dead |= bad
            y[bad] = 0.0
        if m + 1 in want:
            snap = y.copy()
            snap[dead] = np.nan
            out[want[m + 1]] = snap
    return out
