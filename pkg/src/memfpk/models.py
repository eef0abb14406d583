"""Two-dimensional systems ``dY = f(Y) dt + diag(sigma) dB^H`` and the builtin catalogue."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


class ModelError(ValueError):
    """Unknown model or invalid model parameters."""


@dataclass(frozen=True)
class GaussianInit:
    """Isotropic Gaussian initial distribution ``N(mean, var * I)``."""

    mean: tuple[float, float]
    var: float

    def __post_init__(self):
        if len(self.mean) != 2:
            raise ModelError("initial mean must have two components")
        if not self.var > 0:
            raise ModelError(f"initial variance must be positive, got {self.var}")

    @property
    def covariance(self) -> np.ndarray:
        return self.var * np.eye(2)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.mean, dtype=float) + np.sqrt(self.var) * rng.standard_normal(2)


@dataclass(frozen=True)
class SystemModel:
    """Drift, its Jacobian, diagonal noise and Hurst indices of one system.

    ``drift`` maps states of shape ``(..., 2)`` to ``(..., 2)``; ``jacobian``
    maps them to ``(..., 2, 2)`` with ``J[..., i, j] = d f_i / d y_j``.
    """

    name: str
    drift: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    sigma: tuple[float, float]
    hurst: tuple[float, float]
    init: GaussianInit
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        s1, s2 = self.sigma
        if s1 < 0 or s2 < 0:
            raise ModelError("noise intensities must be nonnegative")
        if s1 == 0 and s2 == 0:
            raise ModelError("at least one noise intensity must be nonzero")
        for h in self.hurst:
            if not 0.5 <= h < 1.0:
                raise ModelError(f"Hurst index must lie in [1/2, 1), got {h}")

    @property
    def channels(self) -> tuple[int, ...]:
        """Noise channels with nonzero intensity."""
        return tuple(i for i in (0, 1) if self.sigma[i] != 0)

    @property
    def is_linear(self) -> bool:
        return self.name == "linear_sdof"


# --- builtin systems -------------------------------------------------------


def _linear(p):
    k, c = p["k"], p["c"]
    a = np.array([[0.0, 1.0], [-k, -c]])

    def drift(y):
        y = np.asarray(y, dtype=float)
        return y @ a.T

    def jac(y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(a, y.shape[:-1] + (2, 2)).copy()

    return drift, jac


def _duffing(p):
    eta, alpha, beta = p["eta"], p["alpha"], p["beta"]

    def drift(y):
        y = np.asarray(y, dtype=float)
        x, v = y[..., 0], y[..., 1]
        out = np.empty_like(y)
        out[..., 0] = v
        out[..., 1] = -eta * v - (alpha + beta * x * x) * x
        return out

    def jac(y):
        y = np.asarray(y, dtype=float)
        x = y[..., 0]
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -alpha - 3.0 * beta * x**2
        out[..., 1, 1] = -eta
        return out

    return drift, jac


def _vdp(p):
    eta = p["eta"]

    def drift(y):
        y = np.asarray(y, dtype=float)
        x, v = y[..., 0], y[..., 1]
        out = np.empty_like(y)
        out[..., 0] = v
        out[..., 1] = -eta * (x * x + v * v - 1.0) * v - x
        return out

    def jac(y):
        y = np.asarray(y, dtype=float)
        x, v = y[..., 0], y[..., 1]
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -2.0 * eta * x * v - 1.0
        out[..., 1, 1] = -eta * (-1.0 + x**2 + 3.0 * v**2)
        return out

    return drift, jac


def _hill(y, m):
    # |y|**m keeps 1 + |y|**m >= 1 on negative concentrations
    return np.abs(y) ** m


def _hill_prime(y, m):
    return m * np.abs(y) ** (m - 1) * np.sign(y)


def _toggle(p):
    a1, a2 = p["alpha1"], p["alpha2"]
    m1, m2 = int(p["m1"]), int(p["m2"])

    def drift(y):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        out = np.empty_like(y)
        out[..., 0] = a1 / (1.0 + _hill(y2, m1)) - y1
        out[..., 1] = a2 / (1.0 + _hill(y1, m2)) - y2
        return out

    def jac(y):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        out = np.empty(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = -1.0
        out[..., 0, 1] = -a1 * _hill_prime(y2, m1) / (1.0 + _hill(y2, m1)) ** 2
        out[..., 1, 0] = -a2 * _hill_prime(y1, m2) / (1.0 + _hill(y1, m2)) ** 2
        out[..., 1, 1] = -1.0
        return out

    return drift, jac


def _positive(name):
    def check(v):
        if not v > 0:
            raise ModelError(f"parameter {name} must be positive, got {v}")
    return check


def _hill_coefficient(name):
    def check(v):
        if int(v) != v or v < 1:
            raise ModelError(f"Hill coefficient {name} must be an integer >= 1, got {v}")
    return check


def _any(v):
    return None


# name -> (factory, {param: validator}, single-degree-of-freedom?)
_BUILTINS = {
    "linear_sdof": (_linear, {"k": _positive("k"), "c": _positive("c")}, True),
    "duffing": (
        _duffing,
        {"eta": _positive("eta"), "alpha": _any, "beta": _any},
        True,
    ),
    "vdp": (_vdp, {"eta": _positive("eta")}, True),
    "toggle": (
        _toggle,
        {
            "alpha1": _positive("alpha1"),
            "alpha2": _positive("alpha2"),
            "m1": _hill_coefficient("m1"),
            "m2": _hill_coefficient("m2"),
        },
        False,
    ),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def _pair(value, what):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,):
        return None, float(arr[0])
    if arr.shape != (2,):
        raise ModelError(f"{what} must be a scalar or a pair")
    return float(arr[0]), float(arr[1])


def builtin(name: str, params: Mapping[str, float], *, sigma, hurst, init: GaussianInit) -> SystemModel:
    """Instantiate one of :data:`BUILTIN_NAMES`.

    For the single-degree-of-freedom oscillators (``linear_sdof``,
    ``duffing``, ``vdp``) the state is ``(x, v)``, noise acts on the
    velocity only, and ``sigma``/``hurst`` may be given as scalars.
    """
    if name not in _BUILTINS:
        raise ModelError(f"unknown model {name!r}; expected one of {BUILTIN_NAMES}")
    factory, schema, sdof = _BUILTINS[name]
    missing = [k for k in schema if k not in params]
    if missing:
        raise ModelError(f"model {name!r} is missing parameters {missing}")
    extra = sorted(set(params) - set(schema))
    if extra:
        raise ModelError(f"model {name!r} got unexpected parameters {extra}")
    clean = {k: float(params[k]) for k in schema}
    for k, check in schema.items():
        check(clean[k])

    s1, s2 = _pair(sigma, "sigma")
    h1, h2 = _pair(hurst, "hurst")
    if sdof:
        if s1 not in (None, 0.0):
            raise ModelError(f"{name} is excited on the velocity only; sigma[0] must be 0")
        if h1 is not None and h1 != h2:
            raise ModelError(f"{name} uses a single Hurst index")
        s1, h1 = 0.0, h2
    elif s1 is None or h1 is None:
        raise ModelError(f"{name} needs sigma and hurst for both channels")

    drift, jac = factory(clean)
    return SystemModel(name, drift, jac, (s1, s2), (h1, h2), init, clean)


@dataclass(frozen=True)
class JacobianReport:
    max_rel_error: float
    n_points: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def verify_jacobian(model: SystemModel, n_points: int = 100, seed: int = 0,
                    box=(-2.5, 2.5), tolerance: float = 1e-5) -> JacobianReport:
    """Compare the analytic Jacobian with central differences at random states."""
    if n_points < 1:
        raise ModelError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    y = rng.uniform(box[0], box[1], size=(n_points, 2))
    ja = model.jacobian(y)
    jfd = np.empty_like(ja)
    for j in range(2):
        h = 1e-6 * np.maximum(1.0, np.abs(y[:, j]))
        e = np.zeros_like(y)
        e[:, j] = h
        jfd[:, :, j] = (model.drift(y + e) - model.drift(y - e)) / (2.0 * h[:, None])
    scale = np.maximum(1.0, np.abs(ja).max(axis=(1, 2)))
    err = np.abs(ja - jfd).max(axis=(1, 2)) / scale
    return JacobianReport(float(err.max()), n_points, tolerance)
