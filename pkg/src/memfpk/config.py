"""YAML run configuration with field-level validation.

A config may carry a ``scales`` block whose entries (e.g. ``paper``) are
deep-merged over the base document when that scale is selected; the base
document itself is the desk-scale run.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .models import GaussianInit, ModelError, SystemModel, builtin

EXAMPLES = ("ex1", "ex2", "ex3", "ex4")
COEFFICIENT_SOURCES = ("analytic", "gwn", "dlmm")
FORMATS = ("csv", "binary", "gnuplot")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ModelConfig:
    name: str
    params: dict
    sigma: tuple
    hurst: tuple
    init_mean: tuple
    init_var: float


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_steps: int = 1000
    n_samples: int = 2000
    snapshot_stride: int = 50
    seed: int = 0
    kernel_point: str = "midpoint"


@dataclass(frozen=True)
class DlmmConfig:
    domain: tuple = ((-2.5, 2.5), (-2.5, 2.5))
    bins: tuple = (30, 30)
    radius: int = 1
    interpolation: str = "linear"
    symmetrize: bool = False


@dataclass(frozen=True)
class SolverConfig:
    coefficients: str = "analytic"
    domain: tuple = ((-6.0, 6.0), (-6.0, 6.0))
    spacing: tuple = (0.15, 0.15)
    dt: float = 1e-3
    t_final: float = 1.0
    clamp: bool = False
    renormalize: bool = False
    upwind: bool = False
    stencil_order: int = 4


@dataclass(frozen=True)
class ReferenceConfig:
    kind: str = "none"  # none | analytic | mcs
    n_samples: int = 100000
    seed: int = 1
    dt: float = 1e-3


@dataclass(frozen=True)
class OutputConfig:
    report_times: tuple = (1.0,)
    formats: tuple = ("csv",)


@dataclass(frozen=True)
class RunConfig:
    name: str
    model: ModelConfig
    sim: SimConfig = field(default_factory=SimConfig)
    dlmm: DlmmConfig = field(default_factory=DlmmConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    scale: str = "desk"

    def build_model(self) -> SystemModel:
        m = self.model
        try:
            return builtin(m.name, m.params, sigma=m.sigma, hurst=m.hurst,
                           init=GaussianInit(m.init_mean, m.init_var))
        except ModelError as exc:
            raise ConfigError("model", str(exc)) from exc

    def as_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, sim=replace(self.sim, seed=int(seed)))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# --- typed field readers -------------------------------------------------------


def _get(block, key, name, default=None, required=False):
    if not isinstance(block, dict):
        raise ConfigError(name.rsplit(".", 1)[0], "must be a mapping")
    if key not in block:
        if required:
            raise ConfigError(name, "is required")
        return default
    return block[key]


def _num(v, name, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"must be a number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be nonnegative, got {v}")
    return v


def _int(v, name, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {v}")
    return v


def _bool(v, name):
    if not isinstance(v, bool):
        raise ConfigError(name, f"must be true or false, got {v!r}")
    return v


def _choice(v, name, options):
    if v not in options:
        raise ConfigError(name, f"must be one of {list(options)}, got {v!r}")
    return v


def _pair(v, name, conv=_num):
    if not isinstance(v, (list, tuple)):
        v = [v, v]
    if len(v) != 2:
        raise ConfigError(name, "must be a scalar or a pair")
    return tuple(conv(x, f"{name}[{i}]") for i, x in enumerate(v))


def _domain(v, name):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(name, "must be [[y1_min, y1_max], [y2_min, y2_max]]")
    out = []
    for i, ab in enumerate(v):
        lo, hi = _pair(ab, f"{name}[{i}]")
        if not hi > lo:
            raise ConfigError(f"{name}[{i}]", "upper bound must exceed lower bound")
        out.append((lo, hi))
    return tuple(out)


def _model(block) -> ModelConfig:
    name = _get(block, "name", "model.name", required=True)
    params = _get(block, "params", "model.params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("model.params", "must be a mapping")
    for k, v in params.items():
        _num(v, f"model.params.{k}")
    sigma = _get(block, "sigma", "model.sigma", required=True)
    hurst = _get(block, "hurst", "model.hurst", required=True)
    init = _get(block, "init", "model.init", required=True)
    mean = _pair(_get(init, "mean", "model.init.mean", required=True), "model.init.mean")
    var = _num(_get(init, "var", "model.init.var", required=True), "model.init.var", positive=True)
    return ModelConfig(name, dict(params), _pair(sigma, "model.sigma"), _pair(hurst, "model.hurst"),
                       mean, var)


def _sim(block) -> SimConfig:
    b = block or {}
    return SimConfig(
        dt=_num(_get(b, "dt", "sim.dt", 1e-3), "sim.dt", positive=True),
        n_steps=_int(_get(b, "n_steps", "sim.n_steps", 1000), "sim.n_steps", 1),
        n_samples=_int(_get(b, "n_samples", "sim.n_samples", 2000), "sim.n_samples", 1),
        snapshot_stride=_int(_get(b, "snapshot_stride", "sim.snapshot_stride", 50), "sim.snapshot_stride", 1),
        seed=_int(_get(b, "seed", "sim.seed", 0), "sim.seed", 0),
        kernel_point=_choice(_get(b, "kernel_point", "sim.kernel_point", "midpoint"),
                             "sim.kernel_point", ("midpoint", "left")),
    )


def _dlmm(block) -> DlmmConfig:
    b = block or {}
    return DlmmConfig(
        domain=_domain(_get(b, "domain", "dlmm.domain", [[-2.5, 2.5], [-2.5, 2.5]]), "dlmm.domain"),
        bins=_pair(_get(b, "bins", "dlmm.bins", 30), "dlmm.bins", lambda v, n: _int(v, n, 1)),
        radius=_int(_get(b, "radius", "dlmm.radius", 1), "dlmm.radius", 0),
        interpolation=_choice(_get(b, "interpolation", "dlmm.interpolation", "linear"),
                              "dlmm.interpolation", ("linear", "cubic")),
        symmetrize=_bool(_get(b, "symmetrize", "dlmm.symmetrize", False), "dlmm.symmetrize"),
    )


def _solver(block) -> SolverConfig:
    b = block or {}
    return SolverConfig(
        coefficients=_choice(_get(b, "coefficients", "solver.coefficients", "analytic"),
                             "solver.coefficients", COEFFICIENT_SOURCES),
        domain=_domain(_get(b, "domain", "solver.domain", [[-6, 6], [-6, 6]]), "solver.domain"),
        spacing=_pair(_get(b, "spacing", "solver.spacing", 0.15), "solver.spacing",
                      lambda v, n: _num(v, n, positive=True)),
        dt=_num(_get(b, "dt", "solver.dt", 1e-3), "solver.dt", positive=True),
        t_final=_num(_get(b, "t_final", "solver.t_final", required=True), "solver.t_final", positive=True),
        clamp=_bool(_get(b, "clamp", "solver.clamp", False), "solver.clamp"),
        renormalize=_bool(_get(b, "renormalize", "solver.renormalize", False), "solver.renormalize"),
        upwind=_bool(_get(b, "upwind", "solver.upwind", False), "solver.upwind"),
        stencil_order=_choice(_get(b, "stencil_order", "solver.stencil_order", 4),
                              "solver.stencil_order", (2, 4)),
    )


def _reference(block) -> ReferenceConfig:
    b = block or {}
    return ReferenceConfig(
        kind=_choice(_get(b, "kind", "reference.kind", "none"), "reference.kind", ("none", "analytic", "mcs")),
        n_samples=_int(_get(b, "n_samples", "reference.n_samples", 100000), "reference.n_samples", 1),
        seed=_int(_get(b, "seed", "reference.seed", 1), "reference.seed", 0),
        dt=_num(_get(b, "dt", "reference.dt", 1e-3), "reference.dt", positive=True),
    )


def _outputs(block) -> OutputConfig:
    b = block or {}
    times = _get(b, "report_times", "outputs.report_times", required=True)
    if not isinstance(times, list) or not times:
        raise ConfigError("outputs.report_times", "must be a non-empty list")
    times = tuple(_num(t, f"outputs.report_times[{i}]", nonneg=True) for i, t in enumerate(times))
    fmts = _get(b, "formats", "outputs.formats", ["csv"])
    if not isinstance(fmts, list):
        raise ConfigError("outputs.formats", "must be a list")
    for f in fmts:
        _choice(f, "outputs.formats", FORMATS)
    return OutputConfig(times, tuple(fmts))


def _on_grid(t, dt):
    return abs(t / dt - round(t / dt)) <= 1e-6


def _cross_checks(cfg: RunConfig) -> None:
    s, sim = cfg.solver, cfg.sim
    for i, t in enumerate(cfg.outputs.report_times):
        if t > s.t_final + 1e-12:
            raise ConfigError(f"outputs.report_times[{i}]", f"{t} exceeds solver.t_final={s.t_final}")
        if not _on_grid(t, s.dt):
            raise ConfigError(f"outputs.report_times[{i}]", f"{t} is not a multiple of solver.dt")
    if not _on_grid(s.t_final, s.dt):
        raise ConfigError("solver.t_final", "must be a multiple of solver.dt")
    if sim.n_steps % sim.snapshot_stride:
        raise ConfigError("sim.snapshot_stride", "must divide sim.n_steps")
    if s.coefficients == "dlmm" and sim.n_steps * sim.dt < s.t_final - 1e-9:
        raise ConfigError("sim.n_steps", "DLMM snapshots must cover the solver horizon")
    if s.coefficients == "analytic" and cfg.model.name != "linear_sdof":
        raise ConfigError("solver.coefficients", "analytic coefficients exist only for linear_sdof")
    if cfg.reference.kind == "analytic" and cfg.model.name != "linear_sdof":
        raise ConfigError("reference.kind", "the analytic reference exists only for linear_sdof")
    if cfg.reference.kind == "mcs":
        for i, t in enumerate(cfg.outputs.report_times):
            if not _on_grid(t, cfg.reference.dt):
                raise ConfigError(f"outputs.report_times[{i}]", "is not a multiple of reference.dt")


def parse(doc: dict, scale: str = "desk") -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    scales = doc.get("scales") or {}
    if scale != "desk":
        if scale not in scales:
            raise ConfigError("scales", f"config defines no {scale!r} scale")
        doc = _merge(doc, scales[scale])
    known = {"name", "model", "sim", "dlmm", "solver", "reference", "outputs", "scales"}
    extra = sorted(set(doc) - known)
    if extra:
        raise ConfigError(extra[0], "unknown top-level key")
    cfg = RunConfig(
        name=str(doc.get("name", "run")),
        model=_model(_get(doc, "model", "model", required=True)),
        sim=_sim(doc.get("sim")),
        dlmm=_dlmm(doc.get("dlmm")),
        solver=_solver(_get(doc, "solver", "solver", required=True)),
        reference=_reference(doc.get("reference")),
        outputs=_outputs(_get(doc, "outputs", "outputs", required=True)),
        scale=scale,
    )
    cfg.build_model()
    _cross_checks(cfg)
    return cfg


def load(path, scale: str = "desk") -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return parse(doc, scale)


def example_text(example: str) -> str:
    if example not in EXAMPLES:
        raise ConfigError("example", f"must be one of {list(EXAMPLES)}, got {example!r}")
    return resources.files("memfpk").joinpath("configs").joinpath(f"{example}.yaml").read_text()


def load_example(example: str, scale: str = "desk") -> RunConfig:
    return parse(yaml.safe_load(example_text(example)), scale)
