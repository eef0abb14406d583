"""Stage functions behind the command line: simulate, estimate, solve, analyze.

Each stage reads its inputs from and writes its outputs to one run
directory, and records itself in ``manifest.json`` there.
"""
from __future__ import annotations

import logging
import subprocess
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .dlmm import BinGrid, DlmmCoefficients, estimate
from .grid import GridGeometry, PdfGrid, SolverGrid
from .linear import LinearParams, analytic_pdf, gaussian_summary
from .simulate import SCHEME as SIM_SCHEME
from .simulate import SimGrid, run_ensemble, sample_states
from .solver import SCHEME as SOLVER_SCHEME
from .solver import GwnCoefficients, LinearCoefficients, SolveResult, SolverOptions, solve
from .stats import MomentSeries, compare, histogram2d, marginals

log = logging.getLogger(__name__)


class MissingInputError(FileNotFoundError):
    pass


def _tag(t: float) -> str:
    return f"t{t:08.3f}"


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def record_stage(cfg: RunConfig, out: Path, stage: str, info: dict) -> None:
    path = out / "manifest.json"
    man = io.read_json(path) if path.exists() else {}
    if man.get("config_sha256") not in (None, cfg.digest()):
        # a different config owns this directory; start over
        man = {}
    man.update({
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "scale": cfg.scale,
        "seeds": {"sim": cfg.sim.seed, "reference": cfg.reference.seed},
        "schemes": {"simulator": SIM_SCHEME, "solver": SOLVER_SCHEME},
        "version": _version(),
        "build": git_describe(),
    })
    man.setdefault("stages", {})[stage] = info
    io.write_json(path, man)


def solver_geometry(cfg: RunConfig) -> GridGeometry:
    return GridGeometry.from_spacing(cfg.solver.domain, cfg.solver.spacing)


def bin_grid(cfg: RunConfig) -> BinGrid:
    (a1, b1), (a2, b2) = cfg.dlmm.domain
    return BinGrid(a1, b1, a2, b2, *cfg.dlmm.bins)


# --- stages --------------------------------------------------------------------


def run_simulate(cfg: RunConfig, out, threads: int = 1):
    out = Path(out)
    model = cfg.build_model()
    grid = SimGrid(cfg.sim.dt, cfg.sim.n_steps, cfg.sim.snapshot_stride)
    ens = run_ensemble(model, grid, cfg.sim.n_samples, cfg.sim.seed, threads=threads,
                       kernel_point=cfg.sim.kernel_point)
    io.write_ensemble(out / "ensemble", ens)
    record_stage(cfg, out, "simulate", {
        "n_samples": ens.n_samples, "n_diverged": ens.n_diverged, "n_snapshots": len(ens.times),
    })
    return ens


def run_estimate(cfg: RunConfig, out, ensemble=None):
    out = Path(out)
    if ensemble is None:
        try:
            ensemble = io.read_ensemble(out / "ensemble")
        except FileNotFoundError as exc:
            raise MissingInputError(f"{exc}; run 'simulate' first") from exc
    field = estimate(ensemble, bin_grid(cfg), cfg.dlmm.radius, cfg.dlmm.symmetrize)
    io.write_field(out / "coefficients", field)
    record_stage(cfg, out, "estimate", {
        "radius": cfg.dlmm.radius, "bins": list(cfg.dlmm.bins),
        "max_excluded": int(field.excluded.max()),
    })
    return field


def coefficient_source(cfg: RunConfig, model, geometry: GridGeometry, out=None, field=None):
    kind = cfg.solver.coefficients
    if kind == "analytic":
        return LinearCoefficients(LinearParams.from_model(model), cfg.solver.dt, cfg.solver.t_final)
    if kind == "gwn":
        return GwnCoefficients(model.sigma[1])
    if kind == "dlmm":
        if field is None:
            try:
                field = io.read_field(Path(out) / "coefficients")
            except FileNotFoundError as exc:
                raise MissingInputError(f"{exc}; run 'estimate' first") from exc
        return DlmmCoefficients(field, geometry, cfg.dlmm.interpolation)
    raise ValueError(f"unknown coefficient source {kind!r}")


def write_pdf(directory: Path, stem: str, pdf: PdfGrid, formats) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        io.write_pdf_csv(directory / f"{stem}.csv", pdf)
    if "binary" in formats:
        io.write_pdf_binary(directory / f"{stem}.bin", pdf)
    if "gnuplot" in formats:
        io.write_gnuplot_matrix(directory / f"{stem}.dat", pdf)


def write_analysis(directory: Path, pdfs) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for p in pdfs:
        io.write_marginals_csv(directory / f"marginals_{_tag(p.time)}.csv", *marginals(p))
    io.write_moments_csv(directory / "moments.csv", MomentSeries.from_pdfs(pdfs))


def run_solve(cfg: RunConfig, out, field=None) -> SolveResult:
    out = Path(out)
    model = cfg.build_model()
    geom = solver_geometry(cfg)
    src = coefficient_source(cfg, model, geom, out, field)
    s = cfg.solver
    grid = SolverGrid(geom, s.dt, s.t_final, cfg.outputs.report_times)
    opts = SolverOptions(clamp=s.clamp, renormalize=s.renormalize, upwind=s.upwind,
                         order=s.stencil_order)
    res = solve(model, src, grid, opts)
    for p in res.pdfs:
        write_pdf(out / "pdf", f"pdf_{_tag(p.time)}", p, cfg.outputs.formats)
    write_analysis(out / "analysis", res.pdfs)
    io.write_json(out / "diagnostics.json", {"metadata": res.metadata, "report": res.diagnostics})
    record_stage(cfg, out, "solve", {"max_mass_drift": res.max_mass_drift, **res.metadata})
    if cfg.reference.kind != "none":
        run_compare(cfg, out)
    return res


def run_analytic(cfg: RunConfig, out):
    """Gaussian mean/covariance history and exact densities of the linear oscillator."""
    out = Path(out)
    params = LinearParams.from_model(cfg.build_model())
    times = cfg.outputs.report_times
    summary = gaussian_summary(params, times)
    d = out / "analytic"
    d.mkdir(parents=True, exist_ok=True)
    io.write_summary_csv(d / "summary.csv", summary)
    geom = solver_geometry(cfg)
    pdfs = [analytic_pdf(params, t, geom) for t in times]
    for p in pdfs:
        write_pdf(d, f"pdf_{_tag(p.time)}", p, cfg.outputs.formats)
    record_stage(cfg, out, "analytic", {"times": list(times)})
    return summary


def run_reference(cfg: RunConfig, out):
    """Reference densities at the report times (analytic or Monte Carlo histogram)."""
    out = Path(out)
    kind = cfg.reference.kind
    geom = solver_geometry(cfg)
    times = cfg.outputs.report_times
    d = out / "reference"
    model = cfg.build_model()
    if kind == "analytic":
        params = LinearParams.from_model(model)
        refs = [analytic_pdf(params, t, geom) for t in times]
    elif kind == "mcs":
        r = cfg.reference
        n_steps = int(round(max(times) / r.dt))
        states = sample_states(model, r.dt, n_steps, times, r.n_samples, r.seed)
        refs = [histogram2d(states[k], geom, t) for k, t in enumerate(times)]
        d.mkdir(parents=True, exist_ok=True)
        np.save(d / "states.npy", states)
    else:
        raise MissingInputError("config has no reference (reference.kind is 'none')")
    for p in refs:
        write_pdf(d, f"pdf_{_tag(p.time)}", p, ("csv",))
    write_analysis(d, refs)
    record_stage(cfg, out, "reference", {"kind": kind, "n_samples": cfg.reference.n_samples})
    return refs


def _load_pdfs(directory: Path, times):
    out = []
    for t in times:
        path = directory / f"pdf_{_tag(t)}.csv"
        if not path.exists():
            raise MissingInputError(f"missing density {path}")
        out.append(io.read_pdf_csv(path))
    return out


def run_compare(cfg: RunConfig, out):
    """Metrics between the solver densities and the reference at every report time."""
    out = Path(out)
    times = cfg.outputs.report_times
    ref_dir = out / "reference"
    if not ref_dir.exists():
        run_reference(cfg, out)
    sol = _load_pdfs(out / "pdf", times)
    ref = _load_pdfs(ref_dir, times)
    rows = []
    for a, b in zip(sol, ref):
        m = compare(a, b).as_dict()
        ma, mb = marginals(a), marginals(b)
        m["marginal_l1"] = [float(np.abs(x.densities - y.densities).sum() * x.spacing)
                            for x, y in zip(ma, mb)]
        m["time"] = a.time
        rows.append(m)
    io.write_json(out / "metrics.json", {"reference": cfg.reference.kind, "metrics": rows})
    record_stage(cfg, out, "compare", {"n_times": len(rows)})
    return rows


def reproduce(cfg: RunConfig, out, threads: int = 1) -> dict:
    """Full pipeline for one example config."""
    out = Path(out)
    field = None
    if cfg.solver.coefficients == "dlmm":
        ens = run_simulate(cfg, out, threads)
        field = run_estimate(cfg, out, ens)
    if cfg.model.name == "linear_sdof":
        run_analytic(cfg, out)
    if cfg.reference.kind != "none":
        run_reference(cfg, out)
    res = run_solve(cfg, out, field)
    return {"solve": res}
