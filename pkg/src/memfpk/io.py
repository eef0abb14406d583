"""On-disk formats.

Every writer is byte-deterministic: floats use ``%.17g`` (exact round trip),
JSON keys are sorted, and nothing time- or host-dependent is embedded.

PdfGrid CSV::

    # pdfgrid,1
    # domain,y1_min,y1_max,y2_min,y2_max
    # spacing,d1,d2
    # nodes,n1,n2
    # time,t
    # mass,m
    <n2 rows of n1 comma-separated densities; row j holds y2 = y2_min + j*d2>

PdfGrid binary: a 64-byte little-endian header (8-byte magic, uint32
version, n1, n2, padding, then float64 y1_min, y1_max, y2_min, y2_max, t)
followed by the densities as float64 in the same row order as the CSV.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dlmm import BinGrid, CoefficientField
from .grid import GridGeometry, PdfGrid
from .simulate import EnsembleResult, SimGrid
from .stats import MarginalPdf, MomentSeries

FMT = "%.17g"
MAGIC = b"MFPKPDF\x00"
VERSION = 1
_HEADER = struct.Struct("<8s4I5d")


class FormatError(ValueError):
    pass


def _g(x) -> str:
    return FMT % x


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _write_rows(path, header_lines, rows, columns=None) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        if columns:
            fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_g(v) for v in row) + "\n")


# --- density grids -----------------------------------------------------------


def write_pdf_csv(path, pdf: PdfGrid) -> None:
    g = pdf.geometry
    head = [
        f"# pdfgrid,{VERSION}",
        "# domain," + ",".join(_g(v) for v in (g.y1_min, g.y1_max, g.y2_min, g.y2_max)),
        f"# spacing,{_g(g.d1)},{_g(g.d2)}",
        f"# nodes,{g.n1},{g.n2}",
        f"# time,{_g(pdf.time)}",
        f"# mass,{_g(pdf.mass)}",
    ]
    _write_rows(path, head, pdf.values.T)


def read_pdf_csv(path) -> PdfGrid:
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, *vals = line[1:].strip().split(",")
            meta[key] = vals
        elif line.strip():
            body.append([float(v) for v in line.split(",")])
    try:
        lo1, hi1, lo2, hi2 = (float(v) for v in meta["domain"])
        n1, n2 = (int(v) for v in meta["nodes"])
        t = float(meta["time"][0])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed pdfgrid header") from exc
    vals = np.array(body, dtype=float)
    if vals.shape != (n2, n1):
        raise FormatError(f"{path}: expected {n2} rows of {n1} values, got {vals.shape}")
    return PdfGrid(vals.T.copy(), GridGeometry(lo1, hi1, lo2, hi2, n1, n2), t)


def write_pdf_binary(path, pdf: PdfGrid) -> None:
    g = pdf.geometry
    head = _HEADER.pack(MAGIC, VERSION, g.n1, g.n2, 0, g.y1_min, g.y1_max, g.y2_min, g.y2_max,
                        float(pdf.time))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(pdf.values.T, dtype="<f8").tobytes())


def read_pdf_binary(path) -> PdfGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n1, n2, _, lo1, hi1, lo2, hi2, t = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path}: not a version-{VERSION} pdfgrid file")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != n1 * n2:
        raise FormatError(f"{path}: expected {n1 * n2} values, got {vals.size}")
    return PdfGrid(vals.reshape(n2, n1).T.copy(), GridGeometry(lo1, hi1, lo2, hi2, n1, n2), t)


def write_gnuplot_matrix(path, pdf: PdfGrid) -> None:
    """``splot 'file' nonuniform matrix`` layout: header row of y1 values, then ``y2 p...`` rows."""
    g = pdf.geometry
    with open(path, "w", newline="\n") as fh:
        fh.write(" ".join([str(g.n1)] + [_g(v) for v in g.y1]) + "\n")
        for j, y2 in enumerate(g.y2):
            fh.write(" ".join([_g(y2)] + [_g(v) for v in pdf.values[:, j]]) + "\n")


def write_marginals_csv(path, m1: MarginalPdf, m2: MarginalPdf) -> None:
    """Columns ``y1, p1`` and ``y2, p2``; shorter columns are padded with empty cells."""
    n = max(len(m1.centers), len(m2.centers))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# time,{_g(m1.time)}\n")
        fh.write("y1,p1,y2,p2\n")
        for i in range(n):
            a = (_g(m1.centers[i]), _g(m1.densities[i])) if i < len(m1.centers) else ("", "")
            b = (_g(m2.centers[i]), _g(m2.densities[i])) if i < len(m2.centers) else ("", "")
            fh.write(",".join(a + b) + "\n")


def write_moments_csv(path, series: MomentSeries) -> None:
    cols = ["t"]
    for k in (1, 2):
        cols += [f"mean{k}", f"std{k}", f"skew{k}", f"kurt{k}"]
    rows = []
    for n, t in enumerate(series.times):
        row = [t]
        for k in range(2):
            row += [series.mean[n, k], series.std[n, k], series.skewness[n, k], series.kurtosis[n, k]]
        rows.append(row)
    _write_rows(path, [], rows, cols)


def write_summary_csv(path, summary) -> None:
    """Gaussian mean and covariance history of the linear oscillator."""
    cols = ["t", "mean_x", "mean_v", "cov_xx", "cov_xv", "cov_vv", "error"]
    rows = [
        [t, m[0], m[1], c[0, 0], c[0, 1], c[1, 1], e]
        for t, m, c, e in zip(summary.times, summary.means, summary.covariances, summary.errors)
    ]
    _write_rows(path, [], rows, cols)


# --- ensembles ---------------------------------------------------------------

ENSEMBLE_COLUMNS = ["q", "t", "y1", "y2", "D1_y1", "D1_y2", "D2_y1", "D2_y2", "diverged_at"]


def _snapshot_name(s: int) -> str:
    return f"snapshot_{s:05d}.csv"


def write_ensemble(directory, ens: EnsembleResult) -> None:
    """One CSV per snapshot plus ``ensemble.json``.

    ``D{i}_y{j}`` is the Malliavin derivative of ``Y_j`` with respect to
    noise channel ``i``, noise intensity included (units of ``Y_j``).
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s, t in enumerate(ens.times):
        st, mal = ens.states[s], ens.malliavin[s]
        rows = [
            [q, t, st[q, 0], st[q, 1], mal[q, 0, 0], mal[q, 0, 1], mal[q, 1, 0], mal[q, 1, 1],
             ens.diverged_at[q]]
            for q in range(ens.n_samples)
        ]
        _write_rows(d / _snapshot_name(s), [], rows, ENSEMBLE_COLUMNS)
    write_json(d / "ensemble.json", {
        "model": ens.model_name,
        "sigma": list(ens.sigma),
        "dt": ens.grid.dt,
        "n_steps": ens.grid.n_steps,
        "snapshot_stride": ens.grid.snapshot_stride,
        "n_samples": ens.n_samples,
        "n_snapshots": len(ens.times),
        "n_diverged": ens.n_diverged,
        "master_seed": ens.master_seed,
        "scheme": ens.scheme,
        "kernel_point": ens.kernel_point,
        "columns": ENSEMBLE_COLUMNS,
    })


def read_ensemble(directory) -> EnsembleResult:
    d = Path(directory)
    meta_path = d / "ensemble.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no ensemble in {d}")
    meta = read_json(meta_path)
    grid = SimGrid(meta["dt"], meta["n_steps"], meta["snapshot_stride"])
    n, n_snap = meta["n_samples"], meta["n_snapshots"]
    states = np.empty((n_snap, n, 2))
    mal = np.empty((n_snap, n, 2, 2))
    times = np.empty(n_snap)
    div = None
    for s in range(n_snap):
        tab = np.loadtxt(d / _snapshot_name(s), delimiter=",", skiprows=1, ndmin=2)
        if tab.shape != (n, len(ENSEMBLE_COLUMNS)):
            raise FormatError(f"snapshot {s} has shape {tab.shape}")
        times[s] = tab[0, 1]
        states[s] = tab[:, 2:4]
        mal[s] = tab[:, 4:8].reshape(n, 2, 2)
        div = tab[:, 8].astype(np.int64)
    return EnsembleResult(times, states, mal, div, meta["model"], tuple(meta["sigma"]), grid,
                          meta["master_seed"], meta["scheme"], meta["kernel_point"])


# --- coefficient fields ------------------------------------------------------

FIELD_COLUMNS = ["i", "j", "y1", "y2", "count",
                 "b11_raw", "b12_raw", "b21_raw", "b22_raw",
                 "b11", "b12", "b21", "b22"]


def write_field(directory, field: CoefficientField) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    b = field.bins
    c1, c2 = b.centers1, b.centers2
    for s, t in enumerate(field.times):
        rows = []
        for i in range(b.n1):
            for j in range(b.n2):
                rows.append([i, j, c1[i], c2[j], field.counts[s, i, j]]
                            + list(field.raw[s, :, :, i, j].ravel())
                            + list(field.smoothed[s, :, :, i, j].ravel()))
        _write_rows(d / f"field_{s:05d}.csv", [f"# time,{_g(t)}"], rows, FIELD_COLUMNS)
    write_json(d / "field.json", {
        "bins": [b.y1_min, b.y1_max, b.y2_min, b.y2_max, b.n1, b.n2],
        "radius": field.radius,
        "n_samples": field.n_samples,
        "times": [float(t) for t in field.times],
        "excluded": [int(e) for e in field.excluded],
        "meta": field.meta,
        "columns": FIELD_COLUMNS,
    })


def read_field(directory) -> CoefficientField:
    d = Path(directory)
    meta_path = d / "field.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no coefficient field in {d}")
    meta = read_json(meta_path)
    lo1, hi1, lo2, hi2, n1, n2 = meta["bins"]
    bins = BinGrid(lo1, hi1, lo2, hi2, int(n1), int(n2))
    times = np.array(meta["times"], dtype=float)
    raw = np.empty((len(times), 2, 2, bins.n1, bins.n2))
    smoothed = np.empty_like(raw)
    counts = np.empty((len(times), bins.n1, bins.n2), dtype=np.int64)
    for s in range(len(times)):
        tab = np.loadtxt(d / f"field_{s:05d}.csv", delimiter=",", skiprows=2, ndmin=2)
        i, j = tab[:, 0].astype(int), tab[:, 1].astype(int)
        counts[s, i, j] = tab[:, 4].astype(np.int64)
        raw[s][:, :, i, j] = tab[:, 5:9].T.reshape(2, 2, -1)
        smoothed[s][:, :, i, j] = tab[:, 9:13].T.reshape(2, 2, -1)
    return CoefficientField(times, bins, raw, smoothed, counts,
                            np.array(meta["excluded"], dtype=np.int64), meta["radius"],
                            meta["n_samples"], meta["meta"])
