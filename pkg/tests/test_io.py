from __future__ import annotations

import numpy as np
import pytest

from memfpk import io
from memfpk.dlmm import BinGrid, estimate
from memfpk.grid import GridGeometry, PdfGrid
from memfpk.linear import LinearParams, gaussian_summary
from memfpk.models import GaussianInit
from memfpk.simulate import SimGrid, run_ensemble
from memfpk.stats import MomentSeries, marginals


@pytest.fixture
def pdf(rng):
    g = GridGeometry(-1.5, 2.0, -3.0, 1.0, 8, 6)
    return PdfGrid(rng.random(g.shape) / 3.0, g, 2.5)


def test_pdf_csv_round_trip_and_layout(tmp_path, pdf):
    path = tmp_path / "p.csv"
    io.write_pdf_csv(path, pdf)
    back = io.read_pdf_csv(path)
    np.testing.assert_array_equal(back.values, pdf.values)
    assert back.geometry == pdf.geometry and back.time == 2.5
    lines = path.read_text().splitlines()
    assert lines[0] == "# pdfgrid,1"
    assert lines[3] == "# nodes,8,6"
    body = lines[6:]
    assert len(body) == 6 and len(body[0].split(",")) == 8
    # row j holds y2[j]
    assert float(body[1].split(",")[4]) == pdf.values[4, 1]


def test_pdf_binary_round_trip(tmp_path, pdf):
    path = tmp_path / "p.bin"
    io.write_pdf_binary(path, pdf)
    raw = path.read_bytes()
    assert raw[:8] == io.MAGIC
    assert len(raw) == 64 + 8 * pdf.values.size
    back = io.read_pdf_binary(path)
    np.testing.assert_array_equal(back.values, pdf.values)
    assert back.geometry == pdf.geometry and back.time == pdf.time


def test_binary_rejects_garbage(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"not a pdf")
    with pytest.raises(io.FormatError):
        io.read_pdf_binary(path)
    path.write_bytes(b"X" * 64)
    with pytest.raises(io.FormatError):
        io.read_pdf_binary(path)


def test_csv_rejects_bad_shape(tmp_path, pdf):
    path = tmp_path / "p.csv"
    io.write_pdf_csv(path, pdf)
    text = path.read_text().replace("# nodes,8,6", "# nodes,8,7")
    path.write_text(text)
    with pytest.raises(io.FormatError):
        io.read_pdf_csv(path)


def test_writers_are_byte_deterministic(tmp_path, pdf):
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        io.write_pdf_csv(d / "p.csv", pdf)
        io.write_pdf_binary(d / "p.bin", pdf)
        io.write_gnuplot_matrix(d / "p.dat", pdf)
        io.write_marginals_csv(d / "m.csv", *marginals(pdf))
        io.write_moments_csv(d / "s.csv", MomentSeries.from_pdfs([pdf]))
        io.write_json(d / "j.json", {"b": 1, "a": [0.1, 2]})
    for f in ("p.csv", "p.bin", "p.dat", "m.csv", "s.csv", "j.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_gnuplot_matrix_layout(tmp_path, pdf):
    path = tmp_path / "p.dat"
    io.write_gnuplot_matrix(path, pdf)
    rows = [list(map(float, line.split())) for line in path.read_text().splitlines()]
    assert rows[0][0] == 8 and rows[0][1:] == list(pdf.geometry.y1)
    assert rows[2][0] == pdf.geometry.y2[1]
    assert rows[2][1:] == list(pdf.values[:, 1])


def test_json_sorted(tmp_path):
    io.write_json(tmp_path / "x.json", {"b": 1, "a": 2})
    assert tmp_path.joinpath("x.json").read_text().index('"a"') < tmp_path.joinpath("x.json").read_text().index('"b"')
    assert io.read_json(tmp_path / "x.json") == {"a": 2, "b": 1}


def test_summary_csv(tmp_path):
    p = LinearParams(1.0, 0.4, 1.0, 0.8, GaussianInit((-1, -1), 0.15))
    io.write_summary_csv(tmp_path / "s.csv", gaussian_summary(p, [0.0, 1.0]))
    tab = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    assert tab.shape == (2, 7)
    np.testing.assert_array_equal(tab[0, :6], [0, -1, -1, 0.15, 0, 0.15])


@pytest.fixture(scope="module")
def ensemble(duffing_model):
    return run_ensemble(duffing_model, SimGrid(0.01, 100, 25), 6, 3)


def test_ensemble_round_trip(tmp_path, ensemble):
    io.write_ensemble(tmp_path / "e", ensemble)
    files = sorted(p.name for p in (tmp_path / "e").iterdir())
    assert files == ["ensemble.json"] + [f"snapshot_{s:05d}.csv" for s in range(5)]
    back = io.read_ensemble(tmp_path / "e")
    np.testing.assert_array_equal(back.states, ensemble.states)
    np.testing.assert_array_equal(back.malliavin, ensemble.malliavin)
    np.testing.assert_array_equal(back.times, ensemble.times)
    assert back.grid == ensemble.grid and back.sigma == ensemble.sigma
    assert back.master_seed == 3


def test_missing_ensemble(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.read_ensemble(tmp_path)
    with pytest.raises(FileNotFoundError):
        io.read_field(tmp_path)


def test_field_round_trip(tmp_path, ensemble):
    field = estimate(ensemble, BinGrid(-1, 1, -1, 1, 4, 3), radius=1)
    io.write_field(tmp_path / "c", field)
    back = io.read_field(tmp_path / "c")
    np.testing.assert_array_equal(back.raw, field.raw)
    np.testing.assert_array_equal(back.smoothed, field.smoothed)
    np.testing.assert_array_equal(back.counts, field.counts)
    assert back.bins == field.bins and back.radius == 1
