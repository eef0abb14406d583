from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memfpk.dlmm import (
    BinGrid, DlmmCoefficients, EstimatorError, bin_assign, estimate, interpolate, local_means,
    local_standard_errors, smooth,
)
from memfpk.grid import GridGeometry
from memfpk.simulate import EnsembleResult, SimGrid


def _ensemble(states, mal, times=None, sigma=(0.0, 1.0)):
    states = np.asarray(states, dtype=float)
    mal = np.asarray(mal, dtype=float)
    if states.ndim == 2:
        states, mal = states[None], mal[None]
    s = states.shape[0]
    times = np.arange(s, dtype=float) if times is None else np.asarray(times, dtype=float)
    grid = SimGrid(1.0, max(s - 1, 1), 1)
    return EnsembleResult(times, states, mal, np.full(states.shape[1], -1), "test", sigma, grid, 0)


UNIT = BinGrid(0.0, 1.0, 0.0, 1.0, 2, 2)


# --- binning ---------------------------------------------------------------------


def test_bin_geometry():
    b = BinGrid(-1.0, 1.0, 0.0, 3.0, 4, 3)
    np.testing.assert_allclose(b.edges1, [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(b.centers2, [0.5, 1.5, 2.5])
    assert b.shape == (4, 3)


@pytest.mark.parametrize("args", [(0, 1, 0, 1, 0, 2), (1, 1, 0, 1, 2, 2), (0, 1, 2, 1, 2, 2)])
def test_bin_grid_rejects(args):
    with pytest.raises(EstimatorError):
        BinGrid(*args)


def test_bin_assignment_rules():
    states = np.array([
        [0.1, 0.1],  # (0, 0)
        [0.5, 0.1],  # interior edge: upper cell (1, 0)
        [1.0, 1.0],  # outer edge: last cell (1, 1)
        [1.2, 0.3],  # outside
        [np.nan, 0.2],  # diverged
        [0.0, 0.0],  # lower outer edge: (0, 0)
    ])
    a = bin_assign(states, UNIT)
    np.testing.assert_array_equal(a.index, [0, 2, 3, -1, -1, 0])
    np.testing.assert_array_equal(a.counts, [[2, 0], [1, 1]])
    assert (a.n_outside, a.n_invalid, a.n_excluded) == (1, 1, 2)


@given(arrays(float, (50, 2), elements=st.floats(-2, 2)))
def test_counts_add_up(states):
    a = bin_assign(states, BinGrid(-1, 1, -1, 1, 3, 4))
    assert a.counts.sum() + a.n_excluded == len(states)


def test_local_means_example():
    states = np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.9, 0.9]])
    vals = np.array([1.0, 2.0, 3.0, 10.0])
    a = bin_assign(states, UNIT)
    m = local_means(a, vals, 2.0, UNIT.shape)
    # two empty bins take the global mean 2 * 4 = 8
    np.testing.assert_allclose(m, [[4.0, 8.0], [8.0, 20.0]])


def test_local_means_zero_intensity():
    a = bin_assign(np.array([[0.1, 0.1]]), UNIT)
    np.testing.assert_array_equal(local_means(a, np.array([5.0]), 0.0, UNIT.shape), 0.0)


def test_local_means_without_valid_samples():
    a = bin_assign(np.array([[0.1, 0.1]]), UNIT)
    with pytest.raises(EstimatorError):
        local_means(a, np.array([np.nan]), 1.0, UNIT.shape)


def test_local_standard_errors_example():
    states = np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.9, 0.9]])
    a = bin_assign(states, UNIT)
    se = local_standard_errors(a, np.array([1.0, 2.0, 3.0, 10.0]), 1.0, UNIT.shape)
    assert se[0, 0] == pytest.approx(1.0 / np.sqrt(3))
    assert np.isnan(se[1, 1]) and np.isnan(se[0, 1])


# --- smoothing -------------------------------------------------------------------


def test_smoothing_examples():
    assert np.array_equal(smooth(np.arange(9.0).reshape(3, 3), 0), np.arange(9.0).reshape(3, 3))
    delta = np.zeros((5, 5))
    delta[2, 2] = 9.0
    s = smooth(delta, 1)
    np.testing.assert_allclose(s[1:4, 1:4], 1.0)
    assert s.sum() == pytest.approx(9.0)
    np.testing.assert_allclose(smooth(np.full((4, 6), 2.5), 2), 2.5)


def test_smoothing_rejects_negative_radius():
    with pytest.raises(EstimatorError):
        smooth(np.zeros((3, 3)), -1)


@given(arrays(float, (6, 7), elements=st.floats(-10, 10)), st.integers(0, 3))
def test_smoothing_stays_within_range(raw, r):
    s = smooth(raw, r)
    assert s.min() >= raw.min() - 1e-9 and s.max() <= raw.max() + 1e-9


# --- estimation ------------------------------------------------------------------


def test_deterministic_malliavin_gives_constant_field():
    rng = np.random.default_rng(1)
    states = rng.normal(0.5, 0.3, (200, 2))
    mal = np.zeros((200, 2, 2))
    mal[:, 1] = [0.2, 0.7]
    f = estimate(_ensemble(states, mal, sigma=(0.0, 2.0)), BinGrid(0, 1, 0, 1, 5, 5), radius=1)
    np.testing.assert_allclose(f.raw[0, 1, 0], 0.4)
    np.testing.assert_allclose(f.smoothed[0, 1, 1], 1.4)
    np.testing.assert_array_equal(f.raw[0, 0], 0.0)


@given(st.permutations(list(range(30))))
def test_estimate_is_permutation_invariant(perm):
    rng = np.random.default_rng(5)
    states = rng.uniform(-1, 1, (30, 2))
    mal = rng.normal(size=(30, 2, 2))
    b = BinGrid(-1, 1, -1, 1, 3, 3)
    f1 = estimate(_ensemble(states, mal, sigma=(0.5, 1.0)), b)
    f2 = estimate(_ensemble(states[perm], mal[perm], sigma=(0.5, 1.0)), b)
    np.testing.assert_allclose(f1.smoothed, f2.smoothed, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(f1.counts, f2.counts)


def test_symmetrized_counts_are_point_symmetric():
    rng = np.random.default_rng(2)
    states = rng.normal(0.3, 0.4, (100, 2))
    mal = rng.normal(size=(100, 2, 2))
    f = estimate(_ensemble(states, mal), BinGrid(-1, 1, -1, 1, 6, 6), symmetrize=True)
    np.testing.assert_array_equal(f.counts[0], f.counts[0][::-1, ::-1])
    np.testing.assert_allclose(f.raw[0, 1, 1], f.raw[0, 1, 1][::-1, ::-1])


def test_snapshot_lookup():
    f = estimate(_ensemble(np.zeros((3, 4, 2)), np.zeros((3, 4, 2, 2)), times=[0, 0.5, 1.0]), UNIT)
    assert f.snapshot_index(0.5) == 1
    with pytest.raises(KeyError):
        f.snapshot_index(0.25)


def test_empty_ensemble_rejected():
    with pytest.raises(EstimatorError):
        estimate(_ensemble(np.zeros((1, 0, 2)), np.zeros((1, 0, 2, 2))), UNIT)


# --- interpolation ---------------------------------------------------------------


def _planar_field(times=(0.0, 1.0)):
    """Raw b22 = a(t) + y1 + 2 y2 at the centers of a 4 x 4 grid on [0, 1]^2."""
    b = BinGrid(0.0, 1.0, 0.0, 1.0, 4, 4)
    c1, c2 = np.meshgrid(b.centers1, b.centers2, indexing="ij")
    n = 16
    states = np.stack([c1.ravel(), c2.ravel()], axis=1)
    s = len(times)
    st_all = np.broadcast_to(states, (s, n, 2)).copy()
    mal = np.zeros((s, n, 2, 2))
    for k in range(s):
        mal[k, :, 1, 1] = 10.0 * k + states[:, 0] + 2.0 * states[:, 1]
    return estimate(_ensemble(st_all, mal, times=times), b, radius=0)


def test_linear_interpolation_reproduces_planes():
    f = _planar_field()
    g = GridGeometry(0.125, 0.875, 0.125, 0.875, 7, 7)
    y1, y2 = g.mesh()
    b11, b12, b21, b22 = interpolate(f, g, 0.0)
    np.testing.assert_allclose(b22, y1 + 2 * y2, atol=1e-12)
    assert not np.any(b11) and not np.any(b21)


def test_constant_extrapolation_outside_centers():
    f = _planar_field()
    g = GridGeometry(-1.0, 2.0, -1.0, 2.0, 4, 4)
    b22 = interpolate(f, g, 0.0)[3]
    assert b22[0, 0] == pytest.approx(0.125 + 0.25)
    assert b22[-1, -1] == pytest.approx(0.875 + 1.75)


def test_time_interpolation_is_linear():
    f = _planar_field()
    g = GridGeometry(0.125, 0.875, 0.125, 0.875, 3, 3)
    y1, y2 = g.mesh()
    np.testing.assert_allclose(interpolate(f, g, 0.3)[3], 3.0 + y1 + 2 * y2, atol=1e-12)
    with pytest.raises(EstimatorError):
        interpolate(f, g, 1.5)


def test_source_matches_interpolate():
    f = _planar_field(times=(0.0, 1.0, 2.0))
    g = GridGeometry(-0.5, 1.5, 0.0, 1.0, 9, 5)
    src = DlmmCoefficients(f, g, "linear")
    for t in (0.0, 0.7, 2.0):
        got = src(t)
        ref = interpolate(f, g, t)
        assert got[0] == 0.0 and got[1] == 0.0 and got[2] == 0.0
        np.testing.assert_allclose(got[3], ref[3], atol=1e-13)


def test_cubic_interpolation_option():
    f = _planar_field()
    g = GridGeometry(0.125, 0.875, 0.125, 0.875, 5, 5)
    y1, y2 = g.mesh()
    np.testing.assert_allclose(DlmmCoefficients(f, g, "cubic")(0.0)[3], y1 + 2 * y2, atol=1e-10)
    with pytest.raises(EstimatorError):
        DlmmCoefficients(f, g, "spline")
