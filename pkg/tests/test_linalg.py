from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from memfpk._linalg import expm2, matmul2

entries = st.floats(-4.0, 4.0, allow_nan=False)


@given(arrays(np.float64, (2, 2), elements=entries))
def test_expm2_matches_scipy(m):
    ref = expm(m)
    np.testing.assert_allclose(expm2(m), ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())


@pytest.mark.parametrize("m", [
    np.zeros((2, 2)),
    np.array([[0.0, 1.0], [0.0, 0.0]]),           # nilpotent
    np.array([[-1.0, 1.0], [-0.25, 0.0]]),        # repeated eigenvalue
    np.array([[0.0, 1.0], [-1.0, 0.0]]) * 1e-5,   # nearly zero rotation
    np.array([[0.0, 1e-4], [1e-4, 0.0]]),
])
def test_expm2_degenerate_cases(m):
    np.testing.assert_allclose(expm2(m), expm(m), rtol=1e-13, atol=1e-15)


def test_expm2_batches():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(5, 3, 2, 2))
    out = expm2(m)
    for idx in np.ndindex(5, 3):
        np.testing.assert_allclose(out[idx], expm(m[idx]), rtol=1e-11, atol=1e-13)


@given(arrays(np.float64, (2, 2), elements=entries))
def test_expm2_determinant_is_exp_trace(m):
    assert np.linalg.det(expm2(m)) == pytest.approx(np.exp(np.trace(m)), rel=1e-9)


def test_matmul2_matches_matmul():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(7, 2, 2)), rng.normal(size=(7, 2, 2))
    np.testing.assert_allclose(matmul2(x, y), x @ y, rtol=1e-14)
