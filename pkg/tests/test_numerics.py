import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivoseg.errors import DegenerateColumnError, ShapeError
from ivoseg.numerics import (
    column_softmax,
    matmul,
    resample,
    reshape_grid_to_matrix,
    reshape_matrix_to_grid,
)


class TestReshape:
    def test_row_major_order(self):
        grid = np.array([[[1.0], [2.0]], [[3.0], [4.0]]])
        m = reshape_grid_to_matrix(grid)
        assert m.shape == (4, 1)
        assert m[:, 0].tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_round_trip(self, rng):
        grid = rng.normal(size=(5, 7, 3))
        assert np.array_equal(reshape_matrix_to_grid(reshape_grid_to_matrix(grid), 5, 7), grid)

    def test_degenerate_size(self, rng):
        grid = rng.normal(size=(1, 1, 6))
        m = reshape_grid_to_matrix(grid)
        assert m.shape == (1, 6)
        assert np.array_equal(m[0], grid[0, 0])

    def test_bad_row_count(self):
        with pytest.raises(ShapeError):
            reshape_matrix_to_grid(np.zeros((5, 2)), 2, 2)


class TestMatmul:
    def test_identity(self, rng):
        m = rng.normal(size=(3, 4))
        assert np.allclose(matmul(np.eye(3), m), m)

    def test_hand_sum(self):
        out = matmul(np.ones((2, 2)), np.ones((2, 1)))
        assert np.array_equal(out, np.array([[2.0], [2.0]]))

    def test_against_triple_loop(self, rng):
        a = rng.normal(size=(6, 4))
        b = rng.normal(size=(4, 5))
        expected = np.zeros((6, 5))
        for i in range(6):
            for j in range(5):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        assert np.max(np.abs(matmul(a, b) - expected)) < 1e-12

    def test_random_cases_match_oracle(self, rng):
        for _ in range(200):
            n, k, m = rng.integers(1, 7, size=3)
            a = rng.normal(size=(n, k))
            b = rng.normal(size=(k, m))
            expected = np.zeros((n, m))
            for i in range(n):
                for j in range(m):
                    for p in range(k):
                        expected[i, j] += a[i, p] * b[p, j]
            got = matmul(a, b)
            scale = max(np.max(np.abs(expected)), 1.0)
            assert np.max(np.abs(got - expected)) / scale < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))


class TestColumnSoftmax:
    def test_uniform(self):
        out = column_softmax(np.zeros((2, 2)))
        assert np.allclose(out, 0.5)

    def test_scalar_ratio(self):
        out = column_softmax(np.array([[1.0], [0.0]]))
        e = math.exp(1.0)
        assert np.allclose(out[:, 0], [e / (e + 1.0), 1.0 / (e + 1.0)], atol=1e-12)

    def test_single_eligible_entry(self):
        w = np.array([[5.0, 1.0], [2.0, 3.0]])
        mask = np.array([[False, True], [True, True]])
        out = column_softmax(w, mask)
        assert out[1, 0] == 1.0
        assert out[0, 0] == 0.0

    def test_degenerate_column(self):
        mask = np.array([[False, True], [False, True]])
        with pytest.raises(DegenerateColumnError):
            column_softmax(np.zeros((2, 2)), mask)

    def test_columns_sum_to_one(self, rng):
        w = rng.normal(scale=30.0, size=(20, 15))
        out = column_softmax(w)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)
        assert np.max(np.abs(out.sum(axis=0) - 1.0)) < 1e-9

    def test_large_values_stable(self):
        out = column_softmax(np.array([[1000.0], [999.0]]))
        assert np.isfinite(out).all()
        assert abs(out[:, 0].sum() - 1.0) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(2, 6),
        st.integers(1, 5),
        st.floats(-50.0, 50.0),
        st.integers(0, 2**31 - 1),
    )
    def test_shift_invariance(self, n, m, shift, seed):
        w = np.random.default_rng(seed).normal(size=(n, m))
        shifted = w + shift  # same constant added to every column
        assert np.max(np.abs(column_softmax(shifted) - column_softmax(w))) < 1e-9


class TestResample:
    def test_constant_field(self):
        arr = np.full((4, 4), 0.3)
        for mode in ("bilinear", "area"):
            out = resample(arr, 7, 3, mode)
            assert np.allclose(out, 0.3)

    def test_area_average(self):
        arr = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert np.isclose(resample(arr, 1, 1, "area")[0, 0], 0.25)

    def test_identity_same_size(self, rng):
        arr = rng.random((6, 9))
        for mode in ("bilinear", "area"):
            assert np.array_equal(resample(arr, 6, 9, mode), arr)

    def _reference_bilinear(self, arr, th, tw):
        # independent nested-loop corner-anchored interpolation
        sh, sw = arr.shape
        out = np.zeros((th, tw))
        for o in range(th):
            for p in range(tw):
                y = (sh - 1) / 2 if th == 1 else o * (sh - 1) / (th - 1)
                x = (sw - 1) / 2 if tw == 1 else p * (sw - 1) / (tw - 1)
                y0 = min(int(np.floor(y)), sh - 2) if sh > 1 else 0
                x0 = min(int(np.floor(x)), sw - 2) if sw > 1 else 0
                fy, fx = y - y0, x - x0
                if sh == 1:
                    fy, y0 = 0.0, 0
                if sw == 1:
                    fx, x0 = 0.0, 0
                out[o, p] = (
                    arr[y0, x0] * (1 - fy) * (1 - fx)
                    + arr[min(y0 + 1, sh - 1), x0] * fy * (1 - fx)
                    + arr[y0, min(x0 + 1, sw - 1)] * (1 - fy) * fx
                    + arr[min(y0 + 1, sh - 1), min(x0 + 1, sw - 1)] * fy * fx
                )
        return out

    def test_matches_reference_bilinear(self, rng):
        arr = rng.random((5, 8))
        got = resample(arr, 11, 6, "bilinear")
        assert np.max(np.abs(got - self._reference_bilinear(arr, 11, 6))) < 1e-12

    def test_up_down_round_trip(self, rng):
        # a band-limited random field: raw iid noise has no round-trip
        # guarantee (the area step is a genuine local average)
        arr = resample(rng.random((4, 4)), 8, 8, "bilinear")
        up = resample(arr, 16, 16, "bilinear")
        # corner-anchored upsampling preserves corners
        for (i, j), (si, sj) in zip([(0, 0), (0, 15), (15, 0), (15, 15)],
                                    [(0, 0), (0, 7), (7, 0), (7, 7)]):
            assert abs(up[i, j] - arr[si, sj]) < 1e-6
        back = resample(up, 8, 8, "area")
        assert np.max(np.abs(back - arr)) < 0.25

    def test_round_trip_matches_reference_composition(self, rng):
        arr = rng.random((8, 8))
        up = resample(arr, 16, 16, "bilinear")
        assert np.max(np.abs(up - self._reference_bilinear(arr, 16, 16))) < 1e-12
        back = resample(up, 8, 8, "area")
        # independent area step: exact 2x2 block means
        expected = up.reshape(8, 2, 8, 2).mean(axis=(1, 3))
        assert np.max(np.abs(back - expected)) < 1e-12

    def test_area_preserves_mean(self, rng):
        arr = rng.random((7, 5))
        out = resample(arr, 3, 4, "area")
        assert np.isclose(out.mean(), arr.mean(), atol=1e-12)

    def test_multichannel(self, rng):
        arr = rng.random((4, 4, 3))
        out = resample(arr, 8, 8, "bilinear")
        assert out.shape == (8, 8, 3)
        for c in range(3):
            assert np.allclose(out[:, :, c], resample(arr[:, :, c], 8, 8, "bilinear"))

    def test_zero_target_rejected(self):
        with pytest.raises(ShapeError):
            resample(np.zeros((3, 3)), 0, 3)
