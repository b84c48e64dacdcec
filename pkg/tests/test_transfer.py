import itertools

import numpy as np
import pytest

from ivoseg.errors import InputError, ShapeError
from ivoseg.features import ExtractorConfig, FeatureGrid, extract
from ivoseg.numerics import resample
from ivoseg.transfer import (
    LocalWindow,
    apply_windowed,
    global_affinity,
    global_transition,
    local_affinity,
    local_transition,
    transfer_global,
    transfer_global_multi,
    transfer_local,
)


def make_grid(values):
    values = np.asarray(values, dtype=np.float64)
    h, w, c = values.shape
    return FeatureGrid(height=h, width=w, channels=c, stride=4, values=values)


def random_grid(rng, h, w, c):
    return make_grid(rng.normal(size=(h, w, c)))


# ---------------------------------------------------------------------------
# independent dense oracle for the local path
# ---------------------------------------------------------------------------

def dense_local_oracle(f_t, f_p, radius=4, stride=2):
    """Dense masked softmax transition built from first principles."""
    h, w, _ = f_t.values.shape
    n = h * w
    offs = list(itertools.product(range(-radius, radius + 1, stride), repeat=2))
    mat = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    for r in range(h):
        for c in range(w):
            i = r * w + c
            for dy, dx in offs:
                rr, cc = r + dy, c + dx
                if 0 <= rr < h and 0 <= cc < w:
                    j = rr * w + cc
                    mat[i, j] = float(f_t.values[r, c] @ f_p.values[rr, cc])
                    mask[i, j] = True
    out = np.zeros((n, n))
    for j in range(n):
        rows = np.nonzero(mask[:, j])[0]
        col = mat[rows, j]
        e = np.exp(col - col.max())
        out[rows, j] = e / e.sum()
    return out, mask


class TestGlobalAffinity:
    def test_identical_constant_grids_unit_cosine(self):
        frame = np.full((32, 32, 3), (150, 60, 60), dtype=np.uint8)
        cfg = ExtractorConfig(kappa=1.0, gamma=0.0)
        f = extract(frame, "global", cfg)
        w = global_affinity(f, f)
        assert np.allclose(w, 1.0, atol=1e-9)

    def test_orthogonal_block_structure(self):
        a = np.zeros((1, 2, 4))
        a[0, 0] = [1, 0, 0, 0]
        a[0, 1] = [0, 1, 0, 0]
        b = np.zeros((1, 2, 4))
        b[0, 0] = [0, 0, 1, 0]
        b[0, 1] = [0, 0, 0, 1]
        w = global_affinity(make_grid(a), make_grid(b))
        assert np.allclose(w, 0.0)

    def test_per_entry_oracle(self, rng):
        f_t = random_grid(rng, 3, 3, 5)
        f_a = random_grid(rng, 3, 3, 5)
        w = global_affinity(f_t, f_a)
        for i in range(9):
            for j in range(9):
                expected = float(
                    f_t.values[i // 3, i % 3] @ f_a.values[j // 3, j % 3]
                )
                assert abs(w[i, j] - expected) < 1e-10

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            global_affinity(random_grid(rng, 2, 2, 3), random_grid(rng, 2, 2, 4))


class TestTransferGlobal:
    def test_constant_features_average(self, rng):
        values = np.tile(np.array([1.0, 2.0, 0.5]), (3, 3, 1))
        f = make_grid(values)
        field = rng.random((9, 2))
        out = transfer_global(f, f, field)
        assert np.allclose(out, field.mean(axis=0, keepdims=True))

    def test_one_hot_source_column(self, rng):
        f_t = random_grid(rng, 2, 3, 4)
        f_a = random_grid(rng, 2, 3, 4)
        a = global_transition(f_t, f_a)
        j = 4
        source = np.zeros((6, 1))
        source[j] = 1.0
        out = transfer_global(f_t, f_a, source)
        assert np.allclose(out[:, 0], a[:, j])
        assert abs(out.sum() - 1.0) < 1e-9

    def test_dense_brute_force_oracle(self, rng):
        f_t = random_grid(rng, 4, 4, 6)
        f_a = random_grid(rng, 4, 4, 6)
        field = rng.random((16, 3))
        # independent path: per-entry dots, manual stable softmax, loop multiply
        w = np.zeros((16, 16))
        for i in range(16):
            for j in range(16):
                w[i, j] = float(f_t.values[i // 4, i % 4] @ f_a.values[j // 4, j % 4])
        a = np.zeros_like(w)
        for j in range(16):
            e = np.exp(w[:, j] - w[:, j].max())
            a[:, j] = e / e.sum()
        expected = np.zeros((16, 3))
        for i in range(16):
            for k in range(3):
                expected[i, k] = sum(a[i, j] * field[j, k] for j in range(16))
        assert np.max(np.abs(transfer_global(f_t, f_a, field) - expected)) < 1e-9

    def test_mass_conservation(self, rng):
        f_t = random_grid(rng, 5, 4, 6)
        f_a = random_grid(rng, 3, 6, 6)
        p = rng.random((18, 2))
        out = transfer_global(f_t, f_a, p)
        assert np.max(np.abs(out.sum(axis=0) - p.sum(axis=0))) < 1e-6

    def test_linearity(self, rng):
        f_t = random_grid(rng, 3, 3, 4)
        f_a = random_grid(rng, 3, 3, 4)
        p1, p2 = rng.random((9, 1)), rng.random((9, 1))
        lhs = transfer_global(f_t, f_a, 0.3 * p1 + 0.6 * p2)
        rhs = 0.3 * transfer_global(f_t, f_a, p1) + 0.6 * transfer_global(f_t, f_a, p2)
        assert np.max(np.abs(lhs - rhs)) < 1e-8

    def test_permutation_equivariance(self, rng):
        f_t = random_grid(rng, 3, 3, 4)
        f_a = random_grid(rng, 3, 3, 4)
        field = rng.random((9, 2))
        perm = rng.permutation(9)
        flat = f_a.values.reshape(9, 4)[perm].reshape(3, 3, 4)
        out1 = transfer_global(f_t, f_a, field)
        out2 = transfer_global(f_t, make_grid(flat), field[perm])
        assert np.max(np.abs(out1 - out2)) < 1e-9

    def test_row_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            transfer_global(random_grid(rng, 2, 2, 3), random_grid(rng, 2, 2, 3),
                            np.zeros((5, 1)))


class TestTransferGlobalMulti:
    def test_single_term_equals_transfer_global(self, rng):
        f_t = random_grid(rng, 3, 3, 4)
        f_a = random_grid(rng, 3, 3, 4)
        field = rng.random((9, 2))
        assert np.array_equal(
            transfer_global_multi(f_t, [(f_a, field)]),
            transfer_global(f_t, f_a, field),
        )

    def test_two_identical_terms(self, rng):
        f_t = random_grid(rng, 3, 3, 4)
        f_a = random_grid(rng, 3, 3, 4)
        field = rng.random((9, 1))
        single = transfer_global(f_t, f_a, field)
        double = transfer_global_multi(f_t, [(f_a, field), (f_a, field)])
        assert np.max(np.abs(double - single)) < 1e-12

    def test_disjoint_one_hot_average(self, rng):
        f_t = random_grid(rng, 2, 2, 3)
        f_a1 = random_grid(rng, 2, 2, 3)
        f_a2 = random_grid(rng, 2, 2, 3)
        s1 = np.zeros((4, 1)); s1[0] = 1.0
        s2 = np.zeros((4, 1)); s2[3] = 1.0
        t1 = transfer_global(f_t, f_a1, s1)
        t2 = transfer_global(f_t, f_a2, s2)
        combined = transfer_global_multi(f_t, [(f_a1, s1), (f_a2, s2)])
        assert np.allclose(combined, (t1 + t2) / 2.0, atol=1e-12)

    def test_empty_list(self, rng):
        with pytest.raises(InputError):
            transfer_global_multi(random_grid(rng, 2, 2, 3), [])


class TestLocalWindow:
    def test_default_offsets(self):
        offs = LocalWindow().offsets()
        assert offs.shape == (25, 2)
        expected = {(dy, dx) for dy in (-4, -2, 0, 2, 4) for dx in (-4, -2, 0, 2, 4)}
        assert {tuple(o) for o in offs} == expected

    def test_corner_candidates(self, rng):
        f = random_grid(rng, 6, 6, 3)
        aff = local_affinity(f, f)
        corner_valid = aff.valid[:, 0, 0]
        assert corner_valid.sum() == 9  # {0,2,4}^2

    def test_interior_candidates(self, rng):
        f = random_grid(rng, 9, 9, 3)
        aff = local_affinity(f, f)
        assert aff.valid[:, 4, 4].sum() == 25

    def test_outside_window_exact_zero(self, rng):
        f_t = random_grid(rng, 5, 5, 3)
        f_p = random_grid(rng, 5, 5, 3)
        mat, mask = local_transition(local_affinity(f_t, f_p)).dense()
        assert np.all(mat[~mask] == 0.0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            local_affinity(random_grid(rng, 4, 4, 3), random_grid(rng, 5, 4, 3))

    def test_asymmetric_window_drops_unreachable_columns(self, rng):
        # a single off-center offset: source cells near the far border sit
        # inside no target window; their mass is dropped, not NaN-ed
        f_t = random_grid(rng, 6, 6, 3)
        f_p = random_grid(rng, 6, 6, 3)
        window = LocalWindow(radius=2, stride=5)
        assert {tuple(o) for o in window.offsets()} == {(-2, -2)}
        trans = local_transition(local_affinity(f_t, f_p, window))
        assert trans.dropped_columns > 0
        mat, mask = trans.dense()
        assert np.isfinite(mat).all()
        col_sums = mat.sum(axis=0)
        reached = mask.any(axis=0)
        assert np.allclose(col_sums[reached], 1.0, atol=1e-9)
        assert np.all(col_sums[~reached] == 0.0)
        assert (~reached).sum() == trans.dropped_columns
        # transferred mass equals the mass of the reached source cells only
        source = np.ones((6, 6))
        out = apply_windowed(trans, source)
        assert abs(out.sum() - reached.sum()) < 1e-9


class TestTransferLocal:
    def test_zero_source(self, rng):
        f_t = random_grid(rng, 4, 4, 3)
        f_p = random_grid(rng, 4, 4, 3)
        out = transfer_local(f_t, f_p, np.zeros((16, 16)))
        assert np.allclose(out, 0.0)

    def test_one_hot_interior_mass(self):
        # constant features -> window membership alone decides the spread
        values = np.tile(np.array([0.3, 0.7, 0.1]), (12, 12, 1))
        f = make_grid(values)
        aff = local_transition(local_affinity(f, f))
        source = np.zeros((12, 12))
        source[6, 6] = 1.0
        out = apply_windowed(aff, source)
        dense, _ = dense_local_oracle(f, f)
        expected = (dense @ source.reshape(-1)).reshape(12, 12)
        assert np.max(np.abs(out - expected)) < 1e-9
        assert abs(out.sum() - 1.0) < 1e-9
        assert (out > 0).sum() <= 25

    def test_windowed_equals_dense_oracle(self, rng):
        for h, w in [(5, 7), (12, 12), (16, 16)]:
            f_t = random_grid(rng, h, w, 4)
            f_p = random_grid(rng, h, w, 4)
            trans = local_transition(local_affinity(f_t, f_p))
            source = rng.random((h, w))
            got = apply_windowed(trans, source)
            dense, _ = dense_local_oracle(f_t, f_p)
            expected = (dense @ source.reshape(-1)).reshape(h, w)
            assert np.max(np.abs(got - expected)) < 1e-9

    def test_column_stochastic(self, rng):
        f_t = random_grid(rng, 8, 8, 4)
        f_p = random_grid(rng, 8, 8, 4)
        mat, _ = local_transition(local_affinity(f_t, f_p)).dense()
        assert np.max(np.abs(mat.sum(axis=0) - 1.0)) < 1e-6

    def test_mass_conservation_after_downsample(self, rng):
        frame1 = (rng.random((48, 48, 3)) * 255).astype(np.uint8)
        frame2 = (rng.random((48, 48, 3)) * 255).astype(np.uint8)
        cfg = ExtractorConfig()
        f_t = extract(frame1, "local", cfg)
        f_p = extract(frame2, "local", cfg)
        p_prev = rng.random((48, 48))
        out = transfer_local(f_t, f_p, p_prev)
        grid_mass = resample(p_prev, 12, 12, "area").sum()
        assert abs(out.sum() - grid_mass) < 1e-6

    def test_shifted_object_tracked(self):
        # a distinctive 2-cell pattern moving 2 cells to the right
        rng = np.random.default_rng(3)
        base = rng.normal(size=(10, 10, 4)) * 0.05
        pattern = np.array([3.0, -2.0, 1.5, 0.7])
        prev = base.copy()
        prev[5, 3] += pattern
        prev[5, 4] += pattern
        curr = base.copy()
        curr[5, 5] += pattern
        curr[5, 6] += pattern
        f_p, f_t = make_grid(prev), make_grid(curr)
        source = np.zeros((10, 10))
        source[5, 3] = source[5, 4] = 1.0
        out = apply_windowed(local_transition(local_affinity(f_t, f_p)), source)
        top = np.unravel_index(np.argmax(out), out.shape)
        assert top in [(5, 5), (5, 6)]
        assert out[5, 5] + out[5, 6] > 0.5 * source.sum()
