import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ersr.metrics import MetricUndefined, asd, dice_score, hd95, surface, surface_distances

from oracles import percentile_oracle, pooled_surface_distances_oracle, surface_oracle


def blob(shape, rng, p=0.6):
    m = np.zeros(shape, np.uint8)
    h, w = shape
    r0, c0 = rng.integers(0, h // 2), rng.integers(0, w // 2)
    r1, c1 = rng.integers(r0 + 1, h + 1), rng.integers(c0 + 1, w + 1)
    m[r0:r1, c0:c1] = rng.random((r1 - r0, c1 - c0)) < p
    m[r0, c0] = 1
    return m


class TestDice:
    def test_examples(self):
        a = np.zeros((4, 4), np.uint8)
        a[0:2] = 1
        b = np.zeros((4, 4), np.uint8)
        b[1:3] = 1
        assert dice_score(a, a) == 1.0
        assert dice_score(a, 1 - a) == 0.0
        assert dice_score(a, b) == 0.5

    def test_empty_conventions(self):
        z = np.zeros((3, 3), np.uint8)
        one = z.copy()
        one[1, 1] = 1
        assert dice_score(z, z) == 1.0
        assert dice_score(z, one) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice_score(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSurface:
    def test_block_surface(self):
        m = np.zeros((6, 6), np.uint8)
        m[1:5, 1:5] = 1
        s = surface(m)
        assert s.sum() == 12 and not s[2:4, 2:4].any()

    def test_grid_edge_counts_as_background(self):
        assert surface(np.ones((3, 3), np.uint8)).sum() == 8

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 10), st.integers(1, 10)), elements=st.integers(0, 1)))
    def test_matches_oracle(self, m):
        pts = sorted(tuple(int(v) for v in p) for p in np.argwhere(surface(m)))
        assert pts == sorted(tuple(p) for p in surface_oracle(m.tolist()))


class TestDistances:
    def test_identical_masks(self):
        m = blob((20, 20), np.random.default_rng(0))
        assert hd95(m, m) == 0.0 and asd(m, m) == 0.0

    @pytest.mark.parametrize("spacing", [1.0, 0.5, 2.3])
    def test_single_pixels_five_apart(self, spacing):
        a = np.zeros((5, 12), np.uint8)
        b = a.copy()
        a[2, 3] = 1
        b[2, 8] = 1
        assert hd95(a, b, spacing) == pytest.approx(5 * spacing)
        assert asd(a, b, spacing) == pytest.approx(5 * spacing)

    def test_empty_surface_raises(self):
        a = np.zeros((4, 4), np.uint8)
        b = a.copy()
        b[1, 1] = 1
        with pytest.raises(MetricUndefined):
            hd95(a, b)
        with pytest.raises(MetricUndefined):
            asd(b, a)

    def test_directed_sets(self):
        a = np.zeros((5, 12), np.uint8)
        b = a.copy()
        a[2, 3] = 1
        b[2, 8:10] = 1
        d = surface_distances(a, b)
        assert sorted(d.a_to_b.tolist()) == [5.0]
        assert sorted(d.b_to_a.tolist()) == [5.0, 6.0]
        assert len(d.pooled) == 3

    @pytest.mark.parametrize("seed", range(8))
    def test_oracle_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        a, b = blob((32, 32), rng), blob((32, 32), rng)
        pooled = pooled_surface_distances_oracle(a.tolist(), b.tolist())
        assert hd95(a, b) == pytest.approx(percentile_oracle(pooled, 95), abs=1e-6)
        assert asd(a, b) == pytest.approx(sum(pooled) / len(pooled), abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetry_and_bounds(self, seed):
        rng = np.random.default_rng(100 + seed)
        a, b = blob((24, 30), rng), blob((24, 30), rng)
        assert dice_score(a, b) == dice_score(b, a)
        assert hd95(a, b) == pytest.approx(hd95(b, a), abs=1e-12)
        assert asd(a, b) == pytest.approx(asd(b, a), abs=1e-12)
        pooled = surface_distances(a, b).pooled
        assert hd95(a, b) <= pooled.max() + 1e-12
        assert asd(a, b) <= pooled.max() + 1e-12

    def test_translation_invariance(self):
        rng = np.random.default_rng(9)
        a = np.zeros((40, 40), np.uint8)
        b = a.copy()
        a[5:20, 5:20] = blob((15, 15), rng)
        b[5:20, 5:20] = blob((15, 15), rng)
        sa, sb = np.roll(a, (7, 11), (0, 1)), np.roll(b, (7, 11), (0, 1))
        assert dice_score(a, b) == dice_score(sa, sb)
        assert hd95(a, b) == pytest.approx(hd95(sa, sb), abs=1e-12)
        assert asd(a, b) == pytest.approx(asd(sa, sb), abs=1e-12)
