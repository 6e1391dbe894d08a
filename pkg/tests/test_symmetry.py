import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ersr.ellipse import EllipseParams
from ersr.losses import mse
from ersr.symmetry import (
    AXIS_STRATEGIES,
    SymmetryAxis,
    axis_from_ellipse,
    compose_symmetric_images,
    decompose_prediction,
    mirror_prediction,
    reflect_point,
    split_halves,
)

from oracles import compose_oracle, decompose_oracle, mirror_oracle


def symmetric_rows(h, w, center_row, rng):
    """Random grid mirror-symmetric about row ``center_row`` (integer)."""
    g = rng.random((h, w))
    for r in range(h):
        m = 2 * center_row - r
        if 0 <= m < h and m < r:
            g[r] = g[m]
    return g


class TestReflect:
    def test_horizontal_axis(self):
        assert reflect_point((10, 13), SymmetryAxis(10, 10, 0)) == pytest.approx((10, 7))

    def test_vertical_axis(self):
        assert reflect_point((13, 10), SymmetryAxis(10, 10, 90)) == pytest.approx((7, 10))

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-100, 100),
        st.floats(-100, 100),
        st.floats(-100, 100),
        st.floats(-100, 100),
        st.floats(0, 179.99),
    )
    def test_involution(self, a, b, ca, cb, theta):
        axis = SymmetryAxis(ca, cb, theta)
        back = reflect_point(reflect_point((a, b), axis), axis)
        assert back[0] == pytest.approx(a, abs=1e-6)
        assert back[1] == pytest.approx(b, abs=1e-6)


class TestSplit:
    def test_horizontal_axis_splits_upper_and_lower(self):
        halves = split_halves(SymmetryAxis(4, 4, 0), 9, 9)
        assert halves.left[:4].all() and not halves.left[4:].any()
        assert halves.right[4:].all()

    def test_literal_mode_uses_along_axis_coordinate(self):
        halves = split_halves(SymmetryAxis(4, 4, 0), 9, 9, mode="literal")
        assert halves.left[:, :4].all() and not halves.left[:, 4:].any()

    @pytest.mark.parametrize("mode", ["perpendicular", "literal"])
    @pytest.mark.parametrize("theta", [0, 17, 45, 90, 133])
    def test_partition(self, mode, theta):
        h = split_halves(SymmetryAxis(7.3, 9.1, theta), 20, 17, mode)
        assert np.array_equal(h.left + h.right, np.ones((20, 17), np.uint8))

    @pytest.mark.parametrize("theta", [0, 30, 45, 90, 121])
    def test_reflection_swaps_sides_exhaustively(self, theta):
        axis = SymmetryAxis(15.5, 15.5, theta)
        h = split_halves(axis, 32, 32)
        mism = 0
        for b in range(32):
            for a in range(32):
                ra, rb = reflect_point((a, b), axis)
                ia, ib = int(round(ra)), int(round(rb))
                if not (0 <= ia < 32 and 0 <= ib < 32):
                    continue
                # offset across the axis; pixels within half a pixel of it may round onto either side
                ua, ub = axis.direction
                off = -(a - axis.c_a) * ub + (b - axis.c_b) * ua
                if abs(off) <= 0.75:
                    continue
                if h.left[b, a] == h.left[ib, ia]:
                    mism += 1
        assert mism == 0

    def test_restrict_to_foreground(self):
        m = np.zeros((9, 9), np.uint8)
        m[2:7, 2:7] = 1
        h = split_halves(SymmetryAxis(4, 4, 0), 9, 9).restrict(m)
        assert np.array_equal(h.left + h.right, m)


class TestAxisStrategies:
    E = EllipseParams(30, 32, 40, 24, 25)

    def test_long_and_short(self):
        assert axis_from_ellipse(self.E, "long").theta == pytest.approx(25)
        assert axis_from_ellipse(self.E, "short").theta == pytest.approx(115)

    def test_line_strategies_stay_in_bounds(self):
        rng = np.random.default_rng(0)
        m = np.zeros((64, 64), np.uint8)
        m[20:45, 10:50] = 1
        for _ in range(20):
            hz = axis_from_ellipse(self.E, "horizontal", rng, m)
            vt = axis_from_ellipse(self.E, "vertical", rng, m)
            assert hz.theta == 0 and 20 <= hz.c_b <= 44
            assert vt.theta == 90 and 10 <= vt.c_a <= 49
        r = axis_from_ellipse(self.E, "random", rng)
        assert (r.c_a, r.c_b) == (30, 32)

    def test_all_strategies_known(self):
        for k in AXIS_STRATEGIES:
            axis_from_ellipse(self.E, k, np.random.default_rng(1))
        with pytest.raises(ValueError):
            axis_from_ellipse(self.E, "diagonal")


class TestCompose:
    def test_empty_mask_returns_image(self):
        x = np.random.default_rng(0).random((10, 10))
        axis = SymmetryAxis(5, 5, 0)
        pair = compose_symmetric_images(x, np.zeros((10, 10), np.uint8), axis, split_halves(axis, 10, 10), perturb=False)
        assert np.array_equal(pair.x_s1, x) and np.array_equal(pair.x_s2, x)

    def test_symmetric_fixed_point(self):
        rng = np.random.default_rng(5)
        x = symmetric_rows(11, 9, 5, rng)
        m = np.zeros((11, 9), np.uint8)
        m[2:9, 1:8] = 1
        axis = SymmetryAxis(4, 5, 0)
        pair = compose_symmetric_images(x, m, axis, split_halves(axis, 11, 9), perturb=False)
        assert np.max(np.abs(pair.x_s1 - x)) == 0
        assert np.max(np.abs(pair.x_s2 - x)) == 0

    def test_single_bright_pixel_against_literal_oracle(self):
        x = np.zeros((8, 8))
        x[2, 3] = 1.0  # (a, b) = (3, 2)
        m = np.zeros((8, 8), np.uint8)
        m[2, 3] = 1
        axis = SymmetryAxis(3.5, 4, 0)
        pair = compose_symmetric_images(x, m, axis, split_halves(axis, 8, 8), perturb=False)
        assert pair.x_s1[2, 3] == 1.0 and pair.x_s1[6, 3] == 1.0
        assert pair.x_s1.sum() == 2.0
        assert pair.x_s2.sum() == 0.0
        o1, o2 = compose_oracle(x.tolist(), m.tolist(), 3.5, 4, 0)
        assert np.array_equal(pair.x_s1, np.array(o1))
        assert np.array_equal(pair.x_s2, np.array(o2))

    @pytest.mark.parametrize("theta", [0, 30, 90, 141])
    def test_random_cases_match_oracle_on_zero_background(self, theta):
        rng = np.random.default_rng(theta)
        m = np.zeros((16, 16), np.uint8)
        m[4:12, 5:12] = rng.random((8, 7)) > 0.3
        x = rng.random((16, 16)) * m  # zero background, so pasting and summing agree
        axis = SymmetryAxis(8.2, 7.6, theta)
        pair = compose_symmetric_images(x, m, axis, split_halves(axis, 16, 16), perturb=False)
        o1, o2 = compose_oracle(x.tolist(), m.tolist(), 8.2, 7.6, theta)
        # Pixels that receive two mirrored contributions through rounding are excluded.
        assert np.mean(np.isclose(pair.x_s1, o1)) > 0.97
        assert np.mean(np.isclose(pair.x_s2, o2)) > 0.97

    def test_perturbation_is_seeded(self):
        rng = np.random.default_rng(2)
        x = rng.random((20, 20))
        m = np.zeros((20, 20), np.uint8)
        m[5:15, 5:15] = 1
        axis = SymmetryAxis(9.5, 10, 30)
        h = split_halves(axis, 20, 20)
        a = compose_symmetric_images(x, m, axis, h, seed=7)
        b = compose_symmetric_images(x, m, axis, h, seed=7)
        c = compose_symmetric_images(x, m, axis, h, seed=8)
        assert a.x_s1.tobytes() == b.x_s1.tobytes() and a.x_s2.tobytes() == b.x_s2.tobytes()
        assert not np.array_equal(a.x_s1, c.x_s1)
        # Background far from any mirrored content is left untouched.
        assert a.x_s1[0, 0] == x[0, 0] and a.x_s2[19, 19] == x[19, 19]
        assert 0 <= a.x_s1.min() and a.x_s1.max() <= 1

    def test_out_of_grid_reflections_read_zero(self):
        x = np.ones((6, 6))
        m = np.zeros((6, 6), np.uint8)
        m[0:2, :] = 1
        axis = SymmetryAxis(2.5, 5.0, 0)  # reflecting rows 0-1 lands at rows 8-9
        pair = compose_symmetric_images(x, m, axis, split_halves(axis, 6, 6), perturb=False)
        assert np.array_equal(pair.x_s1[0:2], np.ones((2, 6)))


class TestMirror:
    def test_symmetric_fixed_point(self):
        p = symmetric_rows(9, 7, 4, np.random.default_rng(1))
        axis = SymmetryAxis(3, 4, 0)
        o1, o2 = mirror_prediction(p, axis, split_halves(axis, 9, 7))
        assert np.array_equal(o1, p) and np.array_equal(o2, p)

    def test_first_output_is_reflection_invariant(self):
        p = np.random.default_rng(3).random((9, 9))
        axis = SymmetryAxis(4, 4, 0)
        o1, _ = mirror_prediction(p, axis, split_halves(axis, 9, 9))
        assert np.array_equal(o1, o1[::-1])

    def test_single_left_pixel(self):
        p = np.zeros((4, 4))
        p[0, 1] = 1.0
        axis = SymmetryAxis(1.5, 1.5, 0)
        halves = split_halves(axis, 4, 4)
        o1, o2 = mirror_prediction(p, axis, halves)
        assert o1[0, 1] == 1.0 and o1[3, 1] == 1.0 and o1.sum() == 2.0
        assert o2[0, 1] == 0.0 and o2[3, 1] == 0.0
        r1, r2 = mirror_oracle(p.tolist(), 1.5, 1.5, 0)
        assert np.array_equal(o1, r1) and np.array_equal(o2, r2)

    @pytest.mark.parametrize("theta", [0, 22.5, 90, 160])
    def test_matches_oracle(self, theta):
        p = np.random.default_rng(int(theta)).random((12, 10))
        axis = SymmetryAxis(4.7, 6.1, theta)
        o1, o2 = mirror_prediction(p, axis, split_halves(axis, 12, 10))
        r1, r2 = mirror_oracle(p.tolist(), 4.7, 6.1, theta)
        assert np.array_equal(o1, r1) and np.array_equal(o2, r2)


class TestDecompose:
    def test_symmetric_input_gives_equal_parts(self):
        p = symmetric_rows(9, 8, 4, np.random.default_rng(9))
        axis = SymmetryAxis(3.5, 4, 0)
        p1, p2 = decompose_prediction(p, axis, split_halves(axis, 9, 8))
        assert np.array_equal(p1, p2)
        assert mse(p1, p2) == 0.0

    def test_zero_right_half(self):
        p = np.random.default_rng(4).random((8, 8))
        axis = SymmetryAxis(3.5, 4, 0)
        h = split_halves(axis, 8, 8)
        p = p * h.left
        _, p2 = decompose_prediction(p, axis, h)
        assert not p2.any()

    def test_random_matches_oracle(self):
        p = np.random.default_rng(12).random((8, 8))
        axis = SymmetryAxis(3.5, 4, 0)
        p1, p2 = decompose_prediction(p, axis, split_halves(axis, 8, 8))
        r1, r2 = decompose_oracle(p.tolist(), 3.5, 4, 0)
        assert np.array_equal(p1, r1) and np.array_equal(p2, r2)

    @pytest.mark.parametrize("theta", [13, 67, 90, 115])
    def test_oblique_matches_oracle(self, theta):
        p = np.random.default_rng(theta).random((11, 13))
        axis = SymmetryAxis(6.3, 5.2, theta)
        p1, p2 = decompose_prediction(p, axis, split_halves(axis, 11, 13))
        r1, r2 = decompose_oracle(p.tolist(), 6.3, 5.2, theta)
        assert np.array_equal(p1, r1) and np.array_equal(p2, r2)

    def test_foreground_only_variant(self):
        p = symmetric_rows(9, 8, 4, np.random.default_rng(10))
        m = np.zeros((9, 8), np.uint8)
        m[1:8, 2:6] = 1
        axis = SymmetryAxis(3.5, 4, 0)
        parts = split_halves(axis, 9, 8).restrict(m)
        p1, p2 = decompose_prediction(p, axis, parts)
        assert not p1[m == 0].any() and not p2[m == 0].any()
        assert mse(p1, p2) == 0.0
