import numpy as np
import pytest

import oracles
from gcnrefine.evaluation import (
    dice,
    dice_report,
    kolmogorov_sf,
    ks_statistic,
    ks_test,
    relative_improvement,
    significance_stars,
    slicewise_dice,
)
from gcnrefine.volume import binary_volume


def cube(dims, lo, hi):
    m = np.zeros(dims, bool)
    m[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = True
    return m


class TestDice:
    def test_identical(self):
        m = cube((6, 6, 6), (1, 1, 1), (4, 4, 4))
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        assert dice(cube((6, 6, 6), (0, 0, 0), (2, 2, 2)), cube((6, 6, 6), (3, 3, 3), (5, 5, 5))) == 0.0

    def test_half(self):
        # |A| = 8, |B| = 4, overlap 4 -> 8/12
        a = cube((4, 4, 4), (0, 0, 0), (2, 2, 2))
        b = cube((4, 4, 4), (0, 0, 0), (2, 2, 1))
        assert dice(a, b) == pytest.approx(2 / 3)
        c = cube((4, 4, 4), (0, 0, 0), (2, 1, 2))
        d = cube((4, 4, 4), (0, 1, 0), (2, 2, 2))
        e = np.zeros((4, 4, 4), bool)
        e[0:2, 0:2, 0:2] = True
        assert dice(c | d, c) == pytest.approx(2 / 3)
        assert dice(np.pad(c, 0), e) == pytest.approx(2 * 4 / 12)

    def test_both_empty(self):
        z = np.zeros((3, 3, 3), bool)
        assert dice(z, z) == 1.0
        assert dice(z, cube((3, 3, 3), (0, 0, 0), (1, 1, 1))) == 0.0

    def test_accepts_volumes(self):
        m = cube((5, 5, 5), (1, 1, 1), (3, 3, 3))
        assert dice(binary_volume(m), binary_volume(m)) == 1.0

    def test_dims_mismatch(self):
        with pytest.raises(ValueError):
            dice(np.zeros((2, 2, 2), bool), np.zeros((2, 2, 3), bool))

    def test_matches_set_definition(self, rng):
        a = rng.random((7, 8, 9)) < 0.3
        b = rng.random((7, 8, 9)) < 0.4
        sa = set(zip(*np.nonzero(a)))
        sb = set(zip(*np.nonzero(b)))
        assert dice(a, b) == pytest.approx(2 * len(sa & sb) / (len(sa) + len(sb)), rel=1e-15)


class TestSlicewise:
    def test_skips_empty_slices(self):
        a = cube((4, 4, 6), (0, 0, 1), (2, 2, 3))
        b = cube((4, 4, 6), (0, 0, 2), (2, 2, 4))
        # z=1: A only -> 0, z=2: both -> 1, z=3: B only -> 0; z=0,4,5 skipped
        assert slicewise_dice(a, b) == [0.0, 1.0, 0.0]

    def test_axis(self):
        a = cube((5, 4, 4), (1, 0, 0), (3, 2, 2))
        assert slicewise_dice(a, a, axis="x") == [1.0, 1.0]
        assert len(slicewise_dice(a, a, axis="y")) == 2

    def test_report(self):
        a = cube((4, 4, 6), (0, 0, 1), (2, 2, 3))
        b = cube((4, 4, 6), (0, 0, 2), (2, 2, 4))
        r = dice_report(a, b)
        assert r.volume_dice == 0.5
        assert r.mean_slice_dice == pytest.approx(1 / 3)


class TestKs:
    def test_identical(self, rng):
        s = rng.random(40)
        r = ks_test(s, s)
        assert r.statistic == 0.0 and r.p_value == 1.0

    def test_separated(self):
        r = ks_test([0, 0, 0, 0], [1, 1, 1, 1])
        assert r.statistic == 1.0
        assert r.p_value < 0.05

    @pytest.mark.parametrize("seed", range(5))
    def test_ecdf_oracle(self, seed):
        rng = np.random.default_rng(seed)
        s1 = np.round(rng.normal(size=rng.integers(5, 40)), 1)
        s2 = np.round(rng.normal(0.3, 1.2, size=rng.integers(5, 40)), 1)
        assert ks_statistic(s1, s2) == pytest.approx(oracles.ecdf_statistic(s1, s2), abs=1e-15)

    @pytest.mark.parametrize("lam", [0.3, 0.5, 0.8, 1.0, 1.36, 1.63, 2.5])
    def test_series_oracle(self, lam):
        assert kolmogorov_sf(lam) == pytest.approx(oracles.kolmogorov_series(lam), abs=1e-10)

    def test_known_quantiles(self):
        # classical critical values of the Kolmogorov distribution
        assert kolmogorov_sf(1.3581) == pytest.approx(0.05, abs=1e-4)
        assert kolmogorov_sf(1.6276) == pytest.approx(0.01, abs=1e-4)

    def test_monotone_in_lambda(self):
        vals = [kolmogorov_sf(x) for x in np.linspace(0, 3, 61)]
        # near lam=0 the series sits at 1 up to its 1e-12 truncation
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_monotone_transform_invariant(self, rng):
        s1, s2 = rng.random(30), rng.random(25) * 1.3
        assert ks_statistic(s1, s2) == ks_statistic(np.exp(3 * s1), np.exp(3 * s2))

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_test([], [1.0])

    def test_stars(self):
        assert significance_stars(0.2) == ""
        assert significance_stars(0.049) == "*"
        assert significance_stars(0.05) == ""
        assert significance_stars(0.0099) == "**"
        assert ks_test([0] * 30, [1] * 30).stars == "**"


class TestRelativeImprovement:
    def test_values(self):
        assert relative_improvement(0.78, 0.75) == pytest.approx(4.0)
        assert relative_improvement(0.75, 0.78) == pytest.approx(-3.846, abs=1e-3)
        assert relative_improvement(0.5, 0.5) == 0.0

    def test_zero(self):
        with pytest.raises(ZeroDivisionError):
            relative_improvement(0.5, 0.0)
