import math

import numpy as np
import pytest

from osclat import lattice as lat
from oracles import (
    brute_convolution_constant,
    brute_decay_norm,
    brute_interaction_weight,
    brute_set_distance,
)

HALVING = lat.exp_power_decay(exponent=0.0, rate=math.log(2.0))  # F(r) = 2^-r


def dist1d(x, y):
    return abs(x - y)


class TestDecayFunction:
    def test_normalization_and_monotone(self):
        rng = np.random.default_rng(0)
        for F in (HALVING, lat.power_decay(2.0), lat.exp_power_decay(2.0, 0.7)):
            assert F(0.0) == pytest.approx(1.0)
            r = np.sort(rng.uniform(0.0, 100.0, size=200))
            vals = F(r)
            assert np.all(np.diff(vals) <= 1e-15)
            assert np.all(vals > 0.0) and np.all(vals <= 1.0)

    def test_tabulated(self):
        F = lat.tabulated_decay([0.0, 1.0, 2.0], [1.0, 0.5, 0.1])
        assert F(0.0) == 1.0
        assert F(1.5) == pytest.approx(0.3)
        with pytest.raises(lat.GeometryError):
            lat.tabulated_decay([0.0, 1.0], [1.0, 1.5])
        with pytest.raises(lat.GeometryError):
            lat.tabulated_decay([0.5, 1.0], [1.0, 0.5])

    def test_weight_decay_definition(self):
        # constant base: sharpening gives a plain exponential
        const = lat.power_decay(0.0)
        F1 = lat.weight_decay(const, 1.0)
        assert F1(3.0) == pytest.approx(math.exp(-3.0))
        # 2^-r sharpened by ln 2 at r = 1 gives 1/4
        F2 = lat.weight_decay(HALVING, math.log(2.0))
        assert F2(1.0) == pytest.approx(0.25)
        with pytest.raises(lat.GeometryError):
            lat.weight_decay(HALVING, 0.0)
        with pytest.raises(lat.GeometryError):
            lat.weight_decay(HALVING, -1.0)

    def test_weight_decay_composes_additively(self):
        F = lat.power_decay(2.0)
        a = lat.weight_decay(lat.weight_decay(F, 0.3), 0.9)
        b = lat.weight_decay(F, 1.2)
        r = np.linspace(0.0, 40.0, 101)
        np.testing.assert_allclose(a(r), b(r), rtol=0, atol=1e-15)

    def test_weight_decay_on_tabulated_base(self):
        F = lat.tabulated_decay([0.0, 1.0, 3.0], [1.0, 0.4, 0.1])
        sharp = lat.weight_decay(F, 0.5)
        assert sharp(0.0) == pytest.approx(1.0)
        assert sharp(2.0) == pytest.approx(0.25 * math.exp(-1.0))
        assert sharp.family == "tabulated"


class TestConstructors:
    def test_chain_metric(self):
        c = lat.chain(5)
        assert c.n_sites == 5
        assert c.distance(0, 4) == pytest.approx(4.0)
        assert c.distance(2, 2) == 0.0

    def test_grid_metric(self):
        g = lat.grid2d(3, 3)
        assert g.n_sites == 9
        # corner to corner in a 3x3 grid
        assert g.distance(0, 8) == pytest.approx(2.0 * math.sqrt(2.0))

    def test_from_points_symmetry(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(12, 3))
        l = lat.from_points(pts)
        assert np.allclose(l.dist, l.dist.T)
        assert np.allclose(np.diag(l.dist), 0.0)

    def test_bad_metric_rejected(self):
        with pytest.raises(lat.GeometryError):
            lat.Lattice(coords=None, dist=np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(lat.GeometryError):
            lat.Lattice(coords=None, dist=np.array([[1.0]]))

    def test_from_metric_callable(self):
        hops = lat.from_metric(5, lambda x, y: float(abs(x - y) > 0) + abs(x - y) / 10.0)
        assert hops.distance(2, 2) == 0.0
        assert hops.distance(0, 3) == pytest.approx(1.3)
        with pytest.raises(lat.GeometryError):
            lat.from_metric(3, lambda x, y: x - y)  # asymmetric


class TestDecayNorm:
    def test_chain5_halving(self):
        # sup attained at the center: 1 + 2/2 + 2/4 = 2.5
        c = lat.chain(5)
        assert lat.decay_norm(c, HALVING, c.sites) == pytest.approx(2.5)

    def test_single_site(self):
        c = lat.chain(5)
        assert lat.decay_norm(c, HALVING, (0,)) == pytest.approx(1.0)

    def test_two_sites(self):
        c = lat.chain(2)
        assert lat.decay_norm(c, HALVING, c.sites) == pytest.approx(1.5)

    def test_matches_brute_oracle(self):
        c = lat.chain(11)
        F = lat.power_decay(2.0)
        got = lat.decay_norm(c, F, c.sites)
        want = brute_decay_norm(dist1d, F, range(11))
        assert got == pytest.approx(want, rel=1e-14)

    def test_empty_rejected(self):
        c = lat.chain(3)
        with pytest.raises(lat.GeometryError):
            lat.decay_norm(c, HALVING, ())


class TestConvolutionConstant:
    def test_single_site(self):
        c = lat.chain(4)
        assert lat.convolution_constant(c, HALVING, (2,)) == pytest.approx(1.0)

    def test_chain3_halving(self):
        # pair (0, 2): (1/4 + 1/4 + 1/4) / (1/4) = 3, and it is the max
        c = lat.chain(3)
        assert lat.convolution_constant(c, HALVING, c.sites) == pytest.approx(3.0)

    def test_matches_brute_oracle(self):
        F = lat.power_decay(2.0)
        for n in (9, 17):
            c = lat.chain(n)
            got = lat.convolution_constant(c, F, c.sites)
            want = brute_convolution_constant(dist1d, F, range(n))
            assert got == pytest.approx(want, rel=1e-13)

    def test_sharpened_no_larger(self):
        # exp(-mu r) factor is submultiplicative along triangles
        c = lat.chain(9)
        for F in (HALVING, lat.power_decay(2.0)):
            base = lat.convolution_constant(c, F, c.sites)
            for mu in (0.1, 1.0, 3.0):
                sharp = lat.convolution_constant(c, lat.weight_decay(F, mu), c.sites)
                assert sharp <= base + 1e-12


class TestInteractionWeight:
    def test_single_pair(self):
        c = lat.chain(5)
        assert lat.interaction_weight(c, HALVING, (0,), (3,)) == pytest.approx(0.125)

    def test_same_site(self):
        c = lat.chain(5)
        assert lat.interaction_weight(c, HALVING, (0,), (0,)) == pytest.approx(1.0)

    def test_two_by_two(self):
        c = lat.chain(4)
        got = lat.interaction_weight(c, HALVING, (0, 1), (2, 3))
        assert got == pytest.approx(1.125)
        want = brute_interaction_weight(dist1d, HALVING, (0, 1), (2, 3))
        assert got == pytest.approx(want)

    def test_symmetric(self):
        c = lat.chain(9)
        F = lat.power_decay(2.0)
        a = lat.interaction_weight(c, F, (0, 3, 5), (2, 7))
        b = lat.interaction_weight(c, F, (2, 7), (0, 3, 5))
        assert a == pytest.approx(b)

    def test_empty_rejected(self):
        c = lat.chain(3)
        with pytest.raises(lat.GeometryError):
            lat.interaction_weight(c, HALVING, (), (0,))


class TestSetDistance:
    def test_values(self):
        c = lat.chain(10)
        assert lat.set_distance(c, (0,), (3,)) == pytest.approx(3.0)
        assert lat.set_distance(c, (0, 2), (2, 5)) == 0.0
        assert lat.set_distance(c, (0, 5), (3, 9)) == pytest.approx(2.0)
        assert lat.set_distance(c, (0, 5), (3, 9)) == pytest.approx(
            brute_set_distance(dist1d, (0, 5), (3, 9))
        )


class TestMonotonicityUnderInclusion:
    def test_norm_and_convolution_grow_with_volume(self):
        c = lat.chain(17)
        F = lat.power_decay(2.0)
        inner = tuple(range(5, 12))
        outer = tuple(range(2, 15))
        assert lat.decay_norm(c, F, inner) <= lat.decay_norm(c, F, outer) + 1e-14
        assert lat.convolution_constant(c, F, inner) <= lat.convolution_constant(c, F, outer) + 1e-14


class TestBall:
    def test_ball_sites(self):
        c = lat.chain(9)
        assert lat.ball(c, 4, 2.0) == (2, 3, 4, 5, 6)
        assert lat.ball(c, 0, 0.5) == (0,)
