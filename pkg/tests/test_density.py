import json
import math

import numpy as np
import pytest

from rhoest.density import (
    Constant,
    ExpAffine,
    Partition,
    PiecewiseDensity,
    PiecewiseSqrt,
    Sample,
    SqrtAffine,
    hellinger2,
    inverse_cdf,
    mixture_half,
    normalize_sqrt,
    sample,
)
from rhoest.errors import DegenerateInputError, InputError


def uniform(a, b):
    return PiecewiseDensity.uniform(a, b)


def random_histogram(rng, lo=0.0, hi=3.0, max_cells=5):
    k = int(rng.integers(2, max_cells + 1))
    knots = np.sort(rng.uniform(lo, hi, size=k + 1))
    while np.min(np.diff(knots)) < 1e-3:
        knots = np.sort(rng.uniform(lo, hi, size=k + 1))
    heights = rng.uniform(0.05, 2.0, size=k)
    return PiecewiseDensity.from_histogram(knots, heights)


def riemann_h2(t, u, points):
    """Riemann-sum affinity on a knot-aligned grid: a pure pointwise-evaluation path."""
    lo = min(t.knots[0], u.knots[0]) - 0.5
    hi = max(t.knots[-1], u.knots[-1]) + 0.5
    grid = np.union1d(np.linspace(lo, hi, points), np.asarray(t.knots + u.knots))
    mids = 0.5 * (grid[:-1] + grid[1:])
    widths = np.diff(grid)
    aff = float(np.sum(np.sqrt(t.eval_array(mids) * u.eval_array(mids)) * widths))
    return 1.0 - aff


class TestPartition:
    def test_rejects_duplicates_and_disorder(self):
        with pytest.raises(InputError):
            Partition((0.0, 0.0))
        with pytest.raises(InputError):
            Partition((1.0, 0.0))

    def test_join_is_endpoint_union(self):
        p = Partition((1.0,)).join(Partition((0.5, 2.0)))
        assert p.endpoints == (0.5, 1.0, 2.0)

    def test_refines(self):
        assert Partition((0.0, 0.5, 1.0)).refines(Partition((0.5,)))
        assert not Partition((0.5,)).refines(Partition((0.25,)))


class TestEval:
    def test_uniform_midpoint(self):
        assert uniform(0, 1).eval(0.5) == 1.0

    def test_exponential_tail(self):
        d = PiecewiseDensity.build((0.0,), (Constant(0.0), ExpAffine(0.0, -1.0)))
        assert d.eval(1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_sqrt_affine_triangle_squared(self):
        # sqrt(t) = sqrt(3)(1-x) on (0,1): integrates to one, evaluates as (p+qx)^2
        r3 = math.sqrt(3.0)
        d = PiecewiseDensity.build((0.0, 1.0),
                                   (Constant(0.0), SqrtAffine(r3, -r3), Constant(0.0)))
        assert abs(d.total_mass - 1.0) < 1e-9
        assert d.eval(0.5) == pytest.approx(0.75, abs=1e-12)
        assert d.eval(1e-12) == pytest.approx(3.0, rel=1e-6)
        # knots belong to the segment ending there: at 0 the zero tail applies
        assert d.eval(0.0) == 0.0

    def test_nan_rejected(self):
        with pytest.raises(InputError):
            uniform(0, 1).eval(math.nan)


class TestHellinger:
    def test_identity(self):
        u = uniform(0, 1)
        assert hellinger2(u, u) <= 1e-12

    def test_two_uniforms_closed_form(self):
        got = hellinger2(uniform(0, 1), uniform(0, 2))
        assert got == pytest.approx(1.0 - 2.0 ** -0.5, abs=1e-9)

    def test_contaminated_mixture_is_near_its_bulk(self):
        s0 = PiecewiseDensity.from_histogram((0.0, 1.0, 9.0, 10.0), (0.99, 0.0, 0.01))
        got = hellinger2(s0, uniform(0, 1))
        assert got == pytest.approx(1.0 - math.sqrt(0.99), abs=1e-9)
        assert got <= 0.01

    def test_symmetry_and_range_random(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            t, u = random_histogram(rng), random_histogram(rng)
            a, b = hellinger2(t, u), hellinger2(u, t)
            assert abs(a - b) <= 1e-12
            assert 0.0 <= a <= 1.0

    def test_matches_riemann_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            t, u = random_histogram(rng), random_histogram(rng)
            assert hellinger2(t, u) == pytest.approx(riemann_h2(t, u, 200_001), abs=1e-6)

    def test_exp_affine_pair_exact(self):
        lap = PiecewiseDensity.build(
            (0.0,), (ExpAffine(math.log(0.5), 1.0), ExpAffine(math.log(0.5), -1.0)))
        expo = PiecewiseDensity.build((0.0,), (Constant(0.0), ExpAffine(0.0, -1.0)))
        # affinity = int_0^inf sqrt(0.5) e^{-x} = sqrt(0.5)
        assert hellinger2(lap, expo) == pytest.approx(1.0 - math.sqrt(0.5), abs=1e-12)


class TestNormalizeSqrt:
    def test_identity_on_unit_norm(self):
        t = PiecewiseDensity.from_histogram((0.0, 0.5, 1.0), (1.5, 0.5))
        back = normalize_sqrt(PiecewiseSqrt.from_density(t))
        assert back.knots == t.knots
        assert hellinger2(t, back) <= 1e-12

    def test_constant_one_on_0_2(self):
        f = PiecewiseSqrt((0.0, 2.0), (Constant(0.0), Constant(1.0), Constant(0.0)))
        d = normalize_sqrt(f)
        assert d.eval(1.0) == pytest.approx(0.5, abs=1e-12)

    def test_zero_function_rejected(self):
        f = PiecewiseSqrt((0.0, 1.0), (Constant(0.0), Constant(0.0), Constant(0.0)))
        with pytest.raises(DegenerateInputError):
            normalize_sqrt(f)

    def test_projection_bound_random(self):
        # h(t, (f/||f||)^2) <= ||sqrt(t) - f|| for arbitrary nonnegative f
        rng = np.random.default_rng(5)
        grid = np.linspace(-0.5, 3.5, 100_001)
        mids = 0.5 * (grid[:-1] + grid[1:])
        dx = grid[1] - grid[0]
        for _ in range(25):
            t = random_histogram(rng)
            raw = random_histogram(rng)
            f = PiecewiseSqrt(raw.knots, raw.forms)
            u = normalize_sqrt(f)
            dist2 = float(np.sum((t.sqrt_array(mids) - f.values(mids)) ** 2) * dx)
            assert hellinger2(t, u) <= dist2 + 1e-6


class TestMixture:
    def test_self_mixture(self):
        t = PiecewiseDensity.from_histogram((0.0, 0.5, 1.0), (1.5, 0.5))
        m = mixture_half(t, t)
        xs = np.linspace(0.01, 0.99, 37)
        assert np.allclose(m.eval_array(xs), t.eval_array(xs), atol=1e-12)

    def test_pointwise_average(self):
        m = mixture_half(uniform(0, 1), uniform(0, 2))
        assert m.eval(0.5) == pytest.approx(0.75, abs=1e-12)
        assert m.eval(1.5) == pytest.approx(0.25, abs=1e-12)

    def test_joined_partition(self):
        a = PiecewiseDensity.from_histogram((0.0, 1.0), (1.0,))
        b = PiecewiseDensity.from_histogram((0.5, 2.0), (1.0 / 1.5,))
        assert mixture_half(a, b).knots == (0.0, 0.5, 1.0, 2.0)


class TestSampling:
    def test_uniform_inverse_is_identity(self):
        xs = inverse_cdf(uniform(0, 1), np.asarray([0.25]))
        assert xs[0] == pytest.approx(0.25, abs=1e-12)

    def test_histogram_inverse_matches_cdf(self):
        d = PiecewiseDensity.from_histogram((0.0, 1.0, 3.0), (0.5, 0.25))
        xs = inverse_cdf(d, np.asarray([0.75]))
        assert xs[0] == pytest.approx(2.0, abs=1e-9)

    def test_sqrt_affine_inverse_bisection(self):
        r3 = math.sqrt(3.0)
        d = PiecewiseDensity.build((0.0, 1.0),
                                   (Constant(0.0), SqrtAffine(r3, -r3), Constant(0.0)))
        # CDF(x) = 1 - (1-x)^3, so u = 0.875 inverts to x = 0.5
        xs = inverse_cdf(d, np.asarray([0.875]))
        assert xs[0] == pytest.approx(0.5, abs=1e-9)

    def test_determinism(self):
        d = PiecewiseDensity.from_histogram((0.0, 1.0, 3.0), (0.5, 0.25))
        s1 = sample(d, 100, seed=7)
        s2 = sample(d, 100, seed=7)
        assert np.array_equal(s1.values, s2.values)

    def test_small_sample_rejected(self):
        with pytest.raises(InputError):
            sample(uniform(0, 1), 2, seed=0)
        with pytest.raises(InputError):
            Sample(np.asarray([1.0, 2.0]))

    def test_laplace_tail_inversion(self):
        lap = PiecewiseDensity.build(
            (0.0,), (ExpAffine(math.log(0.5), 1.0), ExpAffine(math.log(0.5), -1.0)))
        xs = inverse_cdf(lap, np.asarray([0.25, 0.5, 0.75]))
        assert xs[0] == pytest.approx(math.log(0.5), abs=1e-12)
        assert xs[1] == pytest.approx(0.0, abs=1e-12)
        assert xs[2] == pytest.approx(-math.log(0.5), abs=1e-12)


class TestJson:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            d = random_histogram(rng)
            back = PiecewiseDensity.loads(d.dumps())
            assert back.knots == d.knots
            assert all(f1 == f2 for f1, f2 in zip(back.forms, d.forms))

    def test_all_forms_serialize(self):
        r3 = math.sqrt(3.0)
        d = PiecewiseDensity.build(
            (0.0, 1.0, 2.0),
            (Constant(0.0), SqrtAffine(r3, -r3), ExpAffine(-1.0, 0.0), Constant(0.0)))
        back = PiecewiseDensity.loads(d.dumps())
        xs = np.linspace(0.01, 1.99, 53)
        assert np.array_equal(back.eval_array(xs), d.eval_array(xs))

    def test_malformed_segments_named(self):
        with pytest.raises(InputError, match=r"segments\[1\]"):
            PiecewiseDensity.from_json(
                {"knots": [0.0, 1.0],
                 "segments": [{"form": "constant", "params": [0.0]},
                              {"form": "nope", "params": [1.0]},
                              {"form": "constant", "params": [0.0]}]})

    def test_mixture_not_serializable(self):
        m = mixture_half(uniform(0, 1), PiecewiseDensity.build(
            (0.0, 1.0), (Constant(0.0), SqrtAffine(math.sqrt(3), -math.sqrt(3)), Constant(0.0))))
        with pytest.raises(InputError):
            m.to_json()


class TestConstruction:
    def test_rescales_to_unit_mass(self):
        d = PiecewiseDensity.from_histogram((0.0, 1.0), (2.5,))
        assert abs(d.total_mass - 1.0) <= 1e-9
        assert d.eval(0.5) == pytest.approx(1.0, abs=1e-12)

    def test_infinite_mass_rejected(self):
        with pytest.raises(InputError):
            PiecewiseDensity.build((0.0,), (Constant(0.0), Constant(1.0)))
        with pytest.raises(InputError):
            PiecewiseDensity.build((0.0,), (Constant(0.0), ExpAffine(0.0, 1.0)))

    def test_zero_mass_rejected(self):
        with pytest.raises(DegenerateInputError):
            PiecewiseDensity.build((0.0, 1.0), (Constant(0.0), Constant(0.0), Constant(0.0)))
