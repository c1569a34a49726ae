import math

import numpy as np
import pytest

from rhoest.density import PiecewiseDensity, sample
from rhoest.errors import DegenerateInputError, InputError, ShapeViolationError
from rhoest.models import (
    ShapeModel,
    build_candidates,
    extremal_degree,
    monotone_piece_count,
    pav_nonincreasing,
    rate_bound,
    validate_candidate,
)


def uniform_sample(n=300, seed=0):
    return sample(PiecewiseDensity.uniform(0, 1), n, seed)


class TestShapeModel:
    def test_parameter_validation(self):
        with pytest.raises(InputError):
            ShapeModel.histogram(0)
        with pytest.raises(InputError):
            ShapeModel.piecewise_monotone(1)
        with pytest.raises(InputError):
            ShapeModel("monotone", 3)
        with pytest.raises(InputError):
            ShapeModel("nope")

    def test_json_round_trip(self):
        for m in (ShapeModel.histogram(4), ShapeModel.monotone(),
                  ShapeModel.piecewise_monotone(3), ShapeModel.convex_concave(4),
                  ShapeModel.log_concave()):
            assert ShapeModel.from_json(m.to_json()) == m


class TestExtremalDegree:
    def test_reference_values(self):
        assert extremal_degree(ShapeModel.histogram(1), 1) == 8
        assert extremal_degree(ShapeModel.monotone(), 2) == 16
        assert extremal_degree(ShapeModel.log_concave(), 1) == 40
        assert extremal_degree(ShapeModel.piecewise_monotone(2), 1) == 12
        assert extremal_degree(ShapeModel.convex_concave(3), 2) == 72

    def test_monotone_in_degree(self):
        for m in (ShapeModel.histogram(2), ShapeModel.monotone(),
                  ShapeModel.piecewise_monotone(4), ShapeModel.convex_concave(3),
                  ShapeModel.log_concave()):
            degrees = [extremal_degree(m, D) for D in range(1, 12)]
            assert all(b >= a for a, b in zip(degrees, degrees[1:]))


class TestRateBound:
    def test_boundary_cases(self):
        assert rate_bound(10, 10) == 1.0
        n = math.e
        # log(n/d) = 1 exactly at the log_plus boundary
        assert rate_bound(1, 3) == pytest.approx((1 / 3) * math.log(3.0) ** 3, abs=1e-15)

    def test_arithmetic(self):
        n = 2.0 * math.e ** 2
        assert rate_bound(2, n) == pytest.approx(8.0 / math.e ** 2, abs=1e-12)

    def test_domain(self):
        with pytest.raises(InputError):
            rate_bound(0, 10)
        with pytest.raises(InputError):
            rate_bound(1, 2)


class TestPav:
    def test_hand_case(self):
        out = pav_nonincreasing([3.0, 1.0, 2.0], [1.0, 1.0, 1.0])
        assert out[0] == 3.0
        assert out[1] == out[2] == 1.5

    def test_idempotent_on_monotone(self):
        vals = [5.0, 4.0, 4.0, 1.0]
        assert np.array_equal(pav_nonincreasing(vals, [1, 2, 1, 1]), np.asarray(vals))

    def test_weighted_mean_preserved(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            v = rng.uniform(0, 2, size=8)
            w = rng.uniform(0.1, 2.0, size=8)
            out = pav_nonincreasing(v, w)
            assert np.all(np.diff(out) <= 1e-12)
            assert np.dot(out, w) == pytest.approx(np.dot(v, w), abs=1e-9)

    def test_least_squares_against_grid_search(self):
        # 3-block exhaustive oracle: all non-increasing step vectors on a value grid
        rng = np.random.default_rng(8)
        v = rng.uniform(0, 1, size=3)
        w = rng.uniform(0.5, 1.5, size=3)
        out = pav_nonincreasing(v, w)
        best = math.inf
        grid = np.linspace(0, 1, 41)
        for a in grid:
            for b in grid[grid <= a]:
                for c in grid[grid <= b]:
                    cost = w[0] * (v[0] - a) ** 2 + w[1] * (v[1] - b) ** 2 + w[2] * (v[2] - c) ** 2
                    best = min(best, cost)
        cost_out = float(np.dot(w, (v - out) ** 2))
        assert cost_out <= best + 1e-3


class TestMonotonePieceCount:
    def test_step_patterns(self):
        assert monotone_piece_count(np.asarray([0.0, 2.0, 1.0, 0.0])) == 2
        assert monotone_piece_count(np.asarray([0.0, 1.0, 2.0, 0.0])) == 2
        assert monotone_piece_count(np.asarray([0.0, 1.0, 0.5, 1.5, 0.0])) == 4
        assert monotone_piece_count(np.asarray([0.0, 0.0])) == 1


class TestBuildCandidates:
    def test_histogram_contains_range_uniform(self):
        s = uniform_sample()
        cs = build_candidates(s, ShapeModel.histogram(1), budget=8, seed=1)
        base = cs.densities[0]
        assert base.knots == (float(s.values[0]), float(s.values[-1]))
        assert cs.provenance[0] == "uniform[x(1),x(n)]"

    def test_all_candidates_validate(self):
        s = uniform_sample(400, seed=3)
        for m in (ShapeModel.histogram(4), ShapeModel.monotone(),
                  ShapeModel.piecewise_monotone(2), ShapeModel.piecewise_monotone(4),
                  ShapeModel.convex_concave(3), ShapeModel.log_concave()):
            cs = build_candidates(s, m, budget=30, seed=2)
            assert 1 <= len(cs) <= 30
            for d in cs.densities:
                validate_candidate(d, m)
                assert abs(d.total_mass - 1.0) <= 1e-9

    def test_monotone_heights_non_increasing(self):
        s = uniform_sample(200, seed=5)
        cs = build_candidates(s, ShapeModel.piecewise_monotone(2), budget=20, seed=4)
        for d in cs.densities:
            validate_candidate(d, ShapeModel.piecewise_monotone(2))

    def test_determinism(self):
        s = uniform_sample(150, seed=6)
        a = build_candidates(s, ShapeModel.histogram(3), budget=64, seed=7)
        b = build_candidates(s, ShapeModel.histogram(3), budget=64, seed=7)
        assert a.provenance == b.provenance
        assert all(x.knots == y.knots and x.forms == y.forms
                   for x, y in zip(a.densities, b.densities))

    def test_budget_validation(self):
        s = uniform_sample()
        with pytest.raises(InputError):
            build_candidates(s, ShapeModel.histogram(1), budget=1, seed=0)

    def test_degenerate_sample(self):
        from rhoest.density import Sample

        s = Sample(np.asarray([1.0, 1.0, 1.0]))
        with pytest.raises(DegenerateInputError):
            build_candidates(s, ShapeModel.histogram(1), budget=8, seed=0)


class TestValidators:
    def test_monotone_rejects_increase(self):
        d = PiecewiseDensity.from_histogram((0.0, 0.5, 1.0), (0.5, 1.5))
        with pytest.raises(ShapeViolationError):
            validate_candidate(d, ShapeModel.monotone())

    def test_histogram_rejects_too_many_blocks(self):
        d = PiecewiseDensity.from_histogram((0.0, 0.4, 0.8, 1.2), (0.5, 1.5, 0.7))
        with pytest.raises(ShapeViolationError):
            validate_candidate(d, ShapeModel.histogram(2))

    def test_piecewise_monotone_counts_runs(self):
        zigzag = PiecewiseDensity.from_histogram(
            (0.0, 0.25, 0.5, 0.75, 1.0), (1.0, 2.0, 0.5, 1.5))
        with pytest.raises(ShapeViolationError):
            validate_candidate(zigzag, ShapeModel.piecewise_monotone(3))
        validate_candidate(zigzag, ShapeModel.piecewise_monotone(4))

    def test_log_concave_rejects_increasing_slopes(self):
        from rhoest.density import ExpAffine, Constant

        d = PiecewiseDensity.build(
            (0.0, 1.0, 2.0),
            (Constant(0.0), ExpAffine(-1.0, -1.0), ExpAffine(-3.0, 1.0), Constant(0.0)))
        with pytest.raises(ShapeViolationError):
            validate_candidate(d, ShapeModel.log_concave())
