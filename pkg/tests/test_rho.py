import math

import numpy as np
import pytest

from rhoest.density import Constant, PiecewiseDensity, hellinger2, sample
from rhoest.errors import BudgetError, InputError
from rhoest.rho import RhoConfig, psi, rho_estimate, sqrt_ratio, t_statistic, upsilon

from .test_density import random_histogram


def uniform(a, b):
    return PiecewiseDensity.uniform(a, b)


class TestPsi:
    def test_anchor_values(self):
        assert psi(1.0) == 0.0
        assert psi(0.0) == -1.0
        assert psi(math.inf) == 1.0

    def test_value_at_two(self):
        assert psi(2.0) == pytest.approx(1.0 / math.sqrt(5.0), abs=1e-15)

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(1)
        u = np.sort(rng.uniform(0.0, 1e6, size=10_000))
        vals = psi(u)
        assert np.all(np.diff(vals) > 0)
        assert np.all((-1.0 <= vals) & (vals <= 1.0))

    def test_inversion_antisymmetry(self):
        rng = np.random.default_rng(2)
        u = rng.uniform(1e-6, 1e6, size=10_000)
        assert np.max(np.abs(psi(u) + psi(1.0 / u))) <= 1e-12
        assert psi(0.0) + psi(math.inf) == 0.0

    def test_domain(self):
        with pytest.raises(InputError):
            psi(-0.5)
        with pytest.raises(InputError):
            psi(math.nan)


class TestSqrtRatio:
    def test_conventions(self):
        u1, u2 = uniform(0, 1), uniform(0, 2)
        # both zero -> 1, positive/zero -> +inf
        assert sqrt_ratio(u1, u2, -5.0) == 1.0
        assert sqrt_ratio(u2, u1, 1.5) == math.inf
        assert sqrt_ratio(u1, u2, 0.5) == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert sqrt_ratio(uniform(0, 4), u1, 0.5) == 0.5


class TestTStatistic:
    def test_self_comparison_is_zero(self):
        t = uniform(0, 1)
        assert t_statistic([0.25, 0.5, 0.75], t, t) == pytest.approx(0.0, abs=1e-12)

    def test_single_point_oracle(self):
        # hand-computed mixture affinities for U(0,1) vs U(0,2) at x = 0.5
        t, tp = uniform(0, 1), uniform(0, 2)
        h_t = 1.0 - math.sqrt(3.0) / 2.0
        h_tp = 1.0 - (math.sqrt(3.0) + 1.0) / (2.0 * math.sqrt(2.0))
        expected = 0.5 * (h_t - h_tp) + psi(math.sqrt(0.5)) / math.sqrt(2.0)
        assert t_statistic([0.5], t, tp) == pytest.approx(expected, abs=1e-12)

    def test_antisymmetry_random(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            t, tp = random_histogram(rng), random_histogram(rng)
            s = sample(t, 50, seed=int(rng.integers(1 << 31)))
            fwd = t_statistic(s, t, tp)
            bwd = t_statistic(s, tp, t)
            assert abs(fwd + bwd) <= 1e-8 * s.n


class TestUpsilon:
    def test_singleton(self):
        t = uniform(0, 1)
        assert upsilon([0.1, 0.5, 0.9], [t], t) == pytest.approx(0.0, abs=1e-12)

    def test_membership_lower_bound(self):
        rng = np.random.default_rng(9)
        t, tp = random_histogram(rng), random_histogram(rng)
        s = sample(t, 40, seed=1)
        assert upsilon(s, [t, tp], t) >= -1e-12

    def test_two_candidate_enumeration(self):
        t, tp = uniform(0, 1), uniform(0, 2)
        s = sample(t, 30, seed=2)
        expected = max(0.0, t_statistic(s, t, tp))
        assert upsilon(s, [t, tp], t) == pytest.approx(expected, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            upsilon([0.5, 0.6, 0.7], [], uniform(0, 1))


class TestRhoEstimate:
    def test_single_candidate(self):
        t = uniform(0, 1)
        s = sample(t, 20, seed=3)
        best, diag = rho_estimate(s, [t])
        assert best is t
        assert diag.upsilon_values[0] == pytest.approx(0.0, abs=1e-12)

    def test_truth_wins_majority(self):
        truth = uniform(0, 1)
        rivals = [uniform(0, 2), uniform(-1, 1), uniform(0.25, 1), uniform(0, 0.75)]
        wins = 0
        for rep in range(50):
            s = sample(truth, 1000, seed=100 + rep)
            _, diag = rho_estimate(s, [truth] + rivals)
            wins += diag.argmin_index == 0
        assert wins > 25

    def test_contamination_picks_bulk_not_max(self):
        s0 = PiecewiseDensity.from_histogram((0.0, 1.0, 9.0, 10.0), (0.99, 0.0, 0.01))
        thetas = np.concatenate([np.linspace(0.2, 2.0, 19), [5.0, 8.0, 9.5, 10.0]])
        cands = [PiecewiseDensity.build((0.0, th), (Constant(0.0), Constant(1.0 / th),
                                                    Constant(0.0))) for th in thetas]
        near_one = 0
        for rep in range(20):
            s = sample(s0, 200, seed=500 + rep)
            best, _ = rho_estimate(s, cands)
            theta = best.knots[-1]
            near_one += abs(theta - 1.0) <= 0.25
            assert theta < 9.0  # never the contaminated max-support choice
        assert near_one >= 15

    def test_sample_permutation_invariance(self):
        rng = np.random.default_rng(12)
        cands = [random_histogram(rng) for _ in range(5)]
        s = sample(cands[0], 60, seed=8)
        shuffled = np.array(s.values, copy=True)
        np.random.default_rng(0).shuffle(shuffled)
        _, d1 = rho_estimate(s.values, cands)
        _, d2 = rho_estimate(shuffled, cands)
        assert np.allclose(d1.upsilon_values, d2.upsilon_values, atol=1e-12)

    def test_candidate_reorder_keeps_min_value(self):
        rng = np.random.default_rng(13)
        cands = [random_histogram(rng) for _ in range(6)]
        s = sample(cands[0], 60, seed=9)
        _, d1 = rho_estimate(s, cands)
        _, d2 = rho_estimate(s, cands[::-1])
        assert min(d1.upsilon_values) == pytest.approx(min(d2.upsilon_values), abs=1e-9)

    def test_near_minimizer_set(self):
        rng = np.random.default_rng(14)
        cands = [random_histogram(rng) for _ in range(6)]
        s = sample(cands[0], 60, seed=10)
        _, d_small = rho_estimate(s, cands, RhoConfig(kappa=1.0))
        _, d_big = rho_estimate(s, cands, RhoConfig(kappa=200.0))
        assert d_small.argmin_index in d_small.near_minimizer_indices
        assert set(d_small.near_minimizer_indices) <= set(d_big.near_minimizer_indices)

    def test_budget_refusal(self):
        rng = np.random.default_rng(15)
        cands = [random_histogram(rng) for _ in range(5)]
        s = sample(cands[0], 30, seed=11)
        with pytest.raises(BudgetError):
            rho_estimate(s, cands, RhoConfig(candidate_budget=3))

    def test_fast_path_matches_general(self):
        from rhoest.rho import _t_matrix_constant, _t_matrix_general
        from rhoest._quad import QuadSettings

        rng = np.random.default_rng(16)
        cands = [random_histogram(rng) for _ in range(5)]
        x = sample(cands[0], 40, seed=12).values
        fast = _t_matrix_constant(x, cands)
        slow = _t_matrix_general(x, cands, QuadSettings())
        assert np.max(np.abs(fast - slow)) <= 1e-9 * x.size

    def test_diagnostics_export(self):
        rng = np.random.default_rng(17)
        cands = [random_histogram(rng) for _ in range(4)]
        s = sample(cands[0], 30, seed=13)
        _, diag = rho_estimate(s, cands)
        blob = diag.to_json()
        assert blob["argmin"] in blob["near_minimizers"]
        csv_text = diag.pairwise_csv()
        assert len(csv_text.splitlines()) == 4
