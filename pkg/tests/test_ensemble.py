import numpy as np
import pytest

from sparsedyn.ensemble import (
    EnsembleSpec,
    aggregate_members,
    derive_seed,
    fit_ensemble,
)
from sparsedyn.errors import FitError, SpecError
from sparsedyn.optimize import FROLS, STLSQ, Problem, solve


def planted_problem(seed=123, noise=0.0):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((200, 10))
    xi_true = np.zeros(10)
    xi_true[1], xi_true[3] = 2.0, -1.5
    y = theta @ xi_true
    if noise:
        y = y + noise * rng.standard_normal(200)
    return Problem(theta=theta, targets=y), xi_true


class TestSeedDerivation:
    def test_distinct_and_deterministic(self):
        seeds = [derive_seed(7, i) for i in range(100)]
        assert len(set(seeds)) == 100
        assert seeds == [derive_seed(7, i) for i in range(100)]


class TestAggregation:
    def test_median_definition(self):
        stack = np.array([1.0, 1.1, 5.0]).reshape(3, 1, 1)
        xi, inclusion, iqr = aggregate_members(stack, EnsembleSpec(n_models=3))
        assert xi[0, 0] == 1.1
        assert inclusion[0, 0] == 1.0

    def test_mean_aggregator(self):
        stack = np.array([1.0, 2.0, 3.0]).reshape(3, 1, 1)
        xi, _, _ = aggregate_members(
            stack, EnsembleSpec(n_models=3, aggregator="mean")
        )
        assert xi[0, 0] == 2.0

    def test_below_threshold_zeroed(self):
        stack = np.array([0.0, 0.0, 5.0]).reshape(3, 1, 1)
        xi, inclusion, _ = aggregate_members(stack, EnsembleSpec(n_models=3))
        assert inclusion[0, 0] == pytest.approx(1.0 / 3.0)
        assert xi[0, 0] == 0.0


class TestFitEnsemble:
    def test_degenerate_ensemble_equals_plain_solve(self):
        prob, _ = planted_problem()
        spec = EnsembleSpec(n_models=5, row_fraction=1.0, replace=False, seed=1)
        report = fit_ensemble(prob, STLSQ(), spec)
        plain = solve(prob, STLSQ())
        for member in report.member_xi:
            np.testing.assert_array_equal(member, plain.xi)
        np.testing.assert_array_equal(report.coefficients.xi, plain.xi)
        assert set(np.unique(report.inclusion_probability)) <= {0.0, 1.0}

    def test_planted_problem_inclusion_probabilities(self):
        prob, _ = planted_problem(noise=0.05)
        spec = EnsembleSpec(n_models=50, seed=3)
        report = fit_ensemble(prob, STLSQ(), spec)
        incl = report.inclusion_probability[:, 0]
        assert incl[1] >= 0.9 and incl[3] >= 0.9
        others = np.delete(incl, [1, 3])
        assert others.max() <= 0.3

    def test_determinism(self):
        prob, _ = planted_problem(noise=0.02)
        spec = EnsembleSpec(n_models=12, seed=21)
        a = fit_ensemble(prob, STLSQ(), spec)
        b = fit_ensemble(prob, STLSQ(), spec)
        np.testing.assert_array_equal(a.member_xi, b.member_xi)
        np.testing.assert_array_equal(a.coefficients.xi, b.coefficients.xi)
        np.testing.assert_array_equal(a.inclusion_probability, b.inclusion_probability)
        np.testing.assert_array_equal(a.iqr, b.iqr)

    def test_library_dropping_keeps_indices_stable(self):
        prob, _ = planted_problem(noise=0.01)
        spec = EnsembleSpec(n_models=30, n_library_drop=3, seed=5)
        report = fit_ensemble(prob, STLSQ(), spec)
        assert report.member_xi.shape == (30, 10, 1)
        # a true feature is retained whenever it is not among the 3 dropped
        # columns, so inclusion sits near 0.7; spurious features stay rare
        incl = report.inclusion_probability[:, 0]
        assert incl[1] > 0.45 and incl[3] > 0.45
        # members that lose a true column push its signal into correlated
        # spurious columns, so the spurious ceiling is looser here than for
        # row-only subsampling
        assert np.delete(incl, [1, 3]).max() <= 0.4

    def test_too_many_drops_rejected(self):
        prob, _ = planted_problem()
        with pytest.raises(SpecError):
            fit_ensemble(prob, STLSQ(), EnsembleSpec(n_library_drop=10))

    def test_majority_failure_raises(self):
        prob, _ = planted_problem()
        # err_tol > 1 means FROLS never selects anything, failing every member
        with pytest.raises(FitError):
            fit_ensemble(prob, FROLS(err_tol=2.0), EnsembleSpec(n_models=4, seed=0))

    def test_small_row_fraction_warns(self):
        prob, _ = planted_problem()
        with pytest.warns(UserWarning):
            fit_ensemble(
                prob, STLSQ(), EnsembleSpec(n_models=2, row_fraction=0.04, seed=0)
            )

    def test_inclusion_is_exact_member_fraction(self):
        prob, _ = planted_problem(noise=0.3)
        spec = EnsembleSpec(n_models=16, seed=9)
        report = fit_ensemble(prob, STLSQ(), spec)
        counts = (report.member_xi != 0.0).sum(axis=0)
        np.testing.assert_array_equal(
            report.inclusion_probability, counts / report.member_xi.shape[0]
        )
