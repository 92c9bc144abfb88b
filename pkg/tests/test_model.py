import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sparsedyn.data import Dataset, Grid, TrajectoryCollection, split_train_test
from sparsedyn.diff import FiniteDifference
from sparsedyn.errors import DataError, SpecError
from sparsedyn.library import Concat, PDE, Polynomial
from sparsedyn.model import (
    FittedModel,
    equations,
    fit,
    fit_implicit,
    parse_equation,
    predict,
    score,
    simulate,
)
from sparsedyn.optimize import Coefficients, STLSQ

FD4 = FiniteDifference(order=4)


def rotation_dataset(T=2000, t_max=10.0, analytic_derivs=False):
    """dq0/dt = -q1, dq1/dt = q0 integrated by a high-accuracy RK oracle."""
    t = np.linspace(0.0, t_max, T)
    sol = solve_ivp(
        lambda _, q: [-q[1], q[0]],
        (0.0, t_max),
        [1.0, 0.0],
        t_eval=t,
        method="DOP853",
        rtol=1e-12,
        atol=1e-12,
    )
    states = sol.y.T
    derivs = np.column_stack([-states[:, 1], states[:, 0]]) if analytic_derivs else None
    return Dataset(grid=Grid(t), states=states, derivatives=derivs)


def make_model(xi, names, targets, library=None):
    library = library or Polynomial(1)
    return FittedModel(
        coefficients=Coefficients(
            xi=xi, support=xi != 0.0, names=names, residuals=np.zeros(len(targets))
        ),
        library=library,
        diff=FD4,
        target_names=targets,
    )


class TestFit:
    def test_linear_system_recovery(self):
        ds = rotation_dataset()
        m = fit(ds, Polynomial(1), diff=FD4, opt=STLSQ(threshold=0.05, ridge=0.0))
        names = m.feature_names
        xi = m.xi
        expected = np.zeros_like(xi)
        expected[names.index("q1"), 0] = -1.0
        expected[names.index("q0"), 1] = 1.0
        np.testing.assert_array_equal(m.coefficients.support, expected != 0.0)
        assert np.abs(xi - expected).max() < 1e-4

    def test_split_trajectories_match_full_fit_with_precomputed_derivs(self):
        ds = rotation_dataset(analytic_derivs=True)
        first, second = split_train_test(ds, 0.5)
        full = fit(ds, Polynomial(1), diff=FD4, opt=STLSQ(ridge=0.0))
        halves = fit(
            TrajectoryCollection((first, second)),
            Polynomial(1),
            diff=FD4,
            opt=STLSQ(ridge=0.0),
        )
        np.testing.assert_array_equal(full.xi, halves.xi)

    def test_trajectory_order_invariance(self):
        ds = rotation_dataset(analytic_derivs=True)
        first, second = split_train_test(ds, 0.5)
        ab = fit(TrajectoryCollection((first, second)), Polynomial(1), FD4, STLSQ())
        ba = fit(TrajectoryCollection((second, first)), Polynomial(1), FD4, STLSQ())
        np.testing.assert_allclose(ab.xi, ba.xi, atol=1e-10)

    def test_controls_join_library_inputs(self):
        # dq/dt = -q + 2 u with u = sin(t)
        t = np.linspace(0.0, 20.0, 4000)
        u = np.sin(t)

        def rhs(tt, q):
            return [-q[0] + 2.0 * np.interp(tt, t, u)]

        sol = solve_ivp(rhs, (0, 20), [1.0], t_eval=t, rtol=1e-10, atol=1e-12)
        ds = Dataset(grid=Grid(t), states=sol.y.T, controls=u[:, None])
        m = fit(ds, Polynomial(1), diff=FD4, opt=STLSQ(threshold=0.05, ridge=0.0))
        terms = dict(zip(m.feature_names, m.xi[:, 0]))
        assert abs(terms["q0"] + 1.0) < 1e-3
        assert abs(terms["u0"] - 2.0) < 1e-3


class TestPredictScore:
    def test_zero_model_predicts_zero(self):
        ds = rotation_dataset(T=50, t_max=1.0)
        m = make_model(np.zeros((3, 2)), ("1", "q0", "q1"), ("q0_t", "q1_t"))
        np.testing.assert_array_equal(predict(m, ds), np.zeros((50, 2)))

    def test_training_residual_consistency(self):
        ds = rotation_dataset()
        m = fit(ds, Polynomial(1), diff=FD4, opt=STLSQ(ridge=0.0))
        pred = predict(m, ds)
        derivs = np.asarray(
            [
                np.gradient(ds.states[:, j], ds.grid.time_axis)
                for j in range(2)
            ]
        ).T
        # the stored residual equals the one recomputed from predict exactly
        from sparsedyn.diff import differentiate_dataset

        targets = differentiate_dataset(ds, FD4, "t")
        recomputed = np.linalg.norm(targets - pred, axis=0)
        np.testing.assert_array_equal(recomputed, m.coefficients.residuals)

    def test_prediction_accuracy_on_training_data(self):
        ds = rotation_dataset()
        m = fit(ds, Polynomial(1), diff=FD4, opt=STLSQ(ridge=0.0))
        from sparsedyn.diff import differentiate_dataset

        targets = differentiate_dataset(ds, FD4, "t")
        rms = np.sqrt(np.mean((predict(m, ds) - targets) ** 2))
        assert rms < 1e-4

    def test_perfect_prediction_scores_one(self):
        ds = rotation_dataset(T=200, t_max=5.0, analytic_derivs=True)
        names = ("1", "q0", "q1")
        xi = np.zeros((3, 2))
        xi[names.index("q1"), 0] = -1.0
        xi[names.index("q0"), 1] = 1.0
        m = make_model(xi, names, ("q0_t", "q1_t"))
        assert score(m, ds, "r2") == pytest.approx(1.0, abs=1e-12)

    def test_zero_model_on_zero_mean_targets_scores_zero(self):
        t = np.linspace(0, 1, 100)
        derivs = np.concatenate([np.ones(50), -np.ones(50)])[:, None]
        ds = Dataset(grid=Grid(t), states=np.zeros((100, 1)), derivatives=derivs)
        m = make_model(np.zeros((2, 1)), ("1", "q0"), ("q0_t",))
        assert score(m, ds, "r2") == 0.0

    def test_rmse_of_constant_offset(self):
        t = np.linspace(0, 1, 100)
        ds = Dataset(
            grid=Grid(t),
            states=np.zeros((100, 1)),
            derivatives=np.zeros((100, 1)),
        )
        c = 0.75
        m = make_model(np.array([[c]]), ("1",), ("q0_t",), library=Polynomial(0))
        assert score(m, ds, "rmse") == pytest.approx(c, abs=1e-14)

    def test_constant_target_r2_is_error(self):
        t = np.linspace(0, 1, 50)
        ds = Dataset(
            grid=Grid(t), states=np.zeros((50, 1)), derivatives=np.ones((50, 1))
        )
        m = make_model(np.zeros((1, 1)), ("1",), ("q0_t",), library=Polynomial(0))
        with pytest.raises(DataError):
            score(m, ds, "r2")


class TestSimulate:
    def test_zero_rhs_is_constant(self):
        m = make_model(np.zeros((2, 1)), ("1", "q0"), ("q0_t",))
        res = simulate(m, [2.5], np.linspace(0, 3, 20))
        np.testing.assert_allclose(res.states, 2.5, atol=1e-9)
        assert not res.blew_up

    def test_exponential_growth(self):
        xi = np.array([[0.0], [1.0]])  # dq/dt = q
        m = make_model(xi, ("1", "q0"), ("q0_t",))
        res = simulate(m, [1.0], np.linspace(0, 1, 11))
        assert abs(res.states[-1, 0] - np.e) < 1e-6

    def test_monotone_sign_preservation(self):
        xi = np.array([[0.0], [1.0]])
        m = make_model(xi, ("1", "q0"), ("q0_t",))
        res = simulate(m, [0.5], np.linspace(0, 2, 50))
        assert np.all(res.states > 0)
        assert np.all(np.diff(res.states[:, 0]) > 0)

    def test_blow_up_truncates(self):
        # dq/dt = q^2 from q(0)=2 blows up at t=0.5
        names = ("1", "q0", "q0^2")
        xi = np.array([[0.0], [0.0], [1.0]])
        m = make_model(xi, names, ("q0_t",), library=Polynomial(2))
        res = simulate(m, [2.0], np.linspace(0, 1, 101))
        assert res.blew_up
        assert res.t[-1] < 1.0

    def test_controls_interpolated(self):
        # dq/dt = u with u = t -> q(t) = q0 + t^2/2
        names = ("1", "q0", "u0")
        xi = np.array([[0.0], [0.0], [1.0]])
        m = make_model(xi, names, ("q0_t",))
        t = np.linspace(0, 2, 41)
        res = simulate(m, [0.0], t, controls=t[:, None])
        np.testing.assert_allclose(res.states[:, 0], t**2 / 2, atol=1e-7)

    def test_derivative_library_rejected(self):
        m = make_model(
            np.zeros((1, 1)), ("q0_x",), ("q0_t",), library=PDE(1, ("x",))
        )
        with pytest.raises(SpecError):
            simulate(m, [1.0], np.linspace(0, 1, 5))

    def test_fitted_lorenz_short_horizon(self):
        # the discovered model's trajectory stays within 1e-2 RMS of the
        # generating system's over one time unit
        from sparsedyn.systems import BenchmarkSpec, Lorenz, canonical_library, generate

        system = Lorenz()
        dataset, _ = generate(BenchmarkSpec(system=system))
        model = fit(dataset, canonical_library(system), diff=FD4,
                    opt=STLSQ(ridge=0.0))
        t_eval = np.linspace(0.0, 1.0, 201)
        sim = simulate(model, system.initial_state, t_eval)
        ref = solve_ivp(
            lambda _, q: [
                system.sigma * (q[1] - q[0]),
                q[0] * (system.rho - q[2]) - q[1],
                q[0] * q[1] - system.beta * q[2],
            ],
            (0.0, 1.0),
            system.initial_state,
            t_eval=t_eval,
            method="RK45",
            rtol=1e-8,
            atol=1e-10,
        )
        rms = np.sqrt(np.mean((sim.states - ref.y.T) ** 2))
        assert rms <= 1e-2


class TestImplicit:
    def test_disguised_explicit_system(self):
        ds = rotation_dataset(analytic_derivs=True)
        library = Concat((PDE(1, ("t",)), Polynomial(2)))
        results = fit_implicit(
            ds,
            library,
            STLSQ(threshold=0.05, ridge=0.0),
            candidate_lhs=["q0_t", "q1_t"],
            diff=FD4,
        )
        best = results[0]
        assert best.lhs_name in ("q0_t", "q1_t")
        assert best.residual <= 1e-6
        # the winning regression recovers the rotation row
        terms = dict(
            zip(best.model.feature_names, best.model.xi[:, 0])
        )
        partner = "q1" if best.lhs_name == "q0_t" else "q0"
        assert abs(abs(terms[partner]) - 1.0) < 1e-3

    def test_duplicated_column_is_excluded_and_flagged(self):
        # q1 == 2 q0 makes the columns q0 and q1 proportional but distinct;
        # an exact duplicate arises from tensoring with the bias column
        t = np.linspace(0, 5, 400)
        states = np.column_stack([np.sin(t), np.cos(t)])
        ds = Dataset(grid=Grid(t), states=states)
        from sparsedyn.library import Tensor

        library = Concat((Polynomial(1), Tensor(Polynomial(0), Polynomial(1, include_bias=False))))
        results = fit_implicit(
            ds, library, STLSQ(threshold=0.0, ridge=0.0), candidate_lhs=["q0"]
        )
        res = results[0]
        # "1 q0" duplicates the candidate "q0" exactly and must not be used
        i = res.model.feature_names.index("1 q0")
        assert res.model.xi[i, 0] == 0.0

    def test_degenerate_flag_on_zero_residual(self):
        t = np.linspace(0, 5, 200)
        ds = Dataset(grid=Grid(t), states=np.column_stack([np.sin(t), 2 * np.sin(t)]))
        results = fit_implicit(
            ds,
            Polynomial(1),
            STLSQ(threshold=0.0, ridge=0.0),
            candidate_lhs=["q0"],
        )
        assert results[0].degenerate  # q1 = 2 q0 explains q0 exactly

    def test_unknown_candidate(self):
        ds = rotation_dataset(T=50, t_max=1.0)
        with pytest.raises(SpecError):
            fit_implicit(ds, Polynomial(1), STLSQ(), candidate_lhs=["nope"])

    def test_ranking_invariant_to_rescaling_non_candidate_columns(self):
        rng = np.random.default_rng(8)
        t = np.linspace(0, 5, 300)
        states = np.column_stack([np.sin(t), np.cos(t), np.sin(2 * t)])
        ds = Dataset(grid=Grid(t), states=states)

        def ranking(scale):
            scaled = Dataset(grid=ds.grid, states=ds.states * scale)
            res = fit_implicit(
                scaled,
                Polynomial(1, include_bias=False),
                STLSQ(threshold=0.0, ridge=0.0),
                candidate_lhs=["q0"],
            )
            return [r.lhs_name for r in res], res[0].residual

        base_rank, base_res = ranking(np.array([1.0, 1.0, 1.0]))
        scaled_rank, scaled_res = ranking(np.array([1.0, 7.0, 0.2]))
        assert base_rank == scaled_rank
        assert scaled_res == pytest.approx(base_res, rel=1e-8)


class TestEquations:
    def test_zero_row(self):
        m = make_model(np.zeros((2, 1)), ("1", "q0"), ("q0_t",))
        assert equations(m) == ["q0_t = 0"]

    def test_precision_rounding(self):
        xi = np.array([[0.987], [0.0]])
        m = make_model(xi, ("q0", "q1"), ("q0_t",))
        assert equations(m, precision=2) == ["q0_t = 0.99 q0"]

    def test_terms_ordered_by_column(self):
        names = ("a", "b c", "d")
        xi = np.array([[1.5], [-2.0], [0.25]])
        m = make_model(xi, names, ("q0_t",))
        assert equations(m, precision=3) == ["q0_t = 1.5 a + -2.0 b c + 0.25 d"]

    def test_round_trip(self):
        names = ("q0", "q0 q0_x", "q0_xx")
        xi = np.array([[0.0], [-0.98], [-1.0]])
        m = make_model(xi, names, ("q0_t",))
        line = equations(m, precision=2)[0]
        target, terms = parse_equation(line)
        assert target == "q0_t"
        assert terms == {"q0 q0_x": -0.98, "q0_xx": -1.0}
