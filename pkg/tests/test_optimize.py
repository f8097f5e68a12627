import numpy as np
import pytest

from pde4dvar import (
    ConfigError,
    Nonlinearity,
    OptimConfig,
    ScaleError,
    build_grid,
    constraint_gradient,
    constraint_value,
    evaluate_gradient,
    inner_product,
    kkt_check,
    l2_norm,
    lp_integral,
    optimize,
    project_to_ball,
    quadratic_growth_probe,
    recover_multiplier,
    sample_cone_directions,
    ssc_check,
)
from pde4dvar.assimilation import ConstraintSpec

from oracles import make_problem


class TestProjection:
    def test_feasible_input_untouched(self):
        grid = build_grid(1, 10)
        spec = ConstraintSpec(radius=100.0, beta=6.5)
        u = np.linspace(-1, 1, 10)
        assert np.array_equal(project_to_ball(spec, grid, u), u)

    def test_infeasible_lands_just_inside(self):
        grid = build_grid(1, 10)
        spec = ConstraintSpec(radius=0.01, beta=6.5)
        u = 5.0 * np.ones(10)
        v = project_to_ball(spec, grid, u)
        slack = constraint_value(spec, grid, v)
        assert 0.0 <= slack <= 1e-12 * spec.radius
        # direction preserved: pure scaling
        assert np.allclose(v / v[0], u / u[0], rtol=1e-14)

    def test_idempotent(self):
        grid = build_grid(1, 10)
        spec = ConstraintSpec(radius=0.5, beta=6.5)
        u = 3.0 * np.sin(np.arange(10))
        once = project_to_ball(spec, grid, u)
        twice = project_to_ball(spec, grid, once)
        assert np.array_equal(once, twice)


class TestOptimConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            OptimConfig(max_iters=0)
        with pytest.raises(ConfigError):
            OptimConfig(armijo_c1=1.0)
        with pytest.raises(ConfigError):
            OptimConfig(armijo_shrink=0.0)
        with pytest.raises(ConfigError):
            OptimConfig(init_step=-1.0)
        with pytest.raises(ConfigError):
            OptimConfig(kkt_tol=0.0)


class TestOptimize:
    def test_convex_recovery_from_zero_start(self):
        # Noiseless linear data, background at the truth: the optimum is
        # the truth itself and the iteration must find it.
        prob, truth = make_problem(n=16, n_steps=20, stride=2)
        prob2, _ = make_problem(n=16, n_steps=20, stride=2, background=truth)
        config = OptimConfig(max_iters=300, kkt_tol=1e-10)
        u, history = optimize(prob2, config, np.zeros(16))
        assert history.converged
        assert history.reason == "kkt_tolerance"
        assert l2_norm(prob2.grid, u - truth) <= 1e-6 * l2_norm(prob2.grid, truth)

    def test_cost_non_increasing_and_feasible(self):
        prob, _ = make_problem(nonlinearity=Nonlinearity.eps_sin(0.2), radius=0.5)
        config = OptimConfig(max_iters=60, kkt_tol=1e-12)
        rng = np.random.default_rng(0)
        u, history = optimize(prob, config, rng.standard_normal(prob.grid.node_count))
        costs = history.cost
        assert all(b <= a + 1e-15 for a, b in zip(costs, costs[1:]))
        assert all(
            s >= -1e-12 * prob.constraint.radius for s in history.slack
        )

    def test_forced_active_constraint(self):
        prob, truth = make_problem(n=14, n_steps=16, radius=1e-4)
        config = OptimConfig(max_iters=150, kkt_tol=1e-10)
        u, history = optimize(prob, config, np.zeros(14))
        b = prob.constraint.radius
        report = kkt_check(prob, u)
        assert report.active
        assert report.multiplier > 0.0
        assert 0.0 <= report.feasibility <= 1e-8 * b
        assert abs(report.complementarity) <= 1e-10 * (1.0 + b)

    def test_deterministic(self):
        prob, _ = make_problem(nonlinearity=Nonlinearity.eps_sin(0.1))
        config = OptimConfig(max_iters=40)
        a, ha = optimize(prob, config, np.zeros(prob.grid.node_count))
        b, hb = optimize(prob, config, np.zeros(prob.grid.node_count))
        assert np.array_equal(a, b)
        assert ha.rows() == hb.rows()

    def test_history_rows_aligned(self):
        prob, _ = make_problem()
        _, history = optimize(prob, OptimConfig(max_iters=10), np.zeros(12))
        rows = history.rows()
        assert len(rows) == len(history.iterations)
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)


def manufactured_active_point(lam0, n=14, beta=6.5):
    """Problem with a known KKT point: zero residuals, background shifted
    by lam0 times the constraint gradient, radius exactly at activity."""
    grid = build_grid(1, n)
    x = grid.all_coordinates()[:, 0]
    u = 0.9 * np.sin(np.pi * x) + 0.2 * np.sin(2 * np.pi * x)
    lp = lp_integral(grid, u, beta)
    spec = ConstraintSpec(radius=lp, beta=beta)
    rep = constraint_gradient(spec, grid, u)
    background = u - lam0 * rep
    prob, _ = make_problem(
        n=n, truth=u, background=background, radius=lp, beta=beta
    )
    return prob, u, rep


class TestMultiplierRecovery:
    def test_inactive_point_gives_zero(self):
        prob, _ = make_problem(radius=100.0)
        assert recover_multiplier(prob, np.ones(12) * 0.1) == 0.0

    def test_manufactured_values_recovered(self):
        for lam0 in (0.1, 1.0, 10.0):
            prob, u, rep = manufactured_active_point(lam0)
            assert recover_multiplier(prob, u) == pytest.approx(lam0, abs=1e-10)

    def test_consistent_with_supplied_gradient(self):
        prob, u, _ = manufactured_active_point(0.5)
        g = evaluate_gradient(prob, u)
        assert recover_multiplier(prob, u) == recover_multiplier(prob, u, gradient=g)

    def test_kkt_report_at_manufactured_point(self):
        prob, u, rep = manufactured_active_point(2.0)
        report = kkt_check(prob, u)
        assert report.active
        assert report.multiplier == pytest.approx(2.0, abs=1e-10)
        assert report.grad_residual <= 1e-10 * (1.0 + 2.0 * l2_norm(prob.grid, rep))
        assert abs(report.complementarity) <= 1e-12
        assert report.feasible


class TestConeSampling:
    def test_inactive_directions_are_unit(self):
        prob, _ = make_problem(radius=100.0)
        rng = np.random.default_rng(1)
        dirs = sample_cone_directions(prob, np.zeros(12), 0.0, 6, rng)
        assert len(dirs) == 6
        for h in dirs:
            assert l2_norm(prob.grid, h) == pytest.approx(1.0, rel=1e-12)

    def test_active_positive_multiplier_orthogonal(self):
        prob, u, rep = manufactured_active_point(1.0)
        rng = np.random.default_rng(2)
        dirs = sample_cone_directions(prob, u, 1.0, 8, rng)
        rep_norm = l2_norm(prob.grid, rep)
        for h in dirs:
            assert abs(inner_product(prob.grid, rep, h)) <= 1e-10 * max(rep_norm, 1.0)

    def test_active_zero_multiplier_half_space(self):
        prob, u, rep = manufactured_active_point(0.0)
        rng = np.random.default_rng(3)
        dirs = sample_cone_directions(prob, u, 0.0, 8, rng)
        for h in dirs:
            assert inner_product(prob.grid, rep, h) >= -1e-12 * max(
                l2_norm(prob.grid, rep), 1.0
            )

    def test_seeded_determinism(self):
        prob, _ = make_problem()
        a = sample_cone_directions(
            prob, np.zeros(12), 0.0, 4, np.random.default_rng(9)
        )
        b = sample_cone_directions(
            prob, np.zeros(12), 0.0, 4, np.random.default_rng(9)
        )
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_count_validated(self):
        prob, _ = make_problem()
        with pytest.raises(ConfigError):
            sample_cone_directions(
                prob, np.zeros(12), 0.0, 0, np.random.default_rng(0)
            )


class TestSscCheck:
    def test_linear_problem_certifies(self):
        prob, _ = make_problem()
        report = ssc_check(prob, np.zeros(12), 0.0, n_directions=12, seed=4)
        assert report.kappa == 1.0
        assert report.min_quotient >= report.kappa - 1e-8
        assert report.coercivity_margin == 0.0
        assert report.certified

    def test_dense_crosscheck_bounds_sampled_minimum(self):
        prob, _ = make_problem(n=10, n_steps=8)
        report = ssc_check(
            prob, np.zeros(10), 0.0, n_directions=10, seed=5, dense_crosscheck=True
        )
        assert report.dense_min_quotient is not None
        assert report.dense_min_quotient <= report.min_quotient + 1e-10
        assert report.dense_min_quotient >= report.kappa - 1e-10

    def test_dense_crosscheck_with_active_multiplier(self):
        prob, u, _ = manufactured_active_point(1.5, n=10)
        report = ssc_check(prob, u, 1.5, n_directions=10, seed=6, dense_crosscheck=True)
        assert report.dense_min_quotient <= report.min_quotient + 1e-10
        assert report.certified

    def test_dense_crosscheck_scale_limit(self):
        prob, _ = make_problem(dim=2, n=15, n_steps=4, obs_nodes=[10, 100, 200])
        with pytest.raises(ScaleError):
            ssc_check(
                prob,
                np.zeros(prob.grid.node_count),
                0.0,
                n_directions=2,
                dense_crosscheck=True,
            )

    def test_direction_count_validated(self):
        prob, _ = make_problem()
        with pytest.raises(ConfigError):
            ssc_check(prob, np.zeros(12), 0.0, n_directions=0)


class TestGrowthProbe:
    def test_passes_at_convex_optimum(self):
        prob, truth = make_problem(n=16, n_steps=20, stride=2)
        prob2, _ = make_problem(n=16, n_steps=20, stride=2, background=truth)
        u, history = optimize(prob2, OptimConfig(max_iters=300, kkt_tol=1e-10), np.zeros(16))
        report = quadratic_growth_probe(prob2, u, 0.0, sigma=0.5, n_pairs=20, seed=7)
        assert report.n_pairs >= 20
        assert report.passed

    def test_fails_away_from_optimum(self):
        prob, _ = make_problem(n=16, n_steps=20, stride=2)
        far = np.ones(16)
        report = quadratic_growth_probe(prob, far, 0.0, sigma=0.5, n_pairs=20, seed=8)
        assert not report.passed
