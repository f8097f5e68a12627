"""Finite-difference and Taylor-expansion consistency checks.

These are the trust-building diagnostics: the adjoint gradient against
central differences of the cost, the quadratic form against second
differences, and the tangent expansions against the nonlinear solve.
They are exposed both to the test suite and to the `gradcheck` CLI.
"""

import numpy as np

from .assimilation import (
    evaluate_cost,
    cost_and_gradient,
    hessian_quadratic_form,
)
from .grid import inner_product, l2_norm
from .optimize import project_to_ball
from .sensitivity import solve_second_tangent, solve_tangent
from .stepping import StepSolver, solve_semilinear

__all__ = [
    "random_feasible_state",
    "random_direction",
    "gradient_check",
    "hessian_check",
    "taylor_slopes",
    "fit_loglog_slope",
]


def random_feasible_state(prob, rng, scale=0.5):
    draw = scale * rng.standard_normal(prob.grid.node_count)
    return project_to_ball(prob.constraint, prob.grid, draw)


def random_direction(prob, rng):
    h = rng.standard_normal(prob.grid.node_count)
    return h / l2_norm(prob.grid, h)


def gradient_check(prob, rng, n_pairs=20, eps=1e-5):
    """Relative errors of <grad f, h> vs central differences, one per pair."""
    solver = prob.step_solver()
    errors = np.empty(n_pairs)
    for i in range(n_pairs):
        u = random_feasible_state(prob, rng)
        h = random_direction(prob, rng)
        _, grad = cost_and_gradient(prob, u, solver=solver)
        directional = inner_product(prob.grid, grad, h)
        f_plus = evaluate_cost(prob, u + eps * h, solver=solver)
        f_minus = evaluate_cost(prob, u - eps * h, solver=solver)
        fd = (f_plus - f_minus) / (2.0 * eps)
        errors[i] = abs(fd - directional) / max(abs(directional), 1e-14)
    return errors


def hessian_check(prob, rng, n_pairs=10, eps=1e-3):
    """Relative errors of the quadratic form vs second central differences."""
    solver = prob.step_solver()
    errors = np.empty(n_pairs)
    for i in range(n_pairs):
        u = random_feasible_state(prob, rng)
        h = random_direction(prob, rng)
        form = hessian_quadratic_form(prob, u, h)
        f_mid = evaluate_cost(prob, u, solver=solver)
        f_plus = evaluate_cost(prob, u + eps * h, solver=solver)
        f_minus = evaluate_cost(prob, u - eps * h, solver=solver)
        fd = (f_plus - 2.0 * f_mid + f_minus) / (eps * eps)
        errors[i] = abs(fd - form) / max(abs(form), 1e-14)
    return errors


def fit_loglog_slope(scales, values):
    """Least-squares slope of log(values) against log(scales)."""
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log(scales), np.log(values), 1)[0])


def taylor_slopes(prob, u, h, scales=(0.2, 0.1, 0.05, 0.025)):
    """Observed expansion orders of the state map along direction h.

    Returns (slope_first, slope_second): the log-log slopes of the
    remainders after subtracting the first-order and the second-order
    tangent expansions.  Smooth nonlinearities give ~2 and ~3.  For the
    zero nonlinearity both remainders sit at rounding level and the
    slopes are meaningless; callers should skip that case.
    """
    operator, time_grid, g = prob.operator, prob.time_grid, prob.nonlinearity
    solver = StepSolver(operator, time_grid.dt)
    base = solve_semilinear(operator, time_grid, u, g, solver=solver)
    eta = solve_tangent(operator, time_grid, base, g, h, solver=solver)
    omega = solve_second_tangent(operator, time_grid, base, eta, g, solver=solver)

    def sup_l2(block):
        return max(l2_norm(prob.grid, row) for row in block)

    first, second = [], []
    for s in scales:
        pert = solve_semilinear(operator, time_grid, u + s * h, g, solver=solver)
        gap1 = pert.snapshots - base.snapshots - s * eta.snapshots
        gap2 = gap1 - 0.5 * s * s * omega.snapshots
        first.append(sup_l2(gap1))
        second.append(sup_l2(gap2))
    return fit_loglog_slope(scales, first), fit_loglog_slope(scales, second)
