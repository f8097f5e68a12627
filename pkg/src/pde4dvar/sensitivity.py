"""Tangent, second-order tangent and adjoint sweeps.

All three reuse the forward step matrix ``M = I + dt*A``.  The tangent
scheme is the exact linearization of the semilinear marcher; the
adjoint is its exact algebraic transpose marched backward, so the
duality identity

    sum_m dt * sum_k eta[m](x_k) * r[k, m]  ==  <h0, p[0]>_L2

holds to machine precision by construction.  Point observations enter
through discrete Dirac densities ``e_k / quad_weight`` weighted by the
same dt rectangle weights the cost uses.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import DiscreteOperator, Grid
from .stepping import Nonlinearity, StateTrajectory, StepSolver, TimeGrid, _march

__all__ = [
    "PointSource",
    "discrete_delta",
    "solve_tangent",
    "solve_second_tangent",
    "solve_adjoint",
]


@dataclass(frozen=True)
class PointSource:
    """A Dirac observation site at an interior node."""

    node_index: int

    def density(self, grid: Grid) -> np.ndarray:
        return discrete_delta(grid, self.node_index)


def discrete_delta(grid: Grid, node_index: int) -> np.ndarray:
    """Unit-mass density at a node: <delta_k, v>_L2 == v[k] for all v."""
    if not 0 <= node_index < grid.node_count:
        raise ConfigError(
            f"node index {node_index} outside [0, {grid.node_count})"
        )
    out = np.zeros(grid.node_count)
    out[node_index] = 1.0 / grid.quad_weight
    return out


def _check_traj(traj: StateTrajectory, time_grid: TimeGrid, node_count: int, name: str):
    if traj.n_steps != time_grid.n_steps or traj.node_count != node_count:
        raise ConfigError(
            f"{name} trajectory has shape {traj.snapshots.shape}, expected "
            f"({time_grid.n_steps + 1}, {node_count})"
        )


def solve_tangent(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    base: StateTrajectory,
    g: Nonlinearity,
    h0: np.ndarray,
    solver: StepSolver | None = None,
) -> StateTrajectory:
    """Directional state derivative along ``h0``.

    Marches ``(I + dt*A) eta[m+1] = eta[m] - dt*g_y(y[m]) * eta[m]``,
    the exact derivative of the forward step with g frozen at the old
    state.
    """
    grid = operator.grid
    h0 = np.asarray(h0, dtype=float)
    _check_traj(base, time_grid, grid.node_count, "base")
    if h0.shape != (grid.node_count,):
        raise ConfigError(f"direction has shape {h0.shape}, expected ({grid.node_count},)")
    dt = time_grid.dt
    if solver is None:
        solver = StepSolver(operator, dt)
    y = base.snapshots
    if g.is_zero:
        rhs_of = lambda m, eta: eta
    else:
        rhs_of = lambda m, eta: eta - dt * (g.g_y(y[m]) * eta)
    return StateTrajectory(_march(solver, h0, time_grid.n_steps, rhs_of))


def solve_second_tangent(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    base: StateTrajectory,
    tangent: StateTrajectory,
    g: Nonlinearity,
    solver: StepSolver | None = None,
) -> StateTrajectory:
    """Second directional state derivative (zero initial value).

    Marches ``(I + dt*A) w[m+1] = w[m] - dt*(g_y(y[m])*w[m] +
    g_yy(y[m])*eta[m]**2)``, the exact second derivative of the forward
    step; the Taylor expansion of the state map reads
    ``S(u + s*h) = S(u) + s*eta + s**2/2 * w + O(s**3)``.
    """
    grid = operator.grid
    _check_traj(base, time_grid, grid.node_count, "base")
    _check_traj(tangent, time_grid, grid.node_count, "tangent")
    dt = time_grid.dt
    if solver is None:
        solver = StepSolver(operator, dt)
    y = base.snapshots
    eta = tangent.snapshots
    zero = np.zeros(grid.node_count)
    if g.is_zero:
        rhs_of = lambda m, w: w
    else:
        rhs_of = lambda m, w: w - dt * (g.g_y(y[m]) * w + g.g_yy(y[m]) * eta[m] ** 2)
    return StateTrajectory(_march(solver, zero, time_grid.n_steps, rhs_of))


def solve_adjoint(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    base: StateTrajectory,
    g: Nonlinearity,
    points: np.ndarray,
    observed_steps: np.ndarray,
    residuals: np.ndarray,
    solver: StepSolver | None = None,
    capture_updates: bool = False,
):
    """Backward sweep of the transposed tangent scheme with Dirac sources.

    ``residuals[k, j]`` belongs to observation node ``points[k]`` at
    time step ``observed_steps[j]``; each enters with weight dt, the
    rectangle weight of the misfit sum, as the density
    ``residual / quad_weight`` at its node.

    The stored trajectory has ``p[n_steps] = 0`` and satisfies

        p[m] = (I - dt*G_m) M^{-1} (p[m+1] + dt*rho[m+1])

    with ``G_m = diag(g_y(y[m]))``.  ``p[0]`` is the L2 representer of
    the misfit derivative with respect to the initial state.

    With ``capture_updates=True`` additionally returns the half-updated
    states ``w[m] = M^{-1}(p[m] + dt*rho[m])`` for m = 1..n_steps; they
    carry the exact time quadrature of the second-derivative pairing.
    """
    grid = operator.grid
    n_steps = time_grid.n_steps
    dt = time_grid.dt
    _check_traj(base, time_grid, grid.node_count, "base")
    points = np.asarray(points, dtype=int)
    observed_steps = np.asarray(observed_steps, dtype=int)
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape != (points.shape[0], observed_steps.shape[0]):
        raise ConfigError(
            f"residual matrix has shape {residuals.shape}, expected "
            f"({points.shape[0]}, {observed_steps.shape[0]})"
        )
    if observed_steps.size and (observed_steps.min() < 1 or observed_steps.max() > n_steps):
        raise ConfigError("observed steps must lie in [1, n_steps]")
    if solver is None:
        solver = StepSolver(operator, dt)

    column_of = {int(m): j for j, m in enumerate(observed_steps)}
    density = 1.0 / grid.quad_weight
    y = base.snapshots
    p = np.zeros((n_steps + 1, grid.node_count))
    updates = np.zeros((n_steps + 1, grid.node_count)) if capture_updates else None
    for m in range(n_steps - 1, -1, -1):
        rhs = p[m + 1]
        j = column_of.get(m + 1)
        if j is not None:
            rhs = rhs.copy()
            rhs[points] += dt * density * residuals[:, j]
        w = solver.solve(rhs)
        if capture_updates:
            updates[m + 1] = w
        if g.is_zero:
            p[m] = w
        else:
            p[m] = w - dt * (g.g_y(y[m]) * w)
    traj = StateTrajectory(p)
    if capture_updates:
        return traj, updates
    return traj
