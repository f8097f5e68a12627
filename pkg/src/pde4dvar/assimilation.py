"""Reduced cost, gradient and curvature forms of the assimilation problem.

The control is the initial state ``u``.  The reduced cost is

    f(u) = 0.5 * sum_m dt * sum_k (y[m](x_k) - z[k, m])**2
         + 0.5 * <Binv (u - u_b), u - u_b>_L2

with ``y = S(u)`` the marched state, ``z`` the observed values at the
points ``x_k`` and the observed steps ``m``, and ``Binv`` a symmetric
coercive background weighting.  The admissible set is the ball
``integral |u|**beta <= radius`` expressed through

    constraint_value(u) = radius - integral |u|**beta   (>= 0 feasible).

Gradients are L2 representers: the adjoint sweep is the exact transpose
of the linearized marcher, so evaluate_gradient is the exact derivative
of the discrete cost, and the quadratic forms below are its exact
second directional derivatives.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePairError, MultiplierSignError
from .grid import Grid, DiscreteOperator, inner_product, lp_integral
from .sensitivity import solve_adjoint, solve_tangent
from .stepping import Nonlinearity, StateTrajectory, StepSolver, TimeGrid, solve_semilinear

__all__ = [
    "ObservationSet",
    "ScaledIdentity",
    "DiagonalWeights",
    "LaplacianForm",
    "ConstraintSpec",
    "AssimilationProblem",
    "CostParts",
    "evaluate_cost",
    "evaluate_cost_parts",
    "evaluate_gradient",
    "constraint_value",
    "constraint_gradient",
    "hessian_quadratic_form",
    "lagrangian_hessian_form",
    "coercivity_margin",
    "QuadraticFormEvaluator",
]


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Point observations on the time grid.

    ``points`` are flat interior node indices, ``stride`` the step
    stride between observed levels (observed steps are stride, 2*stride,
    ... up to n_steps), and ``values[k, j]`` the datum at node
    ``points[k]`` and step ``stride * (j + 1)``.  Each observed sample
    carries the rectangle weight dt in the misfit sum.
    """

    points: np.ndarray
    stride: int
    values: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if points.ndim != 1 or points.size == 0:
            raise ConfigError("observation set needs a non-empty 1D array of node indices")
        if len(np.unique(points)) != points.size:
            raise ConfigError("duplicate observation nodes after snapping")
        if self.stride < 1:
            raise ConfigError(f"observation stride must be >= 1, got {self.stride}")
        if values.ndim != 2 or values.shape[0] != points.size:
            raise ConfigError(
                f"observation values have shape {values.shape}, expected "
                f"({points.size}, n_observed_steps)"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("observation values must be finite")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise sigma must be >= 0")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    def observed_steps(self, n_steps: int) -> np.ndarray:
        return np.arange(self.stride, n_steps + 1, self.stride)


@dataclass(frozen=True)
class ScaledIdentity:
    """Binv v = alpha * v; coercivity constant alpha."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ConfigError(f"covariance scale alpha must be positive, got {self.alpha}")

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        return self.alpha * v

    @property
    def kappa(self) -> float:
        return self.alpha


@dataclass(frozen=True, eq=False)
class DiagonalWeights:
    """Binv v = weights * v; coercivity constant min(weights)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.all(w > 0.0):
            raise ConfigError("diagonal covariance weights must be positive and finite")
        object.__setattr__(self, "weights", w)

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        return self.weights * v

    @property
    def kappa(self) -> float:
        return float(self.weights.min())


@dataclass(frozen=True, eq=False)
class LaplacianForm:
    """Binv v = (I + gamma * A) v with A the diffusion operator.

    Symmetric and coercive with constant 1 (A is positive
    semidefinite on the interior nodes, in fact definite).
    """

    gamma: float
    operator: DiscreteOperator

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ConfigError(f"covariance smoothing gamma must be >= 0, got {self.gamma}")

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        return v + self.gamma * (self.operator.matrix @ v)

    @property
    def kappa(self) -> float:
        return 1.0


@dataclass(frozen=True)
class ConstraintSpec:
    """Ball constraint: integral |u|**beta <= radius."""

    radius: float
    beta: float = 6.5

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ConfigError(f"ball radius must be positive, got {self.radius}")
        if not self.beta > 4.0:
            raise ConfigError(f"ball exponent beta must exceed 4, got {self.beta}")


@dataclass(frozen=True, eq=False)
class AssimilationProblem:
    """Everything the reduced cost needs, cross-validated once."""

    grid: Grid
    time_grid: TimeGrid
    operator: DiscreteOperator
    nonlinearity: Nonlinearity
    observations: ObservationSet
    covariance: object
    background: np.ndarray
    constraint: ConstraintSpec

    def __post_init__(self):
        nc = self.grid.node_count
        if self.operator.grid != self.grid:
            raise ConfigError("operator was assembled on a different grid")
        background = np.asarray(self.background, dtype=float)
        if background.shape != (nc,):
            raise ConfigError(
                f"background has shape {background.shape}, expected ({nc},)"
            )
        obs = self.observations
        if obs.points.max() >= nc or obs.points.min() < 0:
            raise ConfigError("observation node index outside the grid")
        n_observed = obs.observed_steps(self.time_grid.n_steps).size
        if n_observed == 0:
            raise ConfigError("observation stride leaves no observed steps")
        if obs.values.shape[1] != n_observed:
            raise ConfigError(
                f"observation values cover {obs.values.shape[1]} steps, "
                f"the stride implies {n_observed}"
            )
        if isinstance(self.covariance, DiagonalWeights):
            if self.covariance.weights.shape != (nc,):
                raise ConfigError("diagonal covariance weight length mismatch")
        if isinstance(self.covariance, LaplacianForm):
            if self.covariance.operator.grid != self.grid:
                raise ConfigError("covariance operator lives on a different grid")
        if not self.constraint.beta > self.grid.dim:
            raise ConfigError("ball exponent beta must exceed the dimension")
        object.__setattr__(self, "background", background)

    def step_solver(self) -> StepSolver:
        return StepSolver(self.operator, self.time_grid.dt)


@dataclass(frozen=True)
class CostParts:
    misfit: float
    background: float

    @property
    def total(self) -> float:
        return self.misfit + self.background


def _forward(prob: AssimilationProblem, u: np.ndarray, solver: StepSolver) -> StateTrajectory:
    return solve_semilinear(prob.operator, prob.time_grid, u, prob.nonlinearity, solver=solver)


def _residuals(prob: AssimilationProblem, traj: StateTrajectory) -> np.ndarray:
    """Residual matrix r[k, j] = y[m_j](x_k) - z[k, j]."""
    steps = prob.observations.observed_steps(prob.time_grid.n_steps)
    sampled = traj.snapshots[np.ix_(steps, prob.observations.points)].T
    return sampled - prob.observations.values


def evaluate_cost_parts(
    prob: AssimilationProblem, u: np.ndarray, solver: StepSolver | None = None
) -> CostParts:
    """Misfit and background terms of the reduced cost, separately."""
    if solver is None:
        solver = prob.step_solver()
    traj = _forward(prob, u, solver)
    r = _residuals(prob, traj)
    misfit = 0.5 * prob.time_grid.dt * float(np.sum(r * r))
    gap = np.asarray(u, dtype=float) - prob.background
    background = 0.5 * inner_product(prob.grid, prob.covariance.apply_inverse(gap), gap)
    return CostParts(misfit=misfit, background=background)


def evaluate_cost(
    prob: AssimilationProblem, u: np.ndarray, solver: StepSolver | None = None
) -> float:
    return evaluate_cost_parts(prob, u, solver=solver).total


def evaluate_gradient(
    prob: AssimilationProblem, u: np.ndarray, solver: StepSolver | None = None
) -> np.ndarray:
    """L2 representer of the cost derivative: p[0] + Binv(u - u_b)."""
    _, grad = cost_and_gradient(prob, u, solver=solver)
    return grad


def cost_and_gradient(
    prob: AssimilationProblem, u: np.ndarray, solver: StepSolver | None = None
):
    """One forward and one adjoint sweep; returns (CostParts, gradient)."""
    u = np.asarray(u, dtype=float)
    if solver is None:
        solver = prob.step_solver()
    traj = _forward(prob, u, solver)
    r = _residuals(prob, traj)
    misfit = 0.5 * prob.time_grid.dt * float(np.sum(r * r))
    gap = u - prob.background
    bg_rep = prob.covariance.apply_inverse(gap)
    background = 0.5 * inner_product(prob.grid, bg_rep, gap)
    adj = solve_adjoint(
        prob.operator,
        prob.time_grid,
        traj,
        prob.nonlinearity,
        prob.observations.points,
        prob.observations.observed_steps(prob.time_grid.n_steps),
        r,
        solver=solver,
    )
    return CostParts(misfit=misfit, background=background), adj.snapshots[0] + bg_rep


def constraint_value(spec: ConstraintSpec, grid: Grid, u: np.ndarray) -> float:
    """Slack of the ball constraint: radius - integral |u|**beta."""
    return spec.radius - lp_integral(grid, u, spec.beta)


def constraint_gradient(spec: ConstraintSpec, grid: Grid, u: np.ndarray) -> np.ndarray:
    """L2 representer of the slack derivative: -beta * |u|**(beta-2) * u.

    Odd in u; vanishes only at u = 0 (beta > 4 keeps the power
    well-defined there).
    """
    u = np.asarray(u, dtype=float)
    return -spec.beta * np.abs(u) ** (spec.beta - 2.0) * u


class QuadraticFormEvaluator:
    """Exact second directional derivative of cost or Lagrangian at ``u``.

    Precomputes the forward trajectory and the half-updated backward
    states once; each direction then costs a single tangent sweep.  The
    evaluated form is

        Q(h) = sum_m dt * sum_k eta[m](x_k)**2
             + <Binv h, h>_L2
             - sum_m dt * <g_yy(y[m]) * eta[m]**2, w[m+1]>_L2
             + lam * beta * (beta-1) * integral |u|**(beta-2) * h**2

    where ``w`` are the half-updated adjoint states, which carry the
    time quadrature under which Q is the exact second derivative of the
    marched cost (and of the Lagrangian f - lam * slack).
    """

    def __init__(self, prob: AssimilationProblem, u: np.ndarray, lam: float = 0.0):
        if lam < 0.0:
            raise MultiplierSignError(f"multiplier must be >= 0, got {lam}")
        self.prob = prob
        self.u = np.asarray(u, dtype=float)
        self.lam = lam
        self.solver = prob.step_solver()
        self.base = _forward(prob, self.u, self.solver)
        self.residuals = _residuals(prob, self.base)
        self.obs_steps = prob.observations.observed_steps(prob.time_grid.n_steps)
        g = prob.nonlinearity
        if g.is_zero:
            self.updates = None
            self.curvature_weight = None
        else:
            _, updates = solve_adjoint(
                prob.operator,
                prob.time_grid,
                self.base,
                g,
                prob.observations.points,
                self.obs_steps,
                self.residuals,
                solver=self.solver,
                capture_updates=True,
            )
            # Pointwise weight of the eta**2 pairing at steps m = 0..n-1.
            self.curvature_weight = g.g_yy(self.base.snapshots[:-1]) * updates[1:]
        if lam == 0.0:
            self.penalty_weight = None
        else:
            beta = prob.constraint.beta
            self.penalty_weight = (
                lam * beta * (beta - 1.0) * np.abs(self.u) ** (beta - 2.0)
            )

    def form(self, h: np.ndarray) -> float:
        prob = self.prob
        grid = prob.grid
        dt = prob.time_grid.dt
        tangent = solve_tangent(
            prob.operator, prob.time_grid, self.base, prob.nonlinearity, h, solver=self.solver
        )
        eta = tangent.snapshots
        sampled = eta[np.ix_(self.obs_steps, prob.observations.points)]
        value = dt * float(np.sum(sampled * sampled))
        value += inner_product(grid, prob.covariance.apply_inverse(h), h)
        if self.curvature_weight is not None:
            value -= dt * grid.quad_weight * float(
                np.sum(self.curvature_weight * eta[:-1] ** 2)
            )
        if self.penalty_weight is not None:
            value += grid.quad_weight * float(np.sum(self.penalty_weight * h * h))
        return value

    def rayleigh(self, h: np.ndarray) -> float:
        nh2 = inner_product(self.prob.grid, h, h)
        if nh2 == 0.0:
            raise DegeneratePairError("Rayleigh quotient needs a nonzero direction")
        return self.form(h) / nh2


def hessian_quadratic_form(prob: AssimilationProblem, u: np.ndarray, h: np.ndarray) -> float:
    """Second directional derivative of the reduced cost along h."""
    return QuadraticFormEvaluator(prob, u, 0.0).form(h)


def lagrangian_hessian_form(
    prob: AssimilationProblem, u: np.ndarray, lam: float, h: np.ndarray
) -> float:
    """Second directional derivative of f - lam * slack along h."""
    return QuadraticFormEvaluator(prob, u, lam).form(h)


def coercivity_margin(
    prob: AssimilationProblem, u: np.ndarray, mode: str = "delta_density"
) -> float:
    """Pointwise curvature margin of the misfit-curvature pairing.

    ``delta_density`` (default): minimum over all time steps and nodes
    of ``D(x) - p[m](x) * g_yy(y[m](x))`` where D is the Dirac density
    (1/quad_weight at observation nodes, 0 elsewhere).  A nonnegative
    value certifies that the state-curvature term cannot push the
    Lagrangian form below the covariance coercivity.

    ``off_observation``: conservative variant that drops the density
    and takes the minimum of ``-p[m](x) * g_yy(y[m](x))`` over
    non-observation nodes only.
    """
    if mode not in ("delta_density", "off_observation"):
        raise ConfigError(f"unknown coercivity margin mode {mode!r}")
    u = np.asarray(u, dtype=float)
    solver = prob.step_solver()
    traj = _forward(prob, u, solver)
    r = _residuals(prob, traj)
    adj = solve_adjoint(
        prob.operator,
        prob.time_grid,
        traj,
        prob.nonlinearity,
        prob.observations.points,
        prob.observations.observed_steps(prob.time_grid.n_steps),
        r,
        solver=solver,
    )
    g = prob.nonlinearity
    if g.is_zero:
        curvature = np.zeros_like(traj.snapshots)
    else:
        curvature = adj.snapshots * g.g_yy(traj.snapshots)
    if mode == "delta_density":
        density = np.zeros(prob.grid.node_count)
        density[prob.observations.points] = 1.0 / prob.grid.quad_weight
        return float(np.min(density[None, :] - curvature))
    mask = np.ones(prob.grid.node_count, dtype=bool)
    mask[prob.observations.points] = False
    if not np.any(mask):
        return float("inf")
    return float(np.min(-curvature[:, mask]))
