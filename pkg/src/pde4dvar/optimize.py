"""Projected gradient descent on the ball-constrained reduced cost,
with first- and second-order optimality reporting.

The optimizer is deliberately plain: scaling retraction onto the
ball, Armijo backtracking, a Barzilai-Borwein initial trial step.  The
KKT checker, not the optimizer loop, is the source of truth for
optimality; the second-order checker samples Rayleigh quotients of the
Lagrangian form over the constraint cone.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assimilation import (
    AssimilationProblem,
    QuadraticFormEvaluator,
    constraint_gradient,
    constraint_value,
    coercivity_margin,
    cost_and_gradient,
    evaluate_cost_parts,
    evaluate_gradient,
)
from .errors import (
    ConfigError,
    DegenerateMultiplierError,
    ScaleError,
    StagnationError,
)
from .grid import Grid, inner_product, l2_norm, lp_integral

__all__ = [
    "OptimConfig",
    "OptimHistory",
    "KktReport",
    "SscReport",
    "GrowthProbeReport",
    "project_to_ball",
    "optimize",
    "recover_multiplier",
    "kkt_check",
    "ssc_check",
    "sample_cone_directions",
    "quadratic_growth_probe",
]

# |slack| below this fraction of the radius counts as an active constraint.
ACTIVATION_TOL_REL = 1e-8
# Iterates may undershoot feasibility by at most this fraction of the radius.
FEASIBILITY_SLACK_REL = 1e-12
# Slack granted against the covariance coercivity constant in certification.
CERTIFY_TOL = 1e-8
# Safety shrink so the retraction lands strictly inside, never outside.
_PROJECTION_SAFETY = 1.0 - 1e-14
# Node budget of the dense cross-check in ssc_check.
_DENSE_LIMIT = 200

_MAX_LINE_SEARCH_SHRINKS = 60


def project_to_ball(spec, grid: Grid, u: np.ndarray) -> np.ndarray:
    """Scaling retraction onto ``integral |u|**beta <= radius``.

    Feasible inputs are returned unchanged.  Infeasible inputs are
    scaled by ``(radius / integral)**(1/beta)`` (times a one-ulp-scale
    safety factor so the result lands on the boundary from the inside).
    Idempotent.
    """
    u = np.asarray(u, dtype=float)
    lp = lp_integral(grid, u, spec.beta)
    if lp <= spec.radius * (1.0 + FEASIBILITY_SLACK_REL):
        return u
    return u * (_PROJECTION_SAFETY * (spec.radius / lp) ** (1.0 / spec.beta))


@dataclass(frozen=True)
class OptimConfig:
    """Knobs of the projected gradient loop."""

    max_iters: int = 500
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    init_step: float = 1.0
    kkt_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ConfigError("armijo_c1 must lie in (0, 1)")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ConfigError("armijo_shrink must lie in (0, 1)")
        if not self.init_step > 0.0:
            raise ConfigError("init_step must be positive")
        if not self.kkt_tol > 0.0:
            raise ConfigError("kkt_tol must be positive")


@dataclass
class OptimHistory:
    """Per-iteration record of the descent loop."""

    iterations: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    step: list = field(default_factory=list)
    slack: list = field(default_factory=list)
    grad_residual: list = field(default_factory=list)
    converged: bool = False
    reason: str = "max_iters"

    def append(self, iteration, cost, step, slack, grad_residual):
        self.iterations.append(int(iteration))
        self.cost.append(float(cost))
        self.step.append(float(step))
        self.slack.append(float(slack))
        self.grad_residual.append(float(grad_residual))

    def rows(self):
        return list(
            zip(self.iterations, self.cost, self.step, self.slack, self.grad_residual)
        )


@dataclass(frozen=True)
class KktReport:
    """First-order optimality certificate at a control."""

    grad_residual: float
    feasibility: float
    complementarity: float
    multiplier: float
    active: bool
    feasible: bool

    def to_dict(self):
        return {
            "grad_residual": self.grad_residual,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "lambda": self.multiplier,
            "active": self.active,
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class SscReport:
    """Sampled second-order certificate at a control."""

    n_directions: int
    min_quotient: float
    coercivity_margin: float
    kappa: float
    certified: bool
    dense_min_quotient: float | None = None

    def to_dict(self):
        out = {
            "n_directions": self.n_directions,
            "min_quotient": self.min_quotient,
            "coercivity_margin": self.coercivity_margin,
            "kappa": self.kappa,
            "certified": self.certified,
        }
        if self.dense_min_quotient is not None:
            out["dense_min_quotient"] = self.dense_min_quotient
        return out


@dataclass(frozen=True)
class GrowthProbeReport:
    """Outcome of the quadratic growth probe around a certified point."""

    n_pairs: int
    sigma: float
    min_excess: float
    passed: bool

    def to_dict(self):
        return {
            "n_pairs": self.n_pairs,
            "sigma": self.sigma,
            "min_excess": self.min_excess,
            "passed": self.passed,
        }


def _is_active(prob: AssimilationProblem, slack: float) -> bool:
    return slack <= ACTIVATION_TOL_REL * prob.constraint.radius


def recover_multiplier(
    prob: AssimilationProblem, u: np.ndarray, gradient: np.ndarray | None = None
) -> float:
    """Least-squares multiplier of the ball constraint.

    Zero when the constraint is inactive.  When active,
    ``max(0, <grad f, rep> / ||rep||**2)`` with ``rep`` the constraint
    gradient representer; raises if the representer vanishes at an
    active point (degenerate geometry).
    """
    u = np.asarray(u, dtype=float)
    slack = constraint_value(prob.constraint, prob.grid, u)
    if not _is_active(prob, slack):
        return 0.0
    rep = constraint_gradient(prob.constraint, prob.grid, u)
    rep_nsq = inner_product(prob.grid, rep, rep)
    if rep_nsq == 0.0:
        raise DegenerateMultiplierError(
            "constraint gradient vanishes at an active point"
        )
    if gradient is None:
        gradient = evaluate_gradient(prob, u)
    return max(0.0, inner_product(prob.grid, gradient, rep) / rep_nsq)


def kkt_check(prob: AssimilationProblem, u: np.ndarray) -> KktReport:
    """First-order report: stationarity residual, slack, complementarity."""
    u = np.asarray(u, dtype=float)
    gradient = evaluate_gradient(prob, u)
    return _kkt_from_gradient(prob, u, gradient)


def _kkt_from_gradient(prob, u, gradient) -> KktReport:
    slack = constraint_value(prob.constraint, prob.grid, u)
    active = _is_active(prob, slack)
    lam = recover_multiplier(prob, u, gradient=gradient) if active else 0.0
    rep = constraint_gradient(prob.constraint, prob.grid, u)
    residual = l2_norm(prob.grid, gradient - lam * rep)
    return KktReport(
        grad_residual=residual,
        feasibility=slack,
        complementarity=lam * slack,
        multiplier=lam,
        active=active,
        feasible=slack >= -FEASIBILITY_SLACK_REL * prob.constraint.radius,
    )


def optimize(prob: AssimilationProblem, config: OptimConfig, u_init: np.ndarray):
    """Projected gradient descent from ``u_init``.

    Returns ``(u, history)``.  Every iterate is feasible, the cost is
    monotonically non-increasing, and the loop stops when the KKT
    residuals fall below ``kkt_tol * (1 + ||grad f(u_init)||)``, when
    the step collapses at a retraction fixed point, or at ``max_iters``.
    """
    spec = prob.constraint
    grid = prob.grid
    solver = prob.step_solver()
    u = project_to_ball(spec, grid, np.asarray(u_init, dtype=float))
    parts, gradient = cost_and_gradient(prob, u, solver=solver)
    cost = parts.total
    tol = config.kkt_tol * (1.0 + l2_norm(grid, gradient))

    history = OptimHistory()
    prev_u = None
    prev_gradient = None
    accepted_step = config.init_step
    last_step = 0.0

    for iteration in range(config.max_iters):
        slack = constraint_value(spec, grid, u)
        active = _is_active(prob, slack)
        lam = recover_multiplier(prob, u, gradient=gradient) if active else 0.0
        rep = constraint_gradient(spec, grid, u)
        residual = l2_norm(grid, gradient - lam * rep)
        history.append(iteration, cost, last_step, slack, residual)
        if residual <= tol and abs(lam * slack) <= tol:
            history.converged = True
            history.reason = "kkt_tolerance"
            break

        trial = _bb_step(grid, u, gradient, prev_u, prev_gradient)
        if trial is None:
            trial = accepted_step

        candidate = None
        for _ in range(_MAX_LINE_SEARCH_SHRINKS + 1):
            candidate = project_to_ball(spec, grid, u - trial * gradient)
            candidate_cost = evaluate_cost_parts(prob, candidate, solver=solver).total
            decrease = inner_product(grid, gradient, u - candidate)
            if decrease >= 0.0 and candidate_cost <= cost - config.armijo_c1 * decrease:
                break
            trial *= config.armijo_shrink
        else:
            raise StagnationError(
                "line search exhausted its shrink budget",
                iteration=iteration,
                step=trial,
                cost=cost,
            )

        step_len = l2_norm(grid, u - candidate)
        prev_u, prev_gradient = u, gradient
        u = candidate
        parts, gradient = cost_and_gradient(prob, u, solver=solver)
        cost = parts.total
        accepted_step = trial
        last_step = trial
        if step_len <= 1e-14 * (1.0 + l2_norm(grid, u)):
            history.converged = False
            history.reason = "step_stagnation"
            break

    if history.reason != "kkt_tolerance":
        # Final-state row: the loop stepped after its last record.
        slack = constraint_value(spec, grid, u)
        active = _is_active(prob, slack)
        lam = recover_multiplier(prob, u, gradient=gradient) if active else 0.0
        rep = constraint_gradient(spec, grid, u)
        residual = l2_norm(grid, gradient - lam * rep)
        history.append(len(history.iterations), cost, last_step, slack, residual)
        if residual <= tol and abs(lam * slack) <= tol:
            history.converged = True
            history.reason = "kkt_tolerance"
    return u, history


def _bb_step(grid, u, gradient, prev_u, prev_gradient):
    """Barzilai-Borwein trial step; None when undefined."""
    if prev_u is None:
        return None
    s = u - prev_u
    y = gradient - prev_gradient
    sy = inner_product(grid, s, y)
    if sy <= 0.0:
        return None
    ss = inner_product(grid, s, s)
    return float(np.clip(ss / sy, 1e-12, 1e12))


def sample_cone_directions(
    prob: AssimilationProblem, u: np.ndarray, lam: float, n: int, rng: np.random.Generator
):
    """Random directions projected into the constraint cone at ``u``.

    Inactive constraint: the whole space.  Active with lam = 0: flip
    the sign so the direction does not leave the ball to first order.
    Active with lam > 0: remove the component along the constraint
    gradient.  Every direction is normalized in L2 and verified to lie
    in the cone before being returned.
    """
    if n < 1:
        raise ConfigError(f"need at least one direction, got {n}")
    grid = prob.grid
    u = np.asarray(u, dtype=float)
    slack = constraint_value(prob.constraint, grid, u)
    active = _is_active(prob, slack)
    rep = constraint_gradient(prob.constraint, grid, u)
    rep_nsq = inner_product(grid, rep, rep)
    rep_norm = np.sqrt(rep_nsq)
    directions = []
    while len(directions) < n:
        h = rng.standard_normal(grid.node_count)
        if active and lam > 0.0:
            if rep_nsq == 0.0:
                raise DegenerateMultiplierError(
                    "cannot build the cone: constraint gradient vanishes"
                )
            h = h - (inner_product(grid, rep, h) / rep_nsq) * rep
        elif active:
            if inner_product(grid, rep, h) < 0.0:
                h = -h
        norm = l2_norm(grid, h)
        if norm < 1e-12:
            continue
        h = h / norm
        pairing = inner_product(grid, rep, h)
        if active and lam > 0.0:
            assert abs(pairing) <= 1e-10 * max(rep_norm, 1.0), "cone projection failed"
        elif active:
            assert pairing >= -1e-12 * max(rep_norm, 1.0), "cone flip failed"
        directions.append(h)
    return directions


def ssc_check(
    prob: AssimilationProblem,
    u: np.ndarray,
    lam: float,
    n_directions: int,
    seed: int = 0,
    dense_crosscheck: bool = False,
) -> SscReport:
    """Sampled coercivity of the Lagrangian form over the cone.

    Evaluates the Rayleigh quotient of the second-derivative form on
    ``n_directions`` sampled cone directions; certification requires
    the sampled minimum to clear the covariance coercivity constant
    (minus a tolerance) and a nonnegative pointwise curvature margin.

    ``dense_crosscheck=True`` additionally assembles the dense form via
    polarization (limited to 200 nodes) and reports its exact minimum
    quotient over the cone's linear hull.
    """
    if n_directions < 1:
        raise ConfigError(f"n_directions must be >= 1, got {n_directions}")
    u = np.asarray(u, dtype=float)
    evaluator = QuadraticFormEvaluator(prob, u, lam)
    rng = np.random.default_rng(seed)
    directions = sample_cone_directions(prob, u, lam, n_directions, rng)
    quotients = [evaluator.form(h) for h in directions]  # directions are unit-norm
    min_quotient = float(np.min(quotients))
    margin = coercivity_margin(prob, u)
    kappa = prob.covariance.kappa
    dense_min = None
    if dense_crosscheck:
        dense_min = _dense_min_quotient(prob, u, lam, evaluator)
    return SscReport(
        n_directions=n_directions,
        min_quotient=min_quotient,
        coercivity_margin=margin,
        kappa=kappa,
        certified=(min_quotient >= kappa - CERTIFY_TOL) and (margin >= 0.0),
        dense_min_quotient=dense_min,
    )


def _dense_min_quotient(prob, u, lam, evaluator) -> float:
    """Exact minimum Rayleigh quotient by dense assembly (small grids).

    The quotient is even in h, so for an inactive or zero-multiplier
    point the minimum over the cone equals the minimum over the whole
    space; for an active point with positive multiplier it is taken
    over the subspace orthogonal to the constraint gradient.
    """
    grid = prob.grid
    nc = grid.node_count
    if nc > _DENSE_LIMIT:
        raise ScaleError(f"dense cross-check limited to {_DENSE_LIMIT} nodes, got {nc}")
    basis_values = np.empty(nc)
    matrix = np.empty((nc, nc))
    unit = np.zeros(nc)
    for i in range(nc):
        unit[i] = 1.0
        basis_values[i] = evaluator.form(unit.copy())
        unit[i] = 0.0
    for i in range(nc):
        matrix[i, i] = basis_values[i]
        ei = np.zeros(nc)
        ei[i] = 1.0
        for j in range(i + 1, nc):
            ej = np.zeros(nc)
            ej[j] = 1.0
            mixed = evaluator.form(ei + ej)
            matrix[i, j] = matrix[j, i] = 0.5 * (mixed - basis_values[i] - basis_values[j])
    matrix = 0.5 * (matrix + matrix.T)
    slack = constraint_value(prob.constraint, grid, u)
    active = _is_active(prob, slack)
    if active and lam > 0.0:
        rep = constraint_gradient(prob.constraint, grid, u)
        null = scipy.linalg.null_space(rep[None, :])
        reduced = null.T @ matrix @ null
        eigvals = scipy.linalg.eigvalsh(0.5 * (reduced + reduced.T))
    else:
        eigvals = scipy.linalg.eigvalsh(matrix)
    return float(eigvals[0] / grid.quad_weight)


def quadratic_growth_probe(
    prob: AssimilationProblem,
    u_star: np.ndarray,
    lam: float,
    sigma: float,
    gamma_probe: float = 1e-3,
    n_pairs: int = 20,
    seed: int = 0,
    slack_abs: float | None = None,
) -> GrowthProbeReport:
    """Checks ``f(u* + s*h) >= f(u*) + sigma * ||s*h||**2`` on sampled pairs.

    Directions come from the same cone sampler as :func:`ssc_check`
    (same seed gives the same directions); step lengths cycle through
    ``gamma_probe * (1, 1/2, 1/4)``.  A pair is skipped and retried at
    half the step if the probe point leaves the ball.  ``slack_abs``
    is the numerical allowance on the growth inequality (default
    ``1e-9 * (1 + |f(u*)|)``, covering roundoff and the cubic
    remainder at the frozen probe radius).
    """
    u_star = np.asarray(u_star, dtype=float)
    grid = prob.grid
    f_star = evaluate_cost_parts(prob, u_star).total
    if slack_abs is None:
        slack_abs = 1e-9 * (1.0 + abs(f_star))
    rng = np.random.default_rng(seed)
    n_dirs = (n_pairs + 2) // 3 + 1
    directions = sample_cone_directions(prob, u_star, lam, n_dirs, rng)
    scales = (1.0, 0.5, 0.25)
    excesses = []
    pair = 0
    for h in directions:
        for scale in scales:
            if pair >= n_pairs:
                break
            s = gamma_probe * scale
            probe = u_star + s * h
            tries = 0
            while (
                constraint_value(prob.constraint, grid, probe)
                < -FEASIBILITY_SLACK_REL * prob.constraint.radius
            ):
                s *= 0.5
                probe = u_star + s * h
                tries += 1
                if tries > 60:
                    raise StagnationError("growth probe cannot find a feasible point")
            f_probe = evaluate_cost_parts(prob, probe).total
            excesses.append(f_probe - f_star - sigma * s * s)  # ||h||_L2 == 1
            pair += 1
        if pair >= n_pairs:
            break
    min_excess = float(np.min(excesses))
    return GrowthProbeReport(
        n_pairs=len(excesses),
        sigma=sigma,
        min_excess=min_excess,
        passed=bool(min_excess >= -slack_abs),
    )
