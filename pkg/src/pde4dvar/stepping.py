"""Time integration of the parabolic state equation.

The evolution law is ``dy/dt + A y + g(y) = 0`` with ``A`` the assembled
diffusion operator and ``g`` a pointwise nonlinearity.  The workhorse
scheme is implicit Euler with the nonlinearity treated explicitly:

    (I + dt*A) y[m+1] = y[m] - dt*g(y[m])

so every step reuses one factorization of ``I + dt*A``.  With ``g = 0``
and an optional source the same marcher solves the linear problem
``(I + dt*A) y[m+1] = y[m] + dt*l[m+1]``.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigError,
    DegeneratePairError,
    NonlinearityError,
    OracleError,
    ScaleError,
    SolverError,
)
from .grid import DiscreteOperator, Grid, l2_norm

__all__ = [
    "TimeGrid",
    "Nonlinearity",
    "StateTrajectory",
    "StepSolver",
    "solve_linear",
    "solve_semilinear",
    "mild_solution_oracle",
    "lipschitz_probe",
]

# Above this node count the direct factorization gives way to CG.
_DIRECT_SOLVE_LIMIT = 65536

# Hard cap for the dense matrix-exponential oracle.
_ORACLE_NODE_LIMIT = 256


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, t_final] into n_steps implicit Euler steps."""

    t_final: float
    n_steps: int

    def __post_init__(self):
        if not self.t_final > 0.0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise nonlinearity with its derivatives and growth data.

    ``g``, ``g_y`` and ``g_yy`` act elementwise on state arrays.
    ``bound_g`` bounds |g|, ``bound_gy`` bounds |g'|, ``bound_gyy``
    bounds |g''| and ``lipschitz_gyy`` is a Lipschitz constant of g''.
    """

    g: Callable
    g_y: Callable
    g_yy: Callable
    bound_g: float
    bound_gy: float
    bound_gyy: float
    lipschitz_gyy: float
    name: str = "custom"
    is_zero: bool = False

    @classmethod
    def zero(cls) -> "Nonlinearity":
        """The identically vanishing nonlinearity (linear dynamics)."""
        return cls(
            g=np.zeros_like,
            g_y=np.zeros_like,
            g_yy=np.zeros_like,
            bound_g=0.0,
            bound_gy=0.0,
            bound_gyy=0.0,
            lipschitz_gyy=0.0,
            name="zero",
            is_zero=True,
        )

    @classmethod
    def eps_sin(cls, eps: float) -> "Nonlinearity":
        """g(y) = eps*sin(y): bounded with bounded, Lipschitz derivatives."""
        if not eps > 0.0:
            raise ConfigError(f"eps_sin amplitude must be positive, got {eps}")
        return cls(
            g=lambda y: eps * np.sin(y),
            g_y=lambda y: eps * np.cos(y),
            g_yy=lambda y: -eps * np.sin(y),
            bound_g=eps,
            bound_gy=eps,
            bound_gyy=eps,
            lipschitz_gyy=eps,
            name="eps_sin",
            is_zero=False,
        )


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Snapshots of a time march: row m is the state at step m."""

    snapshots: np.ndarray

    def __post_init__(self):
        snaps = np.asarray(self.snapshots, dtype=float)
        if snaps.ndim != 2:
            raise ConfigError(f"trajectory needs a 2D array, got shape {snaps.shape}")
        object.__setattr__(self, "snapshots", snaps)

    @property
    def n_steps(self) -> int:
        return self.snapshots.shape[0] - 1

    @property
    def node_count(self) -> int:
        return self.snapshots.shape[1]

    def at_points(self, points: np.ndarray) -> np.ndarray:
        """Values at the given flat node indices, shape (n_steps+1, n_pts)."""
        return self.snapshots[:, points]


class StepSolver:
    """Solves ``(I + dt*A) x = b`` repeatedly.

    One sparse LU factorization per (operator, dt) pair for moderate
    sizes; unpreconditioned CG above ``_DIRECT_SOLVE_LIMIT`` nodes (the
    matrix is SPD and well conditioned for parabolic step sizes).
    Stateless after construction, safe to share.
    """

    def __init__(self, operator: DiscreteOperator, dt: float, method: str = "auto"):
        n = operator.grid.node_count
        self.matrix = (sp.eye_array(n, format="csc") + dt * operator.matrix.tocsc()).tocsc()
        if method == "auto":
            method = "direct" if n <= _DIRECT_SOLVE_LIMIT else "cg"
        if method not in ("direct", "cg"):
            raise ConfigError(f"unknown step solver method {method!r}")
        self.method = method
        if method == "direct":
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:  # pragma: no cover - SPD never fails here
                raise SolverError(f"factorization of the step matrix failed: {exc}")
        else:
            self._lu = None
            self._csr = self.matrix.tocsr()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            return self._lu.solve(rhs)
        iters = 0

        def count(_):
            nonlocal iters
            iters += 1

        x, info = spla.cg(self._csr, rhs, rtol=1e-14, atol=0.0, maxiter=2000, callback=count)
        if info != 0:
            raise SolverError(
                "CG did not converge on the step system",
                info=int(info),
                iterations=iters,
            )
        return x


def _march(solver: StepSolver, u0: np.ndarray, n_steps: int, rhs_of) -> np.ndarray:
    out = np.empty((n_steps + 1, u0.shape[0]))
    out[0] = u0
    for m in range(n_steps):
        out[m + 1] = solver.solve(rhs_of(m, out[m]))
    return out


def solve_linear(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    u0: np.ndarray,
    source: np.ndarray | None = None,
    solver: StepSolver | None = None,
) -> StateTrajectory:
    """March the linear equation ``dy/dt + A y = l``.

    ``source`` is either None (homogeneous) or an array of shape
    ``(n_steps + 1, node_count)`` whose row ``m + 1`` enters the step to
    time level ``m + 1``; row 0 is unused.
    """
    u0 = np.asarray(u0, dtype=float)
    _check_state(operator.grid, u0)
    dt = time_grid.dt
    if source is not None:
        source = np.asarray(source, dtype=float)
        want = (time_grid.n_steps + 1, operator.grid.node_count)
        if source.shape != want:
            raise ConfigError(f"source has shape {source.shape}, expected {want}")
    if solver is None:
        solver = StepSolver(operator, dt)
    if source is None:
        rhs_of = lambda m, y: y
    else:
        rhs_of = lambda m, y: y + dt * source[m + 1]
    return StateTrajectory(_march(solver, u0, time_grid.n_steps, rhs_of))


def solve_semilinear(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    u0: np.ndarray,
    g: Nonlinearity,
    solver: StepSolver | None = None,
) -> StateTrajectory:
    """March ``dy/dt + A y + g(y) = 0`` with g frozen at the old state.

    With ``g = Nonlinearity.zero()`` the marcher takes the same code
    path as :func:`solve_linear` without source, so the two agree bit
    for bit.
    """
    u0 = np.asarray(u0, dtype=float)
    _check_state(operator.grid, u0)
    dt = time_grid.dt
    if solver is None:
        solver = StepSolver(operator, dt)
    if g.is_zero:
        rhs_of = lambda m, y: y
    else:

        def rhs_of(m, y):
            gy = g.g(y)
            if not np.all(np.isfinite(gy)):
                raise NonlinearityError(
                    "nonlinearity produced a non-finite value", step=m
                )
            return y - dt * gy

    return StateTrajectory(_march(solver, u0, time_grid.n_steps, rhs_of))


def _check_state(grid: Grid, u0: np.ndarray):
    if u0.shape != (grid.node_count,):
        raise ConfigError(
            f"initial state has shape {u0.shape}, expected ({grid.node_count},)"
        )


def mild_solution_oracle(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    u0: np.ndarray,
    g: Nonlinearity,
    picard_iters: int = 30,
    stagnation_tol: float = 1e-12,
    return_diffs: bool = False,
):
    """Reference solution through the integral form of the evolution.

    Evaluates ``y(t) = exp(-t A) u0 - int_0^t exp(-(t-s) A) g(y(s)) ds``
    on the time grid with a dense matrix exponential, trapezoidal
    quadrature in ``s`` and Picard iteration on ``y``.  Completely
    independent of the marching scheme; used to validate it.

    Limited to ``node_count <= 256`` (dense propagator).  Raises
    :class:`OracleError` if the fixed-point iteration diverges.
    """
    grid = operator.grid
    u0 = np.asarray(u0, dtype=float)
    _check_state(grid, u0)
    if grid.node_count > _ORACLE_NODE_LIMIT:
        raise ScaleError(
            f"the dense oracle is limited to {_ORACLE_NODE_LIMIT} nodes, "
            f"got {grid.node_count}"
        )
    n_steps = time_grid.n_steps
    dt = time_grid.dt
    propagator = scipy.linalg.expm(-dt * operator.matrix.toarray())

    linear_part = np.empty((n_steps + 1, grid.node_count))
    linear_part[0] = u0
    for m in range(n_steps):
        linear_part[m + 1] = propagator @ linear_part[m]
    if g.is_zero:
        if return_diffs:
            return StateTrajectory(linear_part), []
        return StateTrajectory(linear_part)

    scale = max(1.0, float(np.max(np.abs(u0))))
    y = linear_part.copy()
    diffs = []
    for _ in range(picard_iters):
        gy = g.g(y)
        if not np.all(np.isfinite(gy)):
            raise NonlinearityError("nonlinearity produced a non-finite value in the oracle")
        duhamel = np.zeros_like(y)
        # Trapezoid over [0, t_m] split into endpoint terms and the
        # running interior sum S_m = sum_{i=1}^{m-1} E^(m-i) g_i, which
        # satisfies S_m = E (S_{m-1} + g_{m-1}).
        endpoint0 = gy[0].copy()  # becomes E^m g_0
        interior = np.zeros(grid.node_count)
        for m in range(1, n_steps + 1):
            endpoint0 = propagator @ endpoint0
            if m >= 2:
                interior = propagator @ (interior + gy[m - 1])
            duhamel[m] = dt * (0.5 * endpoint0 + interior + 0.5 * gy[m])
        y_next = linear_part - duhamel
        diff = float(np.max(np.abs(y_next - y))) / scale
        diffs.append(diff)
        y = y_next
        if diff < stagnation_tol:
            break
        if len(diffs) >= 2 and diff > 10.0 * diffs[-2] and diff > 1e-6:
            raise OracleError(
                "Picard iteration diverged", diffs=[float(d) for d in diffs]
            )
    traj = StateTrajectory(y)
    if return_diffs:
        return traj, diffs
    return traj


def lipschitz_probe(
    operator: DiscreteOperator,
    time_grid: TimeGrid,
    u1: np.ndarray,
    u2: np.ndarray,
    g: Nonlinearity,
) -> float:
    """Ratio sup_m ||S(u1)[m] - S(u2)[m]|| / ||u1 - u2|| in the grid L2 norm.

    Empirical stability certificate of the solution map; bounded by
    exp(bound_gy * t_final) for the marching scheme.
    """
    grid = operator.grid
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    denom = l2_norm(grid, u1 - u2)
    if denom == 0.0:
        raise DegeneratePairError("lipschitz probe needs two distinct initial states")
    solver = StepSolver(operator, time_grid.dt)
    y1 = solve_semilinear(operator, time_grid, u1, g, solver=solver)
    y2 = solve_semilinear(operator, time_grid, u2, g, solver=solver)
    gaps = y1.snapshots - y2.snapshots
    sup = max(l2_norm(grid, row) for row in gaps)
    return sup / denom
