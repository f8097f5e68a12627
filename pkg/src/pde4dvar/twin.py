"""Twin-experiment driver: config -> problem -> data -> optimize -> report.

A twin experiment manufactures its own truth: the configured truth field
is forward-solved, sampled at the observation nodes and steps, optionally
perturbed with seeded Gaussian noise, and handed to the optimizer as data.
Recovery error against the known truth is then an honest quality measure.

Everything here is deterministic given the config seeds.  Wall-clock
timings are collected for stdout reporting but kept out of the exported
files so repeated runs produce byte-identical artifacts.
"""

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .assimilation import (
    AssimilationProblem,
    ConstraintSpec,
    DiagonalWeights,
    LaplacianForm,
    ObservationSet,
    ScaledIdentity,
    constraint_value,
    evaluate_cost_parts,
)
from .config import ExperimentConfig
from .errors import AssimilationError, ConfigError, ConfigNotFoundError
from .grid import DiffusionField, Grid, assemble_operator, build_grid, l2_norm, lp_integral
from .optimize import OptimConfig, kkt_check, optimize, ssc_check
from .stepping import Nonlinearity, TimeGrid, solve_semilinear

__all__ = [
    "ObservationPlan",
    "GeneratedData",
    "TwinResult",
    "build_grid_operator",
    "build_nonlinearity",
    "build_covariance",
    "truth_field",
    "resolve_observation_nodes",
    "generate_truth",
    "build_problem",
    "run_assimilation",
    "export_results",
    "export_vector",
    "export_trajectory",
    "load_vector",
]


@dataclass(frozen=True, eq=False)
class ObservationPlan:
    """Observation nodes after placement and snapping."""

    node_indices: np.ndarray
    requested: np.ndarray
    snap_distances: np.ndarray

    @property
    def max_snap_distance(self) -> float:
        return float(np.max(self.snap_distances)) if self.snap_distances.size else 0.0


@dataclass(frozen=True, eq=False)
class GeneratedData:
    """Synthetic truth and the observations sampled from it."""

    truth: np.ndarray
    plan: ObservationPlan
    observed_steps: np.ndarray
    clean_values: np.ndarray
    values: np.ndarray
    noise_sigma: float


@dataclass(eq=False)
class TwinResult:
    """Everything a twin run produced, ready for export."""

    config: ExperimentConfig
    truth: np.ndarray
    background: np.ndarray
    u_init: np.ndarray
    u_star: np.ndarray
    history: object
    kkt: object
    cost_parts: object
    l2_error: float
    l2_relative_error: float
    lbeta_error: float
    plan: ObservationPlan
    observed_steps: np.ndarray
    ssc: object = None
    timings: dict = None


def _phase(error: AssimilationError, phase: str) -> AssimilationError:
    if error.phase is None:
        error.phase = phase
    return error


def build_grid_operator(config: ExperimentConfig):
    grid = build_grid(config.grid.dim, config.grid.n)
    diff = config.diffusion
    if diff.constant is not None:
        field = DiffusionField.constant_field(diff.constant)
    else:
        field = DiffusionField.from_cells(np.asarray(diff.cells, dtype=float))
    operator = assemble_operator(grid, field)
    return grid, operator


def build_nonlinearity(section) -> Nonlinearity:
    if section.kind == "zero":
        return Nonlinearity.zero()
    return Nonlinearity.eps_sin(section.eps)


def build_covariance(section, grid: Grid, operator):
    if section.variant == "scaled_identity":
        return ScaledIdentity(section.alpha)
    if section.variant == "diagonal":
        weights = np.asarray(section.weights, dtype=float)
        if weights.shape != (grid.node_count,):
            raise ConfigError(
                "covariance.weights: expected "
                f"{grid.node_count} values, got {weights.size}"
            )
        return DiagonalWeights(weights)
    return LaplacianForm(section.gamma, operator)


def truth_field(grid: Grid, section) -> np.ndarray:
    """Evaluate the configured truth family on the interior nodes."""
    coords = grid.all_coordinates()
    if section.kind == "sine_modes":
        u = np.zeros(grid.node_count)
        for k, amplitude in section.modes:
            if len(k) != grid.dim:
                raise ConfigError(
                    f"truth.modes: mode index length {len(k)} does not match dim {grid.dim}"
                )
            term = np.full(grid.node_count, amplitude)
            for axis, k_axis in enumerate(k):
                term = term * np.sin(k_axis * np.pi * coords[:, axis])
            u += term
        return u
    if section.kind == "gaussian_bumps":
        u = np.zeros(grid.node_count)
        for center, width, amplitude in section.bumps:
            if len(center) != grid.dim:
                raise ConfigError(
                    f"truth.bumps: center length {len(center)} does not match dim {grid.dim}"
                )
            sq = np.sum((coords - np.asarray(center)) ** 2, axis=1)
            u += amplitude * np.exp(-sq / (2.0 * width * width))
        return u
    # file family
    u = load_vector(section.path)
    if u.shape != (grid.node_count,):
        raise ConfigError(
            f"truth.path: expected {grid.node_count} values, got {u.size}"
        )
    return u


def resolve_observation_nodes(grid: Grid, section) -> ObservationPlan:
    """Turn the observation spec into interior node indices.

    Explicit coordinates are snapped to the nearest interior node and the
    snap distance recorded.  The equispaced rule places `count` points at
    (i+1)/(count+1) in 1D; in 2D it fills a square product grid of the
    smallest side that holds `count` points and takes the first `count`
    in row-major order.  Two requests landing on the same node is a
    config error: the observation functional would silently double-count.
    """
    if section.points is not None:
        requested = np.asarray(section.points, dtype=float)
        if requested.ndim != 2 or requested.shape[1] != grid.dim:
            raise ConfigError(
                f"observations.points: expected shape (n, {grid.dim}), got {requested.shape}"
            )
    else:
        count = section.count
        if grid.dim == 1:
            requested = ((np.arange(count) + 1.0) / (count + 1.0)).reshape(-1, 1)
        else:
            side = math.isqrt(count)
            if side * side < count:
                side += 1
            axis = (np.arange(side) + 1.0) / (side + 1.0)
            xx, yy = np.meshgrid(axis, axis, indexing="ij")
            requested = np.column_stack([xx.ravel(), yy.ravel()])[:count]
    indices = np.empty(len(requested), dtype=np.intp)
    distances = np.empty(len(requested))
    for i, point in enumerate(requested):
        indices[i], distances[i] = grid.nearest_interior_node(point)
    if len(np.unique(indices)) != len(indices):
        raise ConfigError("observations: two points snap to the same interior node")
    return ObservationPlan(
        node_indices=indices, requested=requested, snap_distances=distances
    )


def _time_grid(config: ExperimentConfig) -> TimeGrid:
    return TimeGrid(t_final=config.time.t_final, n_steps=config.time.n_steps)


def generate_truth(config: ExperimentConfig) -> GeneratedData:
    """Forward-solve the truth and sample synthetic observations."""
    try:
        grid, operator = build_grid_operator(config)
        time_grid = _time_grid(config)
        g = build_nonlinearity(config.nonlinearity)
        truth = truth_field(grid, config.truth)
        plan = resolve_observation_nodes(grid, config.observations)
        observed_steps = np.arange(
            config.observations.stride,
            time_grid.n_steps + 1,
            config.observations.stride,
            dtype=np.intp,
        )
        if observed_steps.size == 0:
            raise ConfigError(
                "observations.stride: no observed steps within the time window"
            )
        trajectory = solve_semilinear(operator, time_grid, truth, g)
        clean = trajectory.snapshots[np.ix_(observed_steps, plan.node_indices)].T
        sigma = config.observations.noise_sigma
        if sigma > 0.0:
            rng = np.random.default_rng(config.observations.seed)
            values = clean + sigma * rng.standard_normal(clean.shape)
        else:
            values = clean.copy()
        return GeneratedData(
            truth=truth,
            plan=plan,
            observed_steps=observed_steps,
            clean_values=clean,
            values=values,
            noise_sigma=sigma,
        )
    except AssimilationError as exc:
        raise _phase(exc, "generate")


def _background_field(config: ExperimentConfig, truth: np.ndarray) -> np.ndarray:
    section = config.background
    if section.kind == "truth":
        return truth.copy()
    if section.kind == "zero":
        return np.zeros_like(truth)
    rng = np.random.default_rng(section.seed)
    return truth + section.sigma * rng.standard_normal(truth.shape)


def build_problem(config: ExperimentConfig):
    """Assemble the reduced assimilation problem plus its synthetic data."""
    data = generate_truth(config)
    try:
        grid, operator = build_grid_operator(config)
        time_grid = _time_grid(config)
        g = build_nonlinearity(config.nonlinearity)
        observations = ObservationSet(
            points=data.plan.node_indices,
            stride=config.observations.stride,
            values=data.values,
            noise_sigma=data.noise_sigma,
        )
        covariance = build_covariance(config.covariance, grid, operator)
        background = _background_field(config, data.truth)
        constraint = ConstraintSpec(
            radius=config.constraint.radius, beta=config.constraint.beta
        )
        problem = AssimilationProblem(
            grid=grid,
            time_grid=time_grid,
            operator=operator,
            nonlinearity=g,
            observations=observations,
            covariance=covariance,
            background=background,
            constraint=constraint,
        )
        return problem, data
    except AssimilationError as exc:
        raise _phase(exc, "config")


def _initial_guess(config: ExperimentConfig, problem, data) -> np.ndarray:
    init = config.optimizer.init
    if init == "zero":
        return np.zeros(problem.grid.node_count)
    if init == "truth":
        return data.truth.copy()
    return problem.background.copy()


def run_assimilation(config: ExperimentConfig) -> TwinResult:
    """Run the full twin pipeline and return a fresh-cost result."""
    timings = {}
    tic = time.perf_counter()
    problem, data = build_problem(config)
    timings["generate"] = time.perf_counter() - tic

    opt_config = OptimConfig(
        max_iters=config.optimizer.max_iters,
        armijo_c1=config.optimizer.armijo_c1,
        armijo_shrink=config.optimizer.armijo_shrink,
        init_step=config.optimizer.init_step,
        kkt_tol=config.optimizer.kkt_tol,
        seed=config.optimizer.seed,
    )
    u_init = _initial_guess(config, problem, data)
    tic = time.perf_counter()
    try:
        u_star, history = optimize(problem, opt_config, u_init)
    except AssimilationError as exc:
        raise _phase(exc, "optimize")
    timings["optimize"] = time.perf_counter() - tic

    tic = time.perf_counter()
    try:
        report = kkt_check(problem, u_star)
        cost_parts = evaluate_cost_parts(problem, u_star)
    except AssimilationError as exc:
        raise _phase(exc, "kkt")
    timings["kkt"] = time.perf_counter() - tic

    ssc_report = None
    if config.ssc.enabled:
        tic = time.perf_counter()
        try:
            ssc_report = ssc_check(
                problem,
                u_star,
                report.multiplier,
                n_directions=config.ssc.n_directions,
                seed=config.ssc.seed,
                dense_crosscheck=config.ssc.dense_crosscheck,
            )
        except AssimilationError as exc:
            raise _phase(exc, "ssc")
        timings["ssc"] = time.perf_counter() - tic

    diff = u_star - data.truth
    truth_norm = l2_norm(problem.grid, data.truth)
    l2_err = l2_norm(problem.grid, diff)
    beta = config.constraint.beta
    lbeta_err = lp_integral(problem.grid, diff, beta) ** (1.0 / beta)
    return TwinResult(
        config=config,
        truth=data.truth,
        background=problem.background,
        u_init=u_init,
        u_star=u_star,
        history=history,
        kkt=report,
        cost_parts=cost_parts,
        l2_error=l2_err,
        l2_relative_error=l2_err / truth_norm if truth_norm > 0.0 else l2_err,
        lbeta_error=lbeta_err,
        plan=data.plan,
        observed_steps=data.observed_steps,
        ssc=ssc_report,
        timings=timings,
    )


def _float_cell(x) -> str:
    return repr(float(x))


def export_vector(values: np.ndarray, path: str, fmt: str = "csv"):
    """Write a node vector as one value per line (csv) or a JSON list."""
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "json":
            json.dump([float(v) for v in values], fh)
            fh.write("\n")
        else:
            fh.write("value\n")
            for v in values:
                fh.write(_float_cell(v) + "\n")


def load_vector(path: str) -> np.ndarray:
    """Read a vector written by export_vector (either format)."""
    if not os.path.exists(path):
        raise ConfigNotFoundError(f"state file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            return np.asarray(json.loads(text), dtype=float)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"state file is not a JSON vector: {exc}")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and lines[0].strip() == "value":
        lines = lines[1:]
    try:
        return np.asarray([float(ln) for ln in lines])
    except ValueError as exc:
        raise ConfigError(f"state file is not a numeric column: {exc}")


def export_trajectory(time_grid: TimeGrid, trajectory, path: str, fmt: str = "csv"):
    """Write a full trajectory: rows are time levels, columns are nodes."""
    times = time_grid.times()
    snaps = trajectory.snapshots
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "json":
            payload = {
                "times": [float(t) for t in times],
                "snapshots": [[float(v) for v in row] for row in snaps],
            }
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
            return
        header = "t," + ",".join(f"u{j}" for j in range(snaps.shape[1]))
        fh.write(header + "\n")
        for t, row in zip(times, snaps):
            fh.write(_float_cell(t) + "," + ",".join(_float_cell(v) for v in row) + "\n")


def _history_rows(history) -> str:
    lines = ["iteration,cost,step,slack,grad_residual"]
    for it, cost, step, slack, res in history.rows():
        lines.append(
            f"{it},{_float_cell(cost)},{_float_cell(step)},"
            f"{_float_cell(slack)},{_float_cell(res)}"
        )
    return "\n".join(lines) + "\n"


def result_summary(result: TwinResult) -> dict:
    """Deterministic JSON-ready summary (timings intentionally excluded)."""
    spec = ConstraintSpec(
        radius=result.config.constraint.radius, beta=result.config.constraint.beta
    )
    grid = build_grid(result.config.grid.dim, result.config.grid.n)
    slack = constraint_value(spec, grid, result.u_star)
    summary = {
        "config": result.config.to_dict(),
        "optimize": {
            "iterations": int(result.history.iterations[-1])
            if result.history.iterations
            else 0,
            "converged": bool(result.history.converged),
            "reason": result.history.reason,
        },
        "cost": {
            "misfit": float(result.cost_parts.misfit),
            "background": float(result.cost_parts.background),
            "total": float(result.cost_parts.total),
        },
        "kkt": result.kkt.to_dict(),
        "recovery": {
            "l2_error": float(result.l2_error),
            "l2_relative_error": float(result.l2_relative_error),
            "lbeta_error": float(result.lbeta_error),
        },
        "constraint": {"slack": float(slack)},
        "observations": {
            "n_points": int(result.plan.node_indices.size),
            "n_observed_steps": int(result.observed_steps.size),
            "max_snap_distance": float(result.plan.max_snap_distance),
        },
        "ssc": result.ssc.to_dict() if result.ssc is not None else None,
    }
    return summary


def export_results(result: TwinResult, out_dir: str, fmt: str = "csv"):
    """Write result.json, history.csv and the three node vectors."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(result_summary(result), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "history.csv"), "w", encoding="utf-8") as fh:
        fh.write(_history_rows(result.history))
    ext = "json" if fmt == "json" else "csv"
    export_vector(result.u_star, os.path.join(out_dir, f"u_star.{ext}"), fmt)
    export_vector(result.truth, os.path.join(out_dir, f"u_truth.{ext}"), fmt)
    export_vector(result.background, os.path.join(out_dir, f"u_background.{ext}"), fmt)
