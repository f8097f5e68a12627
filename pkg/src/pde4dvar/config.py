"""Experiment configuration: a single nested JSON document.

The accepted schema is documented in the README.  Parsing is strict:
unknown keys, wrong types and out-of-range values raise
:class:`ConfigError` naming the offending section.  ``parse`` and
``serialize`` are inverse up to JSON number normalization, so
``parse(serialize(cfg)) == cfg`` for every valid config object.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ConfigError, ConfigNotFoundError

__all__ = [
    "GridSection",
    "TimeSection",
    "DiffusionSection",
    "NonlinearitySection",
    "ObservationSection",
    "CovarianceSection",
    "BackgroundSection",
    "ConstraintSection",
    "TruthSection",
    "OptimizerSection",
    "SscSection",
    "ExperimentConfig",
    "parse",
    "serialize",
    "load_config",
    "save_config",
]


def _section(raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    return dict(raw)


def _no_leftovers(raw, where):
    if raw:
        raise ConfigError(f"{where}: unknown keys {sorted(raw)}")


def _take(raw, key, where, kind, required=True, default=None):
    if key not in raw:
        if required:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    value = raw.pop(key)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{key}: expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}.{key}: expected a list, got {value!r}")
        return value
    raise AssertionError(f"unsupported kind {kind}")


def _float_list(values, where):
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected numbers, got {v!r}")
        out.append(float(v))
    return out


@dataclass(frozen=True)
class GridSection:
    dim: int
    n: int

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "grid")
        out = cls(dim=_take(raw, "dim", "grid", int), n=_take(raw, "n", "grid", int))
        _no_leftovers(raw, "grid")
        return out

    def to_dict(self):
        return {"dim": self.dim, "n": self.n}


@dataclass(frozen=True)
class TimeSection:
    t_final: float
    n_steps: int

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "time")
        out = cls(
            t_final=_take(raw, "t_final", "time", float),
            n_steps=_take(raw, "n_steps", "time", int),
        )
        _no_leftovers(raw, "time")
        return out

    def to_dict(self):
        return {"t_final": self.t_final, "n_steps": self.n_steps}


@dataclass(frozen=True)
class DiffusionSection:
    constant: float | None = None
    cells: tuple | None = None

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "diffusion")
        constant = _take(raw, "constant", "diffusion", float, required=False)
        cells_raw = _take(raw, "cells", "diffusion", list, required=False)
        _no_leftovers(raw, "diffusion")
        if (constant is None) == (cells_raw is None):
            raise ConfigError("diffusion: provide exactly one of 'constant' or 'cells'")
        cells = None
        if cells_raw is not None:
            if cells_raw and isinstance(cells_raw[0], list):
                cells = tuple(tuple(_float_list(row, "diffusion.cells")) for row in cells_raw)
            else:
                cells = tuple(_float_list(cells_raw, "diffusion.cells"))
        return cls(constant=constant, cells=cells)

    def to_dict(self):
        if self.constant is not None:
            return {"constant": self.constant}
        if self.cells and isinstance(self.cells[0], tuple):
            return {"cells": [list(row) for row in self.cells]}
        return {"cells": list(self.cells)}


@dataclass(frozen=True)
class NonlinearitySection:
    kind: str = "zero"
    eps: float | None = None

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "nonlinearity")
        kind = _take(raw, "kind", "nonlinearity", str)
        eps = _take(raw, "eps", "nonlinearity", float, required=False)
        _no_leftovers(raw, "nonlinearity")
        if kind not in ("zero", "eps_sin"):
            raise ConfigError(f"nonlinearity.kind: unknown kind {kind!r}")
        if kind == "eps_sin" and eps is None:
            raise ConfigError("nonlinearity: eps_sin requires 'eps'")
        if kind == "zero" and eps is not None:
            raise ConfigError("nonlinearity: 'eps' is only valid with eps_sin")
        return cls(kind=kind, eps=eps)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.eps is not None:
            out["eps"] = self.eps
        return out


@dataclass(frozen=True)
class ObservationSection:
    points: tuple | None = None
    count: int | None = None
    placement: str = "equispaced"
    stride: int = 1
    noise_sigma: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "observations")
        points_raw = _take(raw, "points", "observations", list, required=False)
        count = _take(raw, "count", "observations", int, required=False)
        placement = _take(
            raw, "placement", "observations", str, required=False, default="equispaced"
        )
        stride = _take(raw, "stride", "observations", int, required=False, default=1)
        noise_sigma = _take(
            raw, "noise_sigma", "observations", float, required=False, default=0.0
        )
        seed = _take(raw, "seed", "observations", int, required=False, default=0)
        _no_leftovers(raw, "observations")
        if (points_raw is None) == (count is None):
            raise ConfigError("observations: provide exactly one of 'points' or 'count'")
        points = None
        if points_raw is not None:
            if not points_raw:
                raise ConfigError("observations.points: must not be empty")
            points = tuple(
                tuple(_float_list(pt, "observations.points")) for pt in points_raw
            )
        if count is not None and count < 1:
            raise ConfigError("observations.count: must be >= 1")
        if placement != "equispaced":
            raise ConfigError(f"observations.placement: unknown rule {placement!r}")
        if stride < 1:
            raise ConfigError("observations.stride: must be >= 1")
        if noise_sigma < 0.0:
            raise ConfigError("observations.noise_sigma: must be >= 0")
        return cls(
            points=points,
            count=count,
            placement=placement,
            stride=stride,
            noise_sigma=noise_sigma,
            seed=seed,
        )

    def to_dict(self):
        out = {}
        if self.points is not None:
            out["points"] = [list(pt) for pt in self.points]
        if self.count is not None:
            out["count"] = self.count
            out["placement"] = self.placement
        out["stride"] = self.stride
        out["noise_sigma"] = self.noise_sigma
        out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class CovarianceSection:
    variant: str
    alpha: float | None = None
    weights: tuple | None = None
    gamma: float | None = None

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "covariance")
        variant = _take(raw, "variant", "covariance", str)
        alpha = _take(raw, "alpha", "covariance", float, required=False)
        weights_raw = _take(raw, "weights", "covariance", list, required=False)
        gamma = _take(raw, "gamma", "covariance", float, required=False)
        _no_leftovers(raw, "covariance")
        if variant == "scaled_identity":
            if alpha is None or weights_raw is not None or gamma is not None:
                raise ConfigError("covariance: scaled_identity takes exactly 'alpha'")
        elif variant == "diagonal":
            if weights_raw is None or alpha is not None or gamma is not None:
                raise ConfigError("covariance: diagonal takes exactly 'weights'")
        elif variant == "laplacian":
            if gamma is None or alpha is not None or weights_raw is not None:
                raise ConfigError("covariance: laplacian takes exactly 'gamma'")
        else:
            raise ConfigError(f"covariance.variant: unknown variant {variant!r}")
        weights = (
            tuple(_float_list(weights_raw, "covariance.weights"))
            if weights_raw is not None
            else None
        )
        return cls(variant=variant, alpha=alpha, weights=weights, gamma=gamma)

    def to_dict(self):
        out = {"variant": self.variant}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


@dataclass(frozen=True)
class BackgroundSection:
    kind: str = "truth"
    sigma: float | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "background")
        kind = _take(raw, "kind", "background", str)
        sigma = _take(raw, "sigma", "background", float, required=False)
        seed = _take(raw, "seed", "background", int, required=False, default=0)
        _no_leftovers(raw, "background")
        if kind not in ("truth", "zero", "perturbed"):
            raise ConfigError(f"background.kind: unknown kind {kind!r}")
        if kind == "perturbed" and (sigma is None or sigma < 0.0):
            raise ConfigError("background: perturbed requires 'sigma' >= 0")
        if kind != "perturbed" and sigma is not None:
            raise ConfigError("background: 'sigma' is only valid with perturbed")
        return cls(kind=kind, sigma=sigma, seed=seed)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.kind == "perturbed":
            out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class ConstraintSection:
    radius: float
    beta: float = 6.5

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "constraint")
        out = cls(
            radius=_take(raw, "radius", "constraint", float),
            beta=_take(raw, "beta", "constraint", float, required=False, default=6.5),
        )
        _no_leftovers(raw, "constraint")
        return out

    def to_dict(self):
        return {"radius": self.radius, "beta": self.beta}


@dataclass(frozen=True)
class TruthSection:
    kind: str
    modes: tuple | None = None
    bumps: tuple | None = None
    path: str | None = None

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "truth")
        kind = _take(raw, "kind", "truth", str)
        modes_raw = _take(raw, "modes", "truth", list, required=False)
        bumps_raw = _take(raw, "bumps", "truth", list, required=False)
        path = _take(raw, "path", "truth", str, required=False)
        _no_leftovers(raw, "truth")
        if kind == "sine_modes":
            if not modes_raw or bumps_raw is not None or path is not None:
                raise ConfigError("truth: sine_modes takes exactly a non-empty 'modes'")
            modes = []
            for i, m in enumerate(modes_raw):
                m = _section(m, f"truth.modes[{i}]")
                k = _take(m, "k", f"truth.modes[{i}]", list)
                amplitude = _take(m, "amplitude", f"truth.modes[{i}]", float)
                _no_leftovers(m, f"truth.modes[{i}]")
                k_tuple = []
                for kk in k:
                    if isinstance(kk, bool) or not isinstance(kk, int) or kk < 1:
                        raise ConfigError(
                            f"truth.modes[{i}].k: expected positive integers, got {kk!r}"
                        )
                    k_tuple.append(kk)
                modes.append((tuple(k_tuple), amplitude))
            return cls(kind=kind, modes=tuple(modes))
        if kind == "gaussian_bumps":
            if not bumps_raw or modes_raw is not None or path is not None:
                raise ConfigError("truth: gaussian_bumps takes exactly a non-empty 'bumps'")
            bumps = []
            for i, b in enumerate(bumps_raw):
                b = _section(b, f"truth.bumps[{i}]")
                center = tuple(
                    _float_list(_take(b, "center", f"truth.bumps[{i}]", list),
                                f"truth.bumps[{i}].center")
                )
                width = _take(b, "width", f"truth.bumps[{i}]", float)
                amplitude = _take(b, "amplitude", f"truth.bumps[{i}]", float)
                _no_leftovers(b, f"truth.bumps[{i}]")
                if not width > 0.0:
                    raise ConfigError(f"truth.bumps[{i}].width: must be positive")
                bumps.append((center, width, amplitude))
            return cls(kind=kind, bumps=tuple(bumps))
        if kind == "file":
            if path is None or modes_raw is not None or bumps_raw is not None:
                raise ConfigError("truth: file takes exactly 'path'")
            return cls(kind=kind, path=path)
        raise ConfigError(f"truth.kind: unknown kind {kind!r}")

    def to_dict(self):
        out = {"kind": self.kind}
        if self.modes is not None:
            out["modes"] = [{"k": list(k), "amplitude": amp} for k, amp in self.modes]
        if self.bumps is not None:
            out["bumps"] = [
                {"center": list(c), "width": w, "amplitude": a} for c, w, a in self.bumps
            ]
        if self.path is not None:
            out["path"] = self.path
        return out


@dataclass(frozen=True)
class OptimizerSection:
    max_iters: int = 500
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    init_step: float = 1.0
    kkt_tol: float = 1e-8
    init: str = "background"
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "optimizer")
        out = cls(
            max_iters=_take(raw, "max_iters", "optimizer", int, required=False, default=500),
            armijo_c1=_take(raw, "armijo_c1", "optimizer", float, required=False, default=1e-4),
            armijo_shrink=_take(
                raw, "armijo_shrink", "optimizer", float, required=False, default=0.5
            ),
            init_step=_take(raw, "init_step", "optimizer", float, required=False, default=1.0),
            kkt_tol=_take(raw, "kkt_tol", "optimizer", float, required=False, default=1e-8),
            init=_take(raw, "init", "optimizer", str, required=False, default="background"),
            seed=_take(raw, "seed", "optimizer", int, required=False, default=0),
        )
        _no_leftovers(raw, "optimizer")
        if out.init not in ("background", "zero", "truth"):
            raise ConfigError(f"optimizer.init: unknown start {out.init!r}")
        return out

    def to_dict(self):
        return {
            "max_iters": self.max_iters,
            "armijo_c1": self.armijo_c1,
            "armijo_shrink": self.armijo_shrink,
            "init_step": self.init_step,
            "kkt_tol": self.kkt_tol,
            "init": self.init,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SscSection:
    enabled: bool = False
    n_directions: int = 16
    seed: int = 0
    dense_crosscheck: bool = False

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "ssc")
        out = cls(
            enabled=_take(raw, "enabled", "ssc", bool, required=False, default=False),
            n_directions=_take(raw, "n_directions", "ssc", int, required=False, default=16),
            seed=_take(raw, "seed", "ssc", int, required=False, default=0),
            dense_crosscheck=_take(
                raw, "dense_crosscheck", "ssc", bool, required=False, default=False
            ),
        )
        _no_leftovers(raw, "ssc")
        if out.n_directions < 1:
            raise ConfigError("ssc.n_directions: must be >= 1")
        return out

    def to_dict(self):
        return {
            "enabled": self.enabled,
            "n_directions": self.n_directions,
            "seed": self.seed,
            "dense_crosscheck": self.dense_crosscheck,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSection
    time: TimeSection
    diffusion: DiffusionSection
    nonlinearity: NonlinearitySection
    observations: ObservationSection
    covariance: CovarianceSection
    background: BackgroundSection
    constraint: ConstraintSection
    truth: TruthSection
    optimizer: OptimizerSection
    ssc: SscSection

    @classmethod
    def from_dict(cls, raw):
        raw = _section(raw, "config")
        sections = {
            "grid": GridSection,
            "time": TimeSection,
            "diffusion": DiffusionSection,
            "nonlinearity": NonlinearitySection,
            "observations": ObservationSection,
            "covariance": CovarianceSection,
            "background": BackgroundSection,
            "constraint": ConstraintSection,
            "truth": TruthSection,
        }
        values = {}
        for name, section_cls in sections.items():
            if name not in raw:
                raise ConfigError(f"config: missing required section {name!r}")
            values[name] = section_cls.from_dict(raw.pop(name))
        values["optimizer"] = OptimizerSection.from_dict(raw.pop("optimizer", {}))
        values["ssc"] = SscSection.from_dict(raw.pop("ssc", {}))
        _no_leftovers(raw, "config")
        return cls(**values)

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "time": self.time.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "nonlinearity": self.nonlinearity.to_dict(),
            "observations": self.observations.to_dict(),
            "covariance": self.covariance.to_dict(),
            "background": self.background.to_dict(),
            "constraint": self.constraint.to_dict(),
            "truth": self.truth.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "ssc": self.ssc.to_dict(),
        }

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        """Derive all per-purpose seeds from one master seed.

        observations get ``seed``, the background perturbation
        ``seed + 1``, the optimizer ``seed + 2`` and the direction
        sampler ``seed + 3``.
        """
        return dataclasses.replace(
            self,
            observations=dataclasses.replace(self.observations, seed=seed),
            background=dataclasses.replace(self.background, seed=seed + 1),
            optimizer=dataclasses.replace(self.optimizer, seed=seed + 2),
            ssc=dataclasses.replace(self.ssc, seed=seed + 3),
        )


def parse(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return ExperimentConfig.from_dict(raw)


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def save_config(config: ExperimentConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(config))
