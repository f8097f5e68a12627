"""Uniform interior grids on the unit box and the diffusion operator.

The domain is the open unit interval (1D) or unit square (2D) with
homogeneous Dirichlet boundary values.  Unknowns live at the interior
lattice nodes only; boundary nodes are eliminated.  Nodes are ordered
lexicographically (C order), so a 2D field of shape ``(n, n)`` flattens
with ``ravel()`` and the flat index round-trips through
:meth:`Grid.multi_index` / :meth:`Grid.flat_index`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, EllipticityError

__all__ = [
    "Grid",
    "DiffusionField",
    "DiscreteOperator",
    "build_grid",
    "assemble_operator",
    "inner_product",
    "l2_norm",
    "lp_integral",
]


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid on the unit box.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    n : int
        Number of interior nodes per axis.  The mesh width is
        ``h = 1 / (n + 1)``.

    Notes
    -----
    ``quad_weight = h**dim`` is the weight of the discrete L2 inner
    product; all norms in the package use it.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.n < 2:
            raise ConfigError(f"need at least 2 interior nodes per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def node_count(self) -> int:
        return self.n**self.dim

    @property
    def quad_weight(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def flat_index(self, multi) -> int:
        """Flatten a per-axis multi-index (C order)."""
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, flat: int) -> tuple:
        """Invert :meth:`flat_index`."""
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def node_coordinates(self, flat: int) -> np.ndarray:
        """Physical coordinates of an interior node."""
        multi = np.asarray(self.multi_index(flat), dtype=float)
        return (multi + 1.0) * self.h

    def all_coordinates(self) -> np.ndarray:
        """Coordinates of every interior node, shape ``(node_count, dim)``."""
        axes = [np.arange(1, self.n + 1) * self.h] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def nearest_interior_node(self, coords) -> tuple:
        """Snap physical coordinates to the nearest interior node.

        Returns
        -------
        (flat, distance) : tuple
            Flat index of the nearest node and the Euclidean snap
            distance.

        Raises
        ------
        ConfigError
            If the point lies outside the open unit box.
        """
        pt = np.asarray(coords, dtype=float)
        if pt.shape != (self.dim,):
            raise ConfigError(
                f"observation coordinate has shape {pt.shape}, expected ({self.dim},)"
            )
        if np.any(pt <= 0.0) or np.any(pt >= 1.0):
            raise ConfigError(f"observation point {pt.tolist()} lies outside the open unit box")
        multi = np.clip(np.rint(pt / self.h) - 1, 0, self.n - 1).astype(int)
        node = (multi + 1.0) * self.h
        return self.flat_index(multi), float(np.linalg.norm(pt - node))


def build_grid(dim: int, n: int) -> Grid:
    """Construct a :class:`Grid` (validates ``dim`` and ``n``)."""
    return Grid(dim=dim, n=n)


@dataclass(frozen=True, eq=False)
class DiffusionField:
    """Scalar diffusion coefficient, constant or piecewise constant.

    The coefficient is specified per cell of the lattice partition of
    the unit box (``(n+1)**dim`` cells whose corners are grid nodes).
    Flux faces between adjacent nodes receive the harmonic mean of the
    cell values touching the face, which preserves symmetry and flux
    continuity across coefficient jumps.

    Use :meth:`constant` for a spatially uniform coefficient or
    :meth:`from_cells` for a per-cell array.
    """

    constant: float | None
    cells: np.ndarray | None

    def __post_init__(self):
        if (self.constant is None) == (self.cells is None):
            raise ConfigError("diffusion field needs exactly one of constant or cells")
        if self.constant is not None and not self.constant > 0.0:
            raise EllipticityError(f"diffusion constant must be positive, got {self.constant}")
        if self.cells is not None:
            cells = np.asarray(self.cells, dtype=float)
            if not np.all(np.isfinite(cells)) or not np.all(cells > 0.0):
                raise EllipticityError("all diffusion cell values must be positive and finite")
            object.__setattr__(self, "cells", cells)

    @classmethod
    def constant_field(cls, value: float) -> "DiffusionField":
        return cls(constant=float(value), cells=None)

    @classmethod
    def from_cells(cls, cells) -> "DiffusionField":
        return cls(constant=None, cells=np.asarray(cells, dtype=float))

    @property
    def k_min(self) -> float:
        if self.constant is not None:
            return self.constant
        return float(self.cells.min())

    def face_arrays(self, grid: Grid) -> tuple:
        """Face coefficients per axis.

        Axis ``a`` gets an array with ``n + 1`` entries along ``a`` and
        ``n`` along the other axes; entry ``f`` along the face axis is
        the coefficient between node ``f - 1`` and node ``f`` (boundary
        nodes at the ends).
        """
        n = grid.n
        if grid.dim == 1:
            if self.constant is not None:
                return (np.full(n + 1, self.constant),)
            if self.cells.shape != (n + 1,):
                raise ConfigError(
                    f"cell array shape {self.cells.shape} does not match grid ({n + 1},)"
                )
            # 1D: each inter-node face lies inside exactly one cell.
            return (self.cells.copy(),)
        if self.constant is not None:
            return (
                np.full((n + 1, n), self.constant),
                np.full((n, n + 1), self.constant),
            )
        if self.cells.shape != (n + 1, n + 1):
            raise ConfigError(
                f"cell array shape {self.cells.shape} does not match grid {(n + 1, n + 1)}"
            )
        c = self.cells
        # An x-face between nodes (f-1, j) and (f, j) lies on the edge shared
        # by cells (f, j) and (f, j+1); harmonic mean of the two.  Same with
        # axes swapped for y-faces.
        kx = 2.0 * c[:, :-1] * c[:, 1:] / (c[:, :-1] + c[:, 1:])
        ky = 2.0 * c[:-1, :] * c[1:, :] / (c[:-1, :] + c[1:, :])
        return kx, ky


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse SPD matrix of ``-div(k grad)`` on the interior nodes."""

    grid: Grid
    matrix: sp.csr_matrix
    k_min: float

    def __post_init__(self):
        m = self.matrix
        if m.shape != (self.grid.node_count, self.grid.node_count):
            raise ConfigError(
                f"operator shape {m.shape} does not match node count {self.grid.node_count}"
            )

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


def assemble_operator(grid: Grid, field: DiffusionField) -> DiscreteOperator:
    """Assemble the diffusion stiffness matrix.

    Three-point (1D) or five-point (2D) flux-difference stencil with
    harmonic-mean face coefficients; homogeneous Dirichlet boundary
    built in.  The result is symmetric positive definite.
    """
    faces = field.face_arrays(grid)
    for fa in faces:
        if not np.all(fa > 0.0):
            raise EllipticityError("face coefficient <= 0 after harmonic averaging")
    inv_h2 = 1.0 / grid.h**2
    n = grid.n
    if grid.dim == 1:
        kf = faces[0]
        diag = (kf[:-1] + kf[1:]) * inv_h2
        lower = -kf[1:-1] * inv_h2
        matrix = sp.diags_array(
            [lower, diag, lower], offsets=[-1, 0, 1], shape=(n, n), format="csr"
        )
    else:
        kx, ky = faces
        diag = (kx[:-1, :] + kx[1:, :] + ky[:, :-1] + ky[:, 1:]) * inv_h2
        rows = [np.arange(n * n)]
        cols = [np.arange(n * n)]
        vals = [diag.ravel()]
        idx = np.arange(n * n).reshape(n, n)
        # neighbor in -x: coupling through kx[i, j] for i >= 1
        rows.append(idx[1:, :].ravel())
        cols.append(idx[:-1, :].ravel())
        vals.append((-kx[1:-1, :] * inv_h2).ravel())
        # neighbor in +x
        rows.append(idx[:-1, :].ravel())
        cols.append(idx[1:, :].ravel())
        vals.append((-kx[1:-1, :] * inv_h2).ravel())
        # neighbor in -y: coupling through ky[i, j] for j >= 1
        rows.append(idx[:, 1:].ravel())
        cols.append(idx[:, :-1].ravel())
        vals.append((-ky[:, 1:-1] * inv_h2).ravel())
        # neighbor in +y
        rows.append(idx[:, :-1].ravel())
        cols.append(idx[:, 1:].ravel())
        vals.append((-ky[:, 1:-1] * inv_h2).ravel())
        matrix = sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * n, n * n),
        ).tocsr()
    return DiscreteOperator(grid=grid, matrix=matrix, k_min=field.k_min)


def _check_shape(grid: Grid, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.node_count,):
        raise ConfigError(
            f"{name} has shape {v.shape}, expected ({grid.node_count},) for this grid"
        )
    return v


def inner_product(grid: Grid, v: np.ndarray, w: np.ndarray) -> float:
    """Discrete L2 inner product: ``quad_weight * sum(v * w)``."""
    v = _check_shape(grid, v, "v")
    w = _check_shape(grid, w, "w")
    return float(grid.quad_weight * np.dot(v, w))


def l2_norm(grid: Grid, v: np.ndarray) -> float:
    """Discrete L2 norm induced by :func:`inner_product`."""
    v = _check_shape(grid, v, "v")
    return float(np.sqrt(grid.quad_weight) * np.linalg.norm(v))


def lp_integral(grid: Grid, v: np.ndarray, beta: float) -> float:
    """Discrete integral of ``|v|**beta``: ``quad_weight * sum(|v|**beta)``.

    Raises
    ------
    ConfigError
        If ``beta < 2``.
    """
    if beta < 2.0:
        raise ConfigError(f"exponent beta must be >= 2, got {beta}")
    v = _check_shape(grid, v, "v")
    return float(grid.quad_weight * np.sum(np.abs(v) ** beta))
