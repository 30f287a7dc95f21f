"""Discretized function-space arithmetic on [0, 1].

Elements of the state space are stored as values on a midpoint quadrature
grid.  A linear operator is stored as a kernel matrix ``K[i, j] = K(t_i, s_j)``
and applied with the quadrature weights,

    (A f)_i = sum_j K[i, j] * w_j * f_j,

so the matrix that acts on nodal values is ``K @ diag(w)``.  The weighted
L2 geometry (``<f, g> = sum_k w_k f_k g_k``) is the Hilbert setting used by
every exact norm in the package.

Note that the identity operator is *not* the identity matrix: its kernel is
``diag(1 / w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Grid",
    "GridFunction",
    "LinearOp",
    "NormKind",
    "Lp",
    "SUP",
    "L2",
    "make_uniform_grid",
    "grid_function",
    "fn_norm",
    "inner",
    "op_apply",
    "op_norm",
    "op_norm_estimate",
    "op_compose",
    "op_add",
    "op_scale",
    "identity_op",
    "zero_op",
    "named_kernel",
]


def _frozen(a, name):
    arr = np.array(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes in [0, 1] with positive weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points, "points").reshape(-1)
        wts = _frozen(self.weights, "weights").reshape(-1)
        if pts.size == 0 or pts.shape != wts.shape:
            raise InvalidArgument("points and weights must be non-empty and of equal length")
        if np.any(np.diff(pts) <= 0) or pts[0] < 0 or pts[-1] > 1:
            raise InvalidArgument("points must be strictly increasing within [0, 1]")
        if np.any(wts <= 0) or abs(wts.sum() - 1.0) > 1e-12:
            raise InvalidArgument("weights must be positive and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def m(self) -> int:
        return self.points.size

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.m, self.points.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"Grid(m={self.m})"


def make_uniform_grid(m: int) -> Grid:
    """Composite midpoint rule with ``m`` equal cells."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidArgument(f"grid size must be a positive integer, got {m!r}")
    m = int(m)
    points = (np.arange(m) + 0.5) / m
    return Grid(points, np.full(m, 1.0 / m))


@dataclass(frozen=True)
class NormKind:
    """L^p norm for ``1 <= p < inf``; ``p = inf`` is the sup norm."""

    p: float = 2.0

    def __post_init__(self):
        if not (self.p >= 1):
            raise InvalidArgument(f"norm exponent must be >= 1, got {self.p}")

    @property
    def is_sup(self) -> bool:
        return math.isinf(self.p)

    def __str__(self):
        return "sup" if self.is_sup else f"L{self.p:g}"


def Lp(p: float) -> NormKind:
    return NormKind(float(p))


L2 = NormKind(2.0)
SUP = NormKind(math.inf)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, "values").reshape(-1)
        if vals.size != self.grid.m:
            raise InvalidArgument(f"expected {self.grid.m} values, got {vals.size}")
        object.__setattr__(self, "values", vals)

    def _check(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        if other.grid != self.grid:
            raise InvalidArgument("grid mismatch")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return GridFunction(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __repr__(self):
        return f"GridFunction(m={self.grid.m})"


def grid_function(grid: Grid, f) -> GridFunction:
    """Build a grid function from a callable, scalar or array of node values."""
    if callable(f):
        vals = np.broadcast_to(np.asarray(f(grid.points), dtype=float), (grid.m,))
    else:
        vals = np.broadcast_to(np.asarray(f, dtype=float), (grid.m,))
    return GridFunction(grid, vals)


def _lp_values(values: np.ndarray, weights: np.ndarray, p: float) -> np.ndarray:
    """Norm along the last axis, for one function or a stack of them."""
    a = np.abs(values)
    if math.isinf(p):
        return a.max(axis=-1)
    if p == 2.0:
        return np.sqrt(a**2 @ weights)
    if p == 1.0:
        return a @ weights
    return (a**p @ weights) ** (1.0 / p)


def fn_norm(f: GridFunction, kind: NormKind = L2) -> float:
    if f.grid.m == 1:
        return float(abs(f.values[0]))
    return float(_lp_values(f.values, f.grid.weights, kind.p))


def inner(f: GridFunction, g: GridFunction) -> float:
    """Weighted L2 inner product."""
    if f.grid != g.grid:
        raise InvalidArgument("grid mismatch")
    return float(np.sum(f.grid.weights * f.values * g.values))


@dataclass(frozen=True, eq=False)
class LinearOp:
    grid: Grid
    kernel: np.ndarray

    def __post_init__(self):
        k = _frozen(self.kernel, "kernel")
        m = self.grid.m
        if k.shape != (m, m):
            raise InvalidArgument(f"kernel must be {m}x{m}, got {k.shape}")
        object.__setattr__(self, "kernel", k)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Matrix acting on nodal values: ``K @ diag(w)``."""
        mat = self.kernel * self.grid.weights[None, :]
        mat.setflags(write=False)
        return mat

    @cached_property
    def hilbert_matrix(self) -> np.ndarray:
        """Representation in an orthonormal basis of the weighted L2 space."""
        sw = self.grid.sqrt_weights
        return sw[:, None] * self.kernel * sw[None, :]

    @classmethod
    def from_matrix(cls, grid: Grid, matrix: np.ndarray) -> "LinearOp":
        """Operator whose action on nodal values is ``matrix``."""
        mat = np.array(matrix, dtype=float)
        op = cls(grid, mat / grid.weights[None, :])
        mat.setflags(write=False)
        op.__dict__["matrix"] = mat
        return op

    def __call__(self, f: GridFunction) -> GridFunction:
        return op_apply(self, f)

    def __repr__(self):
        return f"LinearOp(m={self.grid.m})"


def _same_grid(a, b):
    if a.grid != b.grid:
        raise InvalidArgument("grid mismatch")


def op_apply(A: LinearOp, f: GridFunction) -> GridFunction:
    _same_grid(A, f)
    return GridFunction(A.grid, A.matrix @ f.values)


def identity_op(grid: Grid) -> LinearOp:
    return LinearOp(grid, np.diag(1.0 / grid.weights))


def zero_op(grid: Grid) -> LinearOp:
    return LinearOp(grid, np.zeros((grid.m, grid.m)))


def op_compose(A: LinearOp, B: LinearOp) -> LinearOp:
    """Kernel of ``A o B``: ``sum_j K_A(t, u_j) w_j K_B(u_j, s)``."""
    _same_grid(A, B)
    return LinearOp(A.grid, A.matrix @ B.kernel)


def op_add(A: LinearOp, B: LinearOp) -> LinearOp:
    _same_grid(A, B)
    return LinearOp(A.grid, A.kernel + B.kernel)


def op_scale(c: float, A: LinearOp) -> LinearOp:
    return LinearOp(A.grid, float(c) * A.kernel)


def _probe_dictionary(grid: Grid, A: LinearOp, n_random: int, seed: int) -> np.ndarray:
    m = grid.m
    t = grid.points
    probes = [np.ones(m)]
    for k in range(1, m // 2 + 1):
        probes.append(np.cos(2 * np.pi * k * t))
        probes.append(np.sin(2 * np.pi * k * t))
    probes.extend(np.eye(m))
    probes.extend(np.sign(A.kernel) + (A.kernel == 0))
    rng = np.random.default_rng(seed)
    if n_random > 0:
        probes.extend(rng.standard_normal((n_random, m)))
    return np.array(probes)


def op_norm_estimate(A: LinearOp, kind: NormKind, n_random: int = 64, seed: int = 0) -> float:
    """Largest ratio ``|A f| / |f|`` over a fixed probe dictionary.

    The dictionary (constants, Fourier modes, node spikes, row-sign patterns)
    is extended by ``n_random`` Gaussian probes drawn from ``seed``.  The
    result is a lower estimate of the true norm and never decreases when
    ``n_random`` grows.
    """
    F = _probe_dictionary(A.grid, A, n_random, seed)
    w = A.grid.weights
    den = _lp_values(F, w, kind.p)
    num = _lp_values(F @ A.matrix.T, w, kind.p)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if ok.any() else 0.0


def op_norm(A: LinearOp, kind: NormKind = L2) -> float:
    """Operator norm of ``A`` on the discretized L^p space.

    Exact for L2 (largest singular value in the weighted geometry), L1 and
    sup; a probe-dictionary estimate for other exponents.
    """
    if A.grid.m == 1:
        return float(abs(A.kernel[0, 0]))
    if kind.p == 2.0:
        return float(np.linalg.norm(A.hilbert_matrix, 2))
    w = A.grid.weights
    if kind.is_sup:
        return float(np.max(np.abs(A.matrix).sum(axis=1)))
    if kind.p == 1.0:
        return float(np.max(w @ np.abs(A.kernel)))
    return op_norm_estimate(A, kind)


def named_kernel(grid: Grid, name: str, length_scale: float = 0.2) -> np.ndarray:
    """Kernel matrix for a named shape evaluated on the grid nodes.

    Shapes: ``zero``, ``identity`` (the quadrature identity), ``constant``,
    ``product`` (t*s), ``exponential`` exp(-|t-s|/l), ``gaussian``
    exp(-(t-s)^2/(2 l^2)), ``brownian`` min(t, s).
    """
    t = grid.points
    T, S = np.meshgrid(t, t, indexing="ij")
    if name == "zero":
        return np.zeros((grid.m, grid.m))
    if name == "identity":
        return np.diag(1.0 / grid.weights)
    if name == "constant":
        return np.ones((grid.m, grid.m))
    if name == "product":
        return T * S
    if length_scale <= 0:
        raise InvalidArgument("length_scale must be positive")
    if name == "exponential":
        return np.exp(-np.abs(T - S) / length_scale)
    if name == "gaussian":
        return np.exp(-((T - S) ** 2) / (2 * length_scale**2))
    if name == "brownian":
        return np.minimum(T, S)
    raise InvalidArgument(f"unknown kernel shape {name!r}")
