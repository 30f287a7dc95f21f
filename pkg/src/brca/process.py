"""BRCA(1) trajectories: recursive engine, truncated-series engine, checks.

The process is simulated in centered form ``Y_i = X_i - mu``,

    Y_i = rho_i(Y_{i-1}) + eps_i,

started from ``Y = 0`` and run through a burn-in.  The series engine evaluates
``Y_t = sum_j rho_t o ... o rho_{t-j+1}(eps_{t-j})`` directly from the same
draws and serves only as a cross-check of the recursion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import split_streams
from .coeffgen import NoiseSampler, OperatorDraws, OperatorSampler
from .errors import ConditionError, InvalidArgument, ModelConfigError
from .funspace import L2, Grid, GridFunction, LinearOp, NormKind, op_norm

__all__ = [
    "BRCAModel",
    "SimConfig",
    "Trajectory",
    "simulate_recursive",
    "simulate_series",
    "series_tail_bound",
    "default_truncation",
    "finite_decomposition_residual",
    "iterate_states",
    "stationary_states",
    "write_trajectories_csv",
]


@dataclass(frozen=True, eq=False)
class BRCAModel:
    mu: GridFunction
    op_sampler: OperatorSampler
    noise_sampler: NoiseSampler
    name: str = "model"

    def __post_init__(self):
        g = self.mu.grid
        if self.op_sampler.grid != g or self.noise_sampler.grid != g:
            raise ModelConfigError("mu, operator sampler and noise sampler must share one grid")

    @property
    def grid(self) -> Grid:
        return self.mu.grid

    @property
    def m(self) -> int:
        return self.grid.m

    def mean_operator(self) -> LinearOp:
        return self.op_sampler.mean_operator()

    def check_simulable(self, p: float = 1.0):
        """Closed-form precondition for stationary simulation.

        Requires ``|E rho_0| < 1`` and ``E |rho_0|^p < 1``.
        """
        rb = op_norm(self.mean_operator(), L2)
        if not rb < 1:
            raise ConditionError(f"mean operator norm {rb:.4g} >= 1; no stationary solution is guaranteed")
        r = self.op_sampler.norm_moment(p)
        if not r < 1:
            raise ConditionError(f"E|rho_0|^{p:g} = {r:.4g} >= 1")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "operator": self.op_sampler.describe(),
            "noise": self.noise_sampler.describe(),
        }


@dataclass(frozen=True)
class SimConfig:
    n: int
    burnin: int = 500
    truncation_J: Optional[int] = None
    seed: int = 0
    record_draws: bool = False
    p: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument("n must be >= 1")
        if self.burnin < 0:
            raise InvalidArgument("burnin must be >= 0")
        if self.truncation_J is not None and self.truncation_J < 0:
            raise InvalidArgument("truncation_J must be >= 0")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``X_0..X_n`` plus, optionally, the draws that produced them.

    ``rho_draws[k]`` and ``eps_draws[k]`` drive the step ``X_k -> X_{k+1}``.
    """

    model: BRCAModel
    values: np.ndarray
    rho_draws: Optional[OperatorDraws] = None
    eps_draws: Optional[np.ndarray] = None
    engine: str = "recursive"
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    @property
    def centered(self) -> np.ndarray:
        return self.values - self.model.mu.values

    @property
    def X(self) -> list:
        g = self.model.grid
        return [GridFunction(g, v) for v in self.values]

    @property
    def has_draws(self) -> bool:
        return self.rho_draws is not None and self.eps_draws is not None


def _draw_all(model: BRCAModel, total: int, seed: int):
    rho_rng, eps_rng = split_streams(seed)
    draws = model.op_sampler.draw(rho_rng, total)
    eps = model.noise_sampler.draw(eps_rng, total)
    return draws, eps


def _recurse(draws: OperatorDraws, eps: np.ndarray, y0: np.ndarray) -> np.ndarray:
    total, m = eps.shape
    out = np.empty((total + 1, m))
    out[0] = y0
    if m == 1:
        coef = (draws.coef * np.array([M[0, 0] for M in draws._matrices])[draws.index]).tolist()
        e = eps[:, 0].tolist()
        y = float(y0[0])
        col = [y]
        for a, et in zip(coef, e):
            y = a * y + et
            col.append(y)
        out[:, 0] = col
        return out
    mats = draws._matrices
    coef, index = draws.coef, draws.index
    y = np.array(y0, dtype=float)
    for t in range(total):
        y = coef[t] * (mats[index[t]] @ y) + eps[t]
        out[t + 1] = y
    return out


def simulate_recursive(model: BRCAModel, cfg: SimConfig) -> Trajectory:
    """Iterate the recursion from ``X = mu`` for ``burnin + n`` steps."""
    model.check_simulable(cfg.p)
    total = cfg.burnin + cfg.n
    draws, eps = _draw_all(model, total, cfg.seed)
    ys = _recurse(draws, eps, np.zeros(model.m))
    window = ys[cfg.burnin :]
    rec = {}
    if cfg.record_draws:
        rec = dict(rho_draws=draws.slice(cfg.burnin, total), eps_draws=eps[cfg.burnin :].copy())
    return Trajectory(model, window + model.mu.values, engine="recursive", meta={"seed": cfg.seed}, **rec)


def series_tail_bound(model: BRCAModel, J: int, p: float, noise_moment: Optional[float] = None) -> float:
    """Bound on ``E|sum_{j>J} A_{n,j} eps_{n-j}|^p``.

    Equal to ``E|eps_0|^p * (sum_{j>J} r^{j/p})^p`` with ``r = E|rho_0|^p``.
    ``noise_moment`` overrides ``E|eps_0|^p`` (by default an upper bound from
    the noise law, exact for ``p = 2``).
    """
    if J < 0:
        raise InvalidArgument("J must be >= 0")
    r = model.op_sampler.norm_moment(p)
    if not r < 1:
        raise ConditionError(f"E|rho_0|^{p:g} = {r:.4g} >= 1; the series bound diverges")
    e = model.noise_sampler.norm_moment_bound(p) if noise_moment is None else float(noise_moment)
    s = r ** (1.0 / p)
    return e * (s ** (J + 1) / (1.0 - s)) ** p


def default_truncation(model: BRCAModel, p: float = 2.0, target: float = 1e-6, j_max: int = 100_000) -> int:
    """Smallest ``J >= 1`` whose series tail bound is below ``target``."""
    for J in range(1, j_max + 1):
        if series_tail_bound(model, J, p) < target:
            return J
    raise ConditionError("series truncation target not reached")


def simulate_series(model: BRCAModel, cfg: SimConfig) -> Trajectory:
    """Truncated series solution with the draws ``simulate_recursive`` would use.

    Time runs ``t = 1..burnin+n`` and nothing exists before ``t = 1``, so with
    ``J >= burnin + n`` the two engines agree up to rounding.
    """
    model.check_simulable(cfg.p)
    J = cfg.truncation_J if cfg.truncation_J is not None else default_truncation(model, cfg.p)
    if J < 1:
        raise InvalidArgument("series engine needs truncation_J >= 1")
    total = cfg.burnin + cfg.n
    draws, eps = _draw_all(model, total, cfg.seed)
    P = draws.kernels() * model.grid.weights[None, None, :]
    ts = np.arange(cfg.burnin, total + 1)
    m = model.m
    A = np.broadcast_to(np.eye(m), (ts.size, m, m)).copy()
    acc = np.zeros((ts.size, m))
    valid = ts >= 1
    acc[valid] = eps[ts[valid] - 1]
    for j in range(1, J + 1):
        valid = ts - j >= 1
        if not valid.any():
            break
        rows = np.nonzero(valid)[0]
        # A_{t,j} = A_{t,j-1} o rho_{t-j+1}; rho_s sits at draw index s-1
        A[rows] = A[rows] @ P[ts[rows] - j]
        acc[rows] += np.einsum("rij,rj->ri", A[rows], eps[ts[rows] - j - 1])
    rec = {}
    if cfg.record_draws:
        rec = dict(rho_draws=draws.slice(cfg.burnin, total), eps_draws=eps[cfg.burnin :].copy())
    return Trajectory(
        model, acc + model.mu.values, engine="series", meta={"seed": cfg.seed, "J": J}, **rec
    )


def finite_decomposition_residual(traj: Trajectory, kind: NormKind = L2) -> float:
    """``max_n |Y_n - (sum_{j<n} A_{n,j} eps_{n-j} + A_{n,n} Y_0)| / (1 + |Y_n|)``.

    Each summand is carried forward separately (one row per source), so the
    check does not reuse the recursion's accumulation order.
    """
    if not traj.has_draws:
        raise InvalidArgument("trajectory was simulated without record_draws")
    Y = traj.centered
    n, m = traj.n, traj.model.m
    w = traj.model.grid.weights
    sources = np.zeros((n + 1, m))
    sources[0] = Y[0]
    worst = 0.0
    for k in range(1, n + 1):
        M = traj.rho_draws.matrix(k - 1)
        sources[:k] = sources[:k] @ M.T
        sources[k] = traj.eps_draws[k - 1]
        z = sources[: k + 1].sum(axis=0)
        diff = Y[k] - z
        num = _norm(diff, w, kind)
        worst = max(worst, num / (1.0 + _norm(Y[k], w, kind)))
    return worst


def _norm(v, w, kind):
    if kind.is_sup:
        return float(np.max(np.abs(v)))
    return float((np.abs(v) ** kind.p @ w) ** (1.0 / kind.p))


# --------------------------------------------------------------------------
# batch engine used by the Monte Carlo harnesses


def iterate_states(model: BRCAModel, n: int, reps: int, rho_rng, eps_rng, burnin: int = 500, y0=None):
    """Yield centered states ``Y_0..Y_n`` (each of shape ``(reps, m)``).

    ``reps`` independent paths advance together; ``Y_0`` is the state after
    ``burnin`` steps from ``y0`` (default: zero, i.e. ``X = mu``).
    """
    Y = np.zeros((reps, model.m)) if y0 is None else np.array(y0, dtype=float)
    ops, noise = model.op_sampler, model.noise_sampler
    for _ in range(burnin):
        Y = ops.draw(rho_rng, reps).apply(Y) + noise.draw(eps_rng, reps)
    yield Y
    for _ in range(n):
        Y = ops.draw(rho_rng, reps).apply(Y) + noise.draw(eps_rng, reps)
        yield Y


def stationary_states(model: BRCAModel, reps: int, rho_rng, eps_rng, burnin: int = 500) -> np.ndarray:
    """``reps`` independent draws of ``Y_0`` after ``burnin`` steps."""
    return next(iterate_states(model, 0, reps, rho_rng, eps_rng, burnin))


def write_trajectories_csv(path, trajectories) -> None:
    """Long-format CSV: replication, time_index, node_index, value."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "time_index", "node_index", "value"])
        for r, traj in enumerate(trajectories):
            for t, row in enumerate(traj.values):
                for k, v in enumerate(row):
                    w.writerow([r, t, k, repr(float(v))])
