"""Martingale-coboundary decomposition of the centered BRCA(1) partial sums.

With ``R = (I - rho_bar)^{-1}`` and ``Y_i = X_i - mu``,

    N_i = R rho_bar Y_i,    M_i = R Y_i - R rho_bar Y_{i-1},

so that ``Y_i = N_{i-1} - N_i + M_i`` and the partial sums telescope:
``sum_{i<=n} Y_i = N_0 - N_n + sum_{i<=n} M_i``.  Since
``E[Y_i | past] = rho_bar Y_{i-1}``, the ``M_i`` are martingale differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import as_generator
from .errors import ConvergenceError, InvalidArgument, NotInvertibleError
from .funspace import L2, GridFunction, LinearOp, NormKind, op_compose, op_norm
from .process import BRCAModel, Trajectory, stationary_states

__all__ = [
    "NeumannConfig",
    "Coboundary",
    "neumann_inverse",
    "direct_inverse",
    "decompose",
    "telescoping_residual",
    "martingale_mean_test",
    "martingale_increments",
]


@dataclass(frozen=True)
class NeumannConfig:
    tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if self.max_terms < 1:
            raise InvalidArgument("max_terms must be >= 1")


@dataclass(frozen=True, eq=False)
class Coboundary:
    N: np.ndarray  # (n + 1, m): N_0..N_n
    M: np.ndarray  # (n, m): M_1..M_n
    inv_op: LinearOp
    rho_bar: LinearOp
    n_terms: int = 0

    def N_fn(self, i: int) -> GridFunction:
        return GridFunction(self.inv_op.grid, self.N[i])

    def M_fn(self, i: int) -> GridFunction:
        """``M_i`` for ``i >= 1``."""
        return GridFunction(self.inv_op.grid, self.M[i - 1])


def neumann_inverse(rho_bar: LinearOp, cfg: NeumannConfig = NeumannConfig()) -> LinearOp:
    """``sum_{k<=K} rho_bar^k`` with ``K`` the first index where the tail bound
    ``|rho_bar^{K+1}| / (1 - |rho_bar|)`` drops below ``cfg.tol``."""
    return _neumann(rho_bar, cfg)[0]


def _neumann(rho_bar: LinearOp, cfg: NeumannConfig):
    q = op_norm(rho_bar, L2)
    if not q < 1:
        raise NotInvertibleError(f"|rho_bar| = {q:.6g} >= 1; Neumann series does not converge")
    g = rho_bar.grid
    M = rho_bar.matrix
    total = np.eye(g.m)
    power = M.copy()
    terms = 0
    while op_norm(LinearOp.from_matrix(g, power), L2) / (1.0 - q) >= cfg.tol:
        terms += 1
        if terms > cfg.max_terms:
            raise ConvergenceError(f"Neumann series needs more than {cfg.max_terms} terms")
        total += power
        power = power @ M
    return LinearOp.from_matrix(g, total), terms


def direct_inverse(rho_bar: LinearOp) -> LinearOp:
    """``(I - rho_bar)^{-1}`` by a dense solve; kept as an oracle."""
    g = rho_bar.grid
    return LinearOp.from_matrix(g, np.linalg.solve(np.eye(g.m) - rho_bar.matrix, np.eye(g.m)))


def decompose(traj: Trajectory, rho_bar: LinearOp, cfg: NeumannConfig = NeumannConfig()) -> Coboundary:
    R, terms = _neumann(rho_bar, cfg)
    RP = op_compose(R, rho_bar)
    Y = traj.centered
    N = Y @ RP.matrix.T
    M = (Y[1:] - Y[:-1] @ rho_bar.matrix.T) @ R.matrix.T
    return Coboundary(N=N, M=M, inv_op=R, rho_bar=rho_bar, n_terms=terms)


def _wnorm(v, w, kind=L2):
    if kind.is_sup:
        return float(np.max(np.abs(v)))
    return float((np.abs(v) ** kind.p @ w) ** (1.0 / kind.p))


def telescoping_residual(traj: Trajectory, cob: Coboundary, kind: NormKind = L2) -> float:
    """``|sum Y_i - (N_0 - N_n + sum M_i)| / (1 + |sum Y_i|)``."""
    w = traj.model.grid.weights
    S = traj.centered[1:].sum(axis=0)
    T = cob.N[0] - cob.N[-1] + cob.M.sum(axis=0)
    return _wnorm(S - T, w, kind) / (1.0 + _wnorm(S, w, kind))


def martingale_mean_test(
    model: BRCAModel,
    x_prev: GridFunction,
    n_resample: int,
    rng,
    cfg: NeumannConfig = NeumannConfig(),
):
    """Norm of the empirical mean of ``M_i`` given ``X_{i-1} = x_prev``.

    Returns ``(mean_norm, se)`` where ``se`` is the weighted L2 norm of the
    coordinatewise Monte Carlo standard errors.
    """
    if n_resample < 1000:
        raise InvalidArgument("n_resample must be >= 1000")
    rho_rng, eps_rng = as_generator(rng).spawn(2)
    rho_bar = model.mean_operator()
    R = neumann_inverse(rho_bar, cfg)
    n = int(n_resample)
    y_prev = np.broadcast_to(x_prev.values - model.mu.values, (n, model.m))
    Y = model.op_sampler.draw(rho_rng, n).apply(y_prev) + model.noise_sampler.draw(eps_rng, n)
    M = (Y - y_prev @ rho_bar.matrix.T) @ R.matrix.T
    w = model.grid.weights
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / np.sqrt(n)
    return _wnorm(mean, w), _wnorm(se, w)


def martingale_increments(
    model: BRCAModel, reps: int, rho_rng, eps_rng, burnin: int = 500, cfg: NeumannConfig = NeumannConfig()
) -> np.ndarray:
    """``reps`` independent draws of ``M_1 = R (Y_1 - rho_bar Y_0)`` from stationarity."""
    rho_bar = model.mean_operator()
    R = neumann_inverse(rho_bar, cfg)
    Y0 = stationary_states(model, reps, rho_rng, eps_rng, burnin)
    Y1 = model.op_sampler.draw(rho_rng, reps).apply(Y0) + model.noise_sampler.draw(eps_rng, reps)
    return (Y1 - Y0 @ rho_bar.matrix.T) @ R.matrix.T
