"""Mean, (cross-)covariance and long-run covariance estimation.

Covariance operators are stored in kernel coordinates: entry ``(i, j)``
estimates ``E[(X(t_i) - mu(t_i)) (Y(t_j) - mu_Y(t_j))]``, a plain outer-product
average.  Quadrature weights enter only through norms, traces and spectra,
which are computed from ``W^{1/2} C W^{1/2}``.

Closed-form oracles for the discretized model are also provided here.  They
follow from the stationary covariance fixed point ``C = E[rho C rho*] + C_eps``
and the lag structure ``C_{X_0, X_h} = C (rho_bar^h)^*``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._parallel import map_blocks
from ._rng import as_generator, split_streams
from .errors import ConvergenceError, InvalidArgument
from .funspace import Grid, GridFunction
from .process import BRCAModel, Trajectory, iterate_states, stationary_states

__all__ = [
    "CovOperator",
    "LagCovSeries",
    "LagAccumulator",
    "sample_mean",
    "empirical_cross_cov",
    "lag_cov_series",
    "nuclear_norm",
    "nuclear_se",
    "longrun_cov",
    "default_longrun_lag",
    "bartlett_mean_cov",
    "CovIdentityCheck",
    "cov_identity_residual",
    "DecayRow",
    "cross_cov_decay_check",
    "stationary_cov_exact",
    "lag_cov_exact",
    "longrun_cov_exact",
    "mean_cov_exact",
    "martingale_cov_exact",
    "write_cov_csv",
    "cov_summary",
]


@dataclass(frozen=True, eq=False)
class CovOperator:
    grid: Grid
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.shape != (self.grid.m, self.grid.m) or not np.all(np.isfinite(mat)):
            raise InvalidArgument("covariance matrix must be a finite m x m array")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def weighted(self) -> np.ndarray:
        sw = self.grid.sqrt_weights
        return sw[:, None] * self.matrix * sw[None, :]

    def nuclear_norm(self) -> float:
        return float(np.linalg.svd(self.weighted, compute_uv=False).sum())

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.weighted, 2))

    def trace(self) -> float:
        return float(self.grid.weights @ np.diag(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the symmetric part, descending."""
        W = self.weighted
        return np.linalg.eigvalsh(0.5 * (W + W.T))[::-1]

    def adjoint(self) -> "CovOperator":
        return CovOperator(self.grid, self.matrix.T)

    def quad_form(self, f: np.ndarray) -> float:
        """``x*(C x*)`` for the functional ``x* = <f, .>`` (weighted)."""
        a = self.grid.weights * np.asarray(f, dtype=float)
        return float(a @ self.matrix @ a)

    def __add__(self, other):
        return CovOperator(self.grid, self.matrix + other.matrix)

    def __sub__(self, other):
        return CovOperator(self.grid, self.matrix - other.matrix)

    def __mul__(self, c):
        return CovOperator(self.grid, float(c) * self.matrix)

    __rmul__ = __mul__


@dataclass(frozen=True)
class LagCovSeries:
    H: int
    covs: tuple  # CovOperator for h = -H..H

    def at(self, h: int) -> CovOperator:
        if abs(h) > self.H:
            raise InvalidArgument(f"lag {h} outside [-{self.H}, {self.H}]")
        return self.covs[h + self.H]


def nuclear_norm(C) -> float:
    return C.nuclear_norm()


def nuclear_se(mats, grid: Grid) -> float:
    """Typical nuclear-norm size of the Monte Carlo error of a batch mean.

    ``mats`` are independent batch estimates of one operator.  Returns
    ``mean_b |D_b - D_bar|_N / sqrt(B)``: the scale of the nuclear norm that
    pure estimation noise in ``D_bar`` produces.
    """
    mats = np.asarray(mats, dtype=float)
    B = mats.shape[0]
    if B < 2:
        return math.nan
    mean = mats.mean(axis=0)
    sw = grid.sqrt_weights
    dev = sw[None, :, None] * (mats - mean) * sw[None, None, :]
    norms = np.linalg.svd(dev, compute_uv=False).sum(axis=1)
    return float(norms.mean() / math.sqrt(B))


def _states(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.values
    return np.asarray(traj, dtype=float)


def _grid_of(traj, grid):
    if grid is not None:
        return grid
    if isinstance(traj, Trajectory):
        return traj.model.grid
    raise InvalidArgument("a grid is required for array input")


def sample_mean(traj, grid: Optional[Grid] = None) -> GridFunction:
    """``(1/n) sum_{i=1}^n X_i``."""
    X = _states(traj)
    if X.shape[0] < 2:
        raise InvalidArgument("need n >= 1")
    return GridFunction(_grid_of(traj, grid), X[1:].mean(axis=0))


def _centered_obs(traj, mean):
    X = _states(traj)[1:]
    if mean is None:
        mu = X.mean(axis=0)
    else:
        mu = mean.values if isinstance(mean, GridFunction) else np.asarray(mean, dtype=float)
    return X - mu


def _lag_products(Xc: np.ndarray, H: int) -> np.ndarray:
    """``out[h] = sum_k Xc[k] (x) Xc[k+h]`` for ``h = 0..H``."""
    n, m = Xc.shape
    if (H + 1) * n <= 4_000_000:
        out = np.empty((H + 1, m, m))
        for h in range(H + 1):
            out[h] = Xc[: n - h].T @ Xc[h:]
        return out
    size = 1 << int(math.ceil(math.log2(2 * n)))
    F = np.fft.rfft(Xc, size, axis=0)
    G = np.einsum("fi,fj->fij", F.conj(), F)
    full = np.fft.irfft(G, size, axis=0)
    return full[: H + 1]


def empirical_cross_cov(traj, h: int, mean=None, grid: Optional[Grid] = None) -> CovOperator:
    """``(1/(n-|h|)) sum_i (X_i - mean) (x) (X_{i+h} - mean)`` over ``i, i+h`` in ``1..n``."""
    Xc = _centered_obs(traj, mean)
    n = Xc.shape[0]
    if abs(h) >= n:
        raise InvalidArgument(f"|h| = {abs(h)} must be < n = {n}")
    a = abs(h)
    P = Xc[: n - a].T @ Xc[a:] / (n - a)
    return CovOperator(_grid_of(traj, grid), P if h >= 0 else P.T)


def _lag_sum(traj, H, mean, grid, weight):
    Xc = _centered_obs(traj, mean)
    n = Xc.shape[0]
    if H < 0 or H >= n:
        raise InvalidArgument(f"max lag must lie in [0, n-1], got {H}")
    prods = _lag_products(Xc, H)
    total = np.zeros_like(prods[0])
    for h in range(-H, H + 1):
        a = abs(h)
        C = prods[a] / (n - a)
        total += weight(h, n) * (C if h >= 0 else C.T)
    return CovOperator(_grid_of(traj, grid), total)


def lag_cov_series(traj, H: int, mean=None, grid: Optional[Grid] = None) -> LagCovSeries:
    Xc = _centered_obs(traj, mean)
    n = Xc.shape[0]
    if H < 0 or H >= n:
        raise InvalidArgument(f"max lag must lie in [0, n-1], got {H}")
    g = _grid_of(traj, grid)
    prods = _lag_products(Xc, H)
    covs = []
    for h in range(-H, H + 1):
        C = prods[abs(h)] / (n - abs(h))
        covs.append(CovOperator(g, C if h >= 0 else C.T))
    return LagCovSeries(H, tuple(covs))


def default_longrun_lag(model: BRCAModel, second_moment: float, target: float = 1e-4, h_max: int = 10_000) -> int:
    """Smallest ``H`` with ``(E|rho_0|)^H * E|X_0|^2 < target``."""
    r = model.op_sampler.norm_moment(1.0)
    if second_moment <= 0 or r == 0:
        return 0
    if r >= 1:
        return h_max
    H = math.ceil(math.log(target / second_moment) / math.log(r)) if second_moment >= target else 0
    return int(min(max(H, 0), h_max))


def longrun_cov(traj, H: Optional[int] = None, mean=None, model: Optional[BRCAModel] = None,
                grid: Optional[Grid] = None) -> CovOperator:
    """``sum_{|h|<=H} C_hat(h)``.

    Without ``H`` the lag is chosen from the geometric decay bound, using
    ``model`` (or the trajectory's model) and the empirical ``E|X_0 - mu|^2``.
    """
    n = _states(traj).shape[0] - 1
    if H is None:
        model = model or (traj.model if isinstance(traj, Trajectory) else None)
        if model is None:
            raise InvalidArgument("H or a model is required")
        Xc = _centered_obs(traj, mean)
        second = float(np.mean((Xc**2) @ model.grid.weights))
        H = min(default_longrun_lag(model, second), n - 1)
    return _lag_sum(traj, H, mean, grid, lambda h, n: 1.0)


def bartlett_mean_cov(traj, mean=None, max_lag: Optional[int] = None, flat: bool = False,
                      grid: Optional[Grid] = None) -> CovOperator:
    """``sum_{|h|<=H} (1 - |h|/n) C_hat(h)``, an estimate of ``n Cov(X_bar_n)``.

    ``H`` defaults to ``n - 1``.  ``flat=True`` replaces every weight by one.
    """
    n = _states(traj).shape[0] - 1
    if n < 2:
        raise InvalidArgument("need n >= 2")
    H = n - 1 if max_lag is None else int(max_lag)
    if flat:
        return _lag_sum(traj, H, mean, grid, lambda h, n: 1.0)
    return _lag_sum(traj, H, mean, grid, lambda h, n: 1.0 - abs(h) / n)


class LagAccumulator:
    """Streaming per-path lag products for a batch of paths.

    Feed ``Y_1, Y_2, ...`` (each ``(reps, m)``, already centered); ``sums[h, r]``
    collects ``sum_i Y_i (x) Y_{i+h}`` for path ``r``.
    """

    def __init__(self, reps: int, m: int, H: int):
        self.H = H
        self.buf = np.zeros((H + 1, reps, m))
        self.sums = np.zeros((H + 1, reps, m, m))
        self.count = 0

    def push(self, Y: np.ndarray):
        self.buf[1:] = self.buf[:-1]
        self.buf[0] = Y
        self.sums += np.einsum("hri,rj->hrij", self.buf, Y)
        self.count += 1

    def lag_covs(self) -> np.ndarray:
        """``(H+1, reps, m, m)`` lag covariances with denominators ``n - h``."""
        n = self.count
        den = np.maximum(n - np.arange(self.H + 1), 1)
        return self.sums / den[:, None, None, None]

    def bartlett(self, n: Optional[int] = None) -> np.ndarray:
        """Per-path ``sum_{|h|<=H} (1 - |h|/n) C_hat(h)``."""
        n = self.count if n is None else n
        C = self.lag_covs()
        out = C[0].copy()
        for h in range(1, self.H + 1):
            wgt = 1.0 - h / n
            out += wgt * (C[h] + np.swapaxes(C[h], -1, -2))
        return out


# --------------------------------------------------------------------------
# closed-form oracles for the discretized model


def stationary_cov_exact(model: BRCAModel, tol: float = 1e-15, max_iter: int = 200_000) -> np.ndarray:
    """Solve ``C = E[P C P^T] + C_eps`` by fixed-point iteration."""
    S = model.noise_sampler.covariance()
    C = S.copy()
    scale = max(float(np.abs(S).max()), 1e-300)
    for _ in range(max_iter):
        nxt = model.op_sampler.second_moment_map(C) + S
        if np.abs(nxt - C).max() <= tol * scale:
            return 0.5 * (nxt + nxt.T)
        C = nxt
    raise ConvergenceError("stationary covariance iteration did not converge")


def lag_cov_exact(model: BRCAModel, h: int, C0: Optional[np.ndarray] = None) -> np.ndarray:
    C0 = stationary_cov_exact(model) if C0 is None else C0
    Pbar = model.mean_operator().matrix
    out = C0 @ np.linalg.matrix_power(Pbar.T, abs(h))
    return out if h >= 0 else out.T


def longrun_cov_exact(model: BRCAModel, C0: Optional[np.ndarray] = None) -> np.ndarray:
    """``sum_h C_{X_0, X_h} = C (I - P^T)^{-1} + (I - P)^{-1} C - C``."""
    C0 = stationary_cov_exact(model) if C0 is None else C0
    Pbar = model.mean_operator().matrix
    I = np.eye(model.m)
    left = np.linalg.solve(I - Pbar, C0)
    return left + left.T - C0


def mean_cov_exact(model: BRCAModel, n: int, C0: Optional[np.ndarray] = None) -> np.ndarray:
    """``n Cov(X_bar_n) = sum_{|h|<n} (1 - |h|/n) C_{X_0, X_h}``."""
    C0 = stationary_cov_exact(model) if C0 is None else C0
    Pbar = model.mean_operator().matrix
    out = C0.copy()
    lag = C0.copy()
    for h in range(1, n):
        lag = lag @ Pbar.T
        out += (1.0 - h / n) * (lag + lag.T)
        if not np.any(lag):
            break
    return out


def martingale_cov_exact(model: BRCAModel, C0: Optional[np.ndarray] = None) -> np.ndarray:
    """Covariance of ``M_1 = R (Y_1 - rho_bar Y_0)``."""
    C0 = stationary_cov_exact(model) if C0 is None else C0
    Pbar = model.mean_operator().matrix
    inner_cov = model.op_sampler.second_moment_map(C0) - Pbar @ C0 @ Pbar.T + model.noise_sampler.covariance()
    R = np.linalg.inv(np.eye(model.m) - Pbar)
    return R @ inner_cov @ R.T


# --------------------------------------------------------------------------
# Monte Carlo checks


def _seed_from(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(as_generator(rng).integers(0, 2**63))


@dataclass(frozen=True)
class CovIdentityCheck:
    residual: float
    se: float
    n_reps: int
    cov_nuclear: float

    def __float__(self):
        return self.residual


def cov_identity_residual(model: BRCAModel, n_reps: int, n_len: int, rng, n_batches: int = 20) -> CovIdentityCheck:
    """Relative nuclear-norm residual of ``C_X - E[rho C_X rho*] - C_eps``.

    ``C_X`` is estimated from ``n_reps`` independent states, each taken after
    ``n_len`` steps from ``mu``; ``C_eps`` from as many fresh noise draws.  The
    operator average ``E[rho C rho*]`` is taken in closed form.  ``se`` is the
    batch-means nuclear-norm noise scale on the same relative footing.
    """
    if n_reps < 2 * n_batches:
        raise InvalidArgument("n_reps too small for the requested batches")
    model.check_simulable(2.0)
    seed = _seed_from(rng)
    size = n_reps // n_batches

    def one(size, rho_rng, eps_rng):
        Y = stationary_states(model, size, rho_rng, eps_rng, n_len)
        E = model.noise_sampler.draw(eps_rng, size)
        Cx = Y.T @ Y / size
        Ce = E.T @ E / size
        return Cx, Cx - model.op_sampler.second_moment_map(Cx) - Ce

    out = map_blocks(one, size * n_batches, seed, (11,), block=size)
    Cx = np.mean([o[0] for o in out], axis=0)
    D = np.array([o[1] for o in out])
    g = model.grid
    cx_nuc = CovOperator(g, Cx).nuclear_norm()
    if cx_nuc == 0:
        return CovIdentityCheck(0.0, 0.0, size * n_batches, 0.0)
    resid = CovOperator(g, D.mean(axis=0)).nuclear_norm() / cx_nuc
    se = nuclear_se(D, g) / cx_nuc
    return CovIdentityCheck(resid, se, size * n_batches, cx_nuc)


@dataclass(frozen=True)
class DecayRow:
    h: int
    nuclear: float
    se: float
    bound: float
    violation: bool


def cross_cov_decay_check(model: BRCAModel, h_max: int, rng, n: int = 20_000, n_paths: int = 10,
                          burnin: int = 500) -> list:
    """Empirical ``|C_{X_0,X_h}|_N`` next to ``(E|rho_0|)^h E|X_0|^2``.

    ``n`` observations are split over ``n_paths`` independent stationary paths;
    the spread between paths gives the nuclear-norm standard error.  A row is
    flagged when the estimate exceeds the bound by more than 4 SE.
    """
    model.check_simulable(2.0)
    seed = _seed_from(rng)
    rho_rng, eps_rng = split_streams(seed, 12)
    L = n // n_paths
    if L <= h_max:
        raise InvalidArgument("path length must exceed h_max")
    acc = LagAccumulator(n_paths, model.m, h_max)
    states = iterate_states(model, L, n_paths, rho_rng, eps_rng, burnin)
    next(states)
    for Y in states:
        acc.push(Y)
    C = acc.lag_covs()  # (H+1, paths, m, m)
    g = model.grid
    r = model.op_sampler.norm_moment(1.0)
    second = float(np.trace(CovOperator(g, stationary_cov_exact(model)).weighted))
    rows = []
    for h in range(h_max + 1):
        est = CovOperator(g, C[h].mean(axis=0)).nuclear_norm()
        se = nuclear_se(C[h], g)
        bound = r**h * second
        rows.append(DecayRow(h, est, se, bound, bool(est > bound + 4 * se)))
    return rows


# --------------------------------------------------------------------------
# export


def cov_summary(C: CovOperator) -> dict:
    ev = C.eigenvalues()
    return {
        "m": C.grid.m,
        "nuclear_norm": C.nuclear_norm(),
        "operator_norm": C.operator_norm(),
        "trace": C.trace(),
        "top_eigenvalues": [float(x) for x in ev[:5]],
    }


def write_cov_csv(path, C: CovOperator) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"c{j}" for j in range(C.grid.m)])
        for i, row in enumerate(C.matrix):
            w.writerow([i] + [repr(float(v)) for v in row])


def write_cov_summary(path, C: CovOperator, extra: Optional[dict] = None) -> None:
    data = cov_summary(C)
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
