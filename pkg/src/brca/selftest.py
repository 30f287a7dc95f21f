"""Fast end-to-end run of the exact identities and degenerate cases."""

from __future__ import annotations

import numpy as np

from ._rng import generator
from .coeffgen import FixedKernel, IIDGridGaussian
from .errors import BRCAError, InvalidArgument
from .estimate import CovOperator, bartlett_mean_cov, empirical_cross_cov, sample_mean
from .funspace import L2, SUP, LinearOp, grid_function, identity_op, make_uniform_grid, op_norm
from .martdecomp import decompose, direct_inverse, martingale_mean_test, neumann_inverse, telescoping_residual
from .models import build_model, explosive_model, functional_model, null_model, scalar_model
from .process import BRCAModel, SimConfig, Trajectory, finite_decomposition_residual, simulate_recursive, simulate_series
from .verify import (
    complete_convergence_experiment,
    hilbert_rate_experiment,
    ks_statistic,
    slln_experiment,
    wlln_experiment,
)


def _rank_one_nuclear():
    g = make_uniform_grid(16)
    f = grid_function(g, lambda t: np.sin(3 * t) + 1)
    nn = CovOperator(g, np.outer(f.values, f.values)).nuclear_norm()
    return abs(nn - float(f.values**2 @ g.weights)) < 1e-12, f"{nn:.15g}"


def _identity_norms():
    g = make_uniform_grid(12)
    vals = [op_norm(identity_op(g), k) for k in (L2, SUP)]
    return all(abs(v - 1) < 1e-12 for v in vals), str(vals)


def _neumann():
    g = make_uniform_grid(8)
    P = LinearOp.from_matrix(g, 0.5 * np.eye(8))
    R = neumann_inverse(P)
    err = np.abs(R.matrix @ (np.eye(8) - P.matrix) - np.eye(8)).max()
    gap = np.abs(R.matrix - direct_inverse(P).matrix).max()
    return err < 1e-10 and gap < 1e-9, f"{err:.2g}, {gap:.2g}"


def _decomposition():
    model = functional_model(m=8)
    traj = simulate_recursive(model, SimConfig(n=300, burnin=50, seed=1, record_draws=True))
    tel = telescoping_residual(traj, decompose(traj, model.mean_operator()))
    fin = finite_decomposition_residual(traj)
    return tel < 1e-9 and fin < 1e-9, f"telescoping {tel:.2g}, finite {fin:.2g}"


def _engines_agree():
    model = functional_model(m=8)
    cfg = SimConfig(n=100, burnin=20, seed=3, truncation_J=120)
    d = np.abs(simulate_recursive(model, cfg).values - simulate_series(model, cfg).values).max()
    return d < 1e-10, f"{d:.2g}"


def _martingale_noiseless():
    g = make_uniform_grid(8)
    model = BRCAModel(grid_function(g, 0.0), FixedKernel(g, 0.5 * np.eye(8) / g.weights), IIDGridGaussian(g, 0.0))
    mean, se = martingale_mean_test(model, grid_function(g, 1.0), 1000, generator(0))
    return mean == 0.0 and se == 0.0, f"{mean}, {se}"


def _constant_trajectory():
    model = null_model(m=4)
    f = grid_function(model.grid, lambda t: t**2)
    traj = Trajectory(model, np.tile(f.values, (11, 1)))
    m_ok = np.allclose(sample_mean(traj).values, f.values, atol=1e-15)
    c = empirical_cross_cov(traj, 0, sample_mean(traj)).nuclear_norm()
    return m_ok and c < 1e-28, f"cov nuclear {c:.2g}"


def _bartlett_two():
    model = null_model(m=2)
    v = np.array([[1.0, -1.0], [2.0, 0.5], [-1.0, 1.5]])
    traj = Trajectory(model, v)
    B = bartlett_mean_cov(traj, grid_function(model.grid, 0.0)).matrix
    y = v[1:]
    expect = (np.outer(y[0], y[0]) + np.outer(y[1], y[1])) / 2 + 0.5 * (np.outer(y[0], y[1]) + np.outer(y[1], y[0]))
    return np.allclose(B, expect, atol=1e-14), ""


def _ks_median():
    r = ks_statistic([0.0], lambda x: 0.5 + 0 * x)
    return r.statistic == 0.5, f"{r.statistic}"


def _conditions_fixed():
    g = make_uniform_grid(8)
    s = FixedKernel(g, 0.5 * np.eye(8) / g.weights)
    v = s.norm_moment(2.0)
    return abs(v - 0.25) < 1e-12, f"{v:.15g}"


def _complete_rejects_p1():
    try:
        complete_convergence_experiment(scalar_model(), 1.0, 1.0, 1.0, 64, 10)
    except InvalidArgument:
        return True, ""
    return False, "accepted p = 1"


def _explosive_refused():
    model = explosive_model(m=4)
    refused = 0
    for run in (
        lambda: wlln_experiment(model, [50, 100], 10),
        lambda: hilbert_rate_experiment(model, [50], 10),
        lambda: slln_experiment(model, [50, 100]),
    ):
        try:
            run()
        except BRCAError:
            refused += 1
    return refused == 3, f"{refused}/3 refused"


def _null_degenerate():
    model = build_model({"grid.m": 4, "operator.kind": "fixed", "operator.kernel": "zero",
                         "operator.normalize": False, "noise.kind": "iid_gaussian", "noise.sigma": 0.0})
    rep = hilbert_rate_experiment(model, [100], 20)
    return rep.passed and rep.degenerate, rep.verdict


CHECKS = [
    ("rank-one nuclear norm", _rank_one_nuclear),
    ("identity operator norms", _identity_norms),
    ("neumann inverse", _neumann),
    ("decomposition identities", _decomposition),
    ("series and recursive engines agree", _engines_agree),
    ("martingale mean without noise", _martingale_noiseless),
    ("constant trajectory estimates", _constant_trajectory),
    ("bartlett weights at n = 2", _bartlett_two),
    ("ks statistic at the median", _ks_median),
    ("fixed kernel moment", _conditions_fixed),
    ("complete convergence rejects p = 1", _complete_rejects_p1),
    ("explosive model refused", _explosive_refused),
    ("degenerate noise passes vacuously", _null_degenerate),
]


def run_selftest() -> list:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
