"""Acceptance criteria, one test each.

Every test records a ``PASS criterion k: ...`` or ``FAIL criterion k: ...``
line, printed at the end of the pytest run (and immediately with ``-s``).
"""

import io
import math
import os

import numpy as np
import pytest

from brca._rng import generator
from brca.cli import main
from brca.errors import BRCAError
from brca.estimate import cov_identity_residual, empirical_cross_cov, longrun_cov
from brca.funspace import L2, LinearOp, make_uniform_grid, op_norm
from brca.martdecomp import decompose, direct_inverse, neumann_inverse, telescoping_residual
from brca.models import build_model, explosive_model, functional_model, null_model, scalar_model
from brca.process import SimConfig, finite_decomposition_residual, simulate_recursive
from brca.verify import (
    clt_experiment,
    complete_convergence_experiment,
    exp_moment_experiment,
    hilbert_rate_experiment,
    ks_band,
    slln_experiment,
    wlln_experiment,
)

from conftest import ACCEPTANCE_LINES
from oracles import batch_means, scalar_rca_moments


def record(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_models(count, seed):
    rng = np.random.default_rng(seed)
    kinds = ["fixed", "random_iid", "two_regime", "scaled_contraction"]
    noises = ["gaussian_process", "iid_gaussian", "bounded_uniform"]
    out = []
    for k in range(count):
        spec = {
            "grid.m": [1, 8, 32][k % 3],
            "mu.kind": ["zero", "constant", "sine"][rng.integers(3)],
            "operator.kind": kinds[rng.integers(4)],
            "operator.kernel": ["exponential", "gaussian"][rng.integers(2)],
            "operator.scale": float(rng.uniform(0.2, 0.9)),
            "operator.amplitude.high": float(rng.uniform(0.2, 0.9)),
            "operator.scale_b": float(rng.uniform(-0.5, 0.5)),
            "operator.c": float(rng.uniform(0.2, 0.9)),
            "noise.kind": noises[rng.integers(3)],
        }
        out.append(build_model(spec, name=f"random{k}"))
    return out


def test_criterion_01_exact_identities():
    worst_tel = worst_fin = 0.0
    for k, model in enumerate(random_models(20, 2024)):
        traj = simulate_recursive(model, SimConfig(n=1000, burnin=100, seed=k, record_draws=True))
        worst_tel = max(worst_tel, telescoping_residual(traj, decompose(traj, model.mean_operator())))
        worst_fin = max(worst_fin, finite_decomposition_residual(traj))
    record(1, worst_tel < 1e-9 and worst_fin < 1e-9,
           f"20 models, max telescoping residual {worst_tel:.2e}, max finite residual {worst_fin:.2e} (< 1e-9)")


def test_criterion_02_neumann():
    rng = np.random.default_rng(7)
    worst_id = worst_gap = 0.0
    for m in (1, 8, 32):
        g = make_uniform_grid(m)
        for c in np.linspace(0.1, 0.9, 9):
            A = LinearOp.from_matrix(g, rng.standard_normal((m, m)))
            P = LinearOp.from_matrix(g, c * A.matrix / op_norm(A, L2))
            R = neumann_inverse(P)
            resid = LinearOp.from_matrix(g, R.matrix @ (np.eye(m) - P.matrix) - np.eye(m))
            worst_id = max(worst_id, op_norm(resid, L2))
            worst_gap = max(worst_gap, float(np.abs(R.matrix - direct_inverse(P).matrix).max()))
    record(2, worst_id < 1e-10 and worst_gap < 1e-9,
           f"norms 0.1..0.9, |R(I - rho_bar) - I| = {worst_id:.2e} (< 1e-10), gap to direct solve {worst_gap:.2e} (< 1e-9)")


def test_criterion_03_scalar_oracles():
    var, m1, lr = scalar_rca_moments(0.0, 0.8, 1.0)
    model = scalar_model()
    traj = simulate_recursive(model, SimConfig(n=1_000_000, seed=3))
    x = traj.centered[1:, 0]
    v_hat = float(x @ x / x.size)
    ok_var = abs(v_hat / var - 1) < 0.02
    lag_z = []
    for h in range(1, 6):
        c_hat = empirical_cross_cov(traj, h, model.mu).matrix[0, 0]
        _, se = batch_means(x[:-h] * x[h:], 100)
        lag_z.append(abs(c_hat - m1**h * var) / se)
    lrs = np.array([longrun_cov(simulate_recursive(model, SimConfig(n=25_000, seed=500 + r)), None,
                                model.mu).matrix[0, 0] for r in range(40)])
    lr_z = abs(lrs.mean() - lr) / (lrs.std(ddof=1) / math.sqrt(lrs.size))
    ok = ok_var and max(lag_z) < 4 and lr_z < 4
    record(3, ok, f"variance rel. error {v_hat / var - 1:+.4f} (< 2%), max lag z {max(lag_z):.2f} (h <= 5, < 4), "
                  f"long-run z {lr_z:.2f} (< 4)")


def test_criterion_04_cov_identity():
    chk = cov_identity_residual(functional_model(m=8), 2000, 500, generator(4))
    record(4, chk.residual < 3 * chk.se, f"relative residual {chk.residual:.4f} vs 3 SE = {3 * chk.se:.4f}, 2000 reps, m = 8")


def test_criterion_05_wlln():
    rep = wlln_experiment(functional_model(m=8), [400, 1600, 3200], 200, rng=0)
    e400, e3200 = rep.value("nuclear_error", 400), rep.value("nuclear_error", 3200)
    record(5, e3200 < 0.5 * e400 and rep.passed and rep.runtime_seconds < 300,
           f"nuclear error {e400:.4f} at n = 400, {e3200:.4f} at n = 3200 (ratio {e3200 / e400:.3f} < 0.5), "
           f"verdict {rep.verdict}, {rep.runtime_seconds:.1f} s")


def test_criterion_06_hilbert_rate():
    rep = hilbert_rate_experiment(functional_model(m=8), [2000], 1000, rng=0)
    rel = rep.value("relative_error", 2000)
    record(6, abs(rel) < 0.10, f"n E|X_bar - mu|^2 / trace - 1 = {rel:+.4f} (|.| < 0.10), n = 2000, 1000 reps")


def test_criterion_07_slln():
    rep = slln_experiment(functional_model(m=8), [1000, 10_000, 100_000], rng=0)
    a, b = rep.value("mean_error_norm", 1000), rep.value("mean_error_norm", 100_000)
    theta = rep.details["threshold"]
    record(7, b < a / 4 and b < theta, f"|X_bar - mu| = {a:.4g} at 1e3, {b:.4g} at 1e5 (< {a / 4:.4g} and < {theta:.4g})")


def test_criterion_08_complete_convergence():
    rep = complete_convergence_experiment(functional_model(m=8), 1.0, 1.5, 1.0, 4096, 2000, rng=0)
    blocks = [r.value for r in rep.rows("block_contribution")]
    record(8, rep.passed, f"block sums {', '.join(f'{b:.3g}' for b in blocks)}; verdict {rep.verdict}")


def test_criterion_09_exp_moments():
    model = build_model({"grid.m": 8, "operator.kind": "scaled_contraction", "operator.kernel": "constant",
                         "operator.c": 0.5, "noise.kind": "bounded_uniform", "noise.amplitude": 1.0})
    rep = exp_moment_experiment(model, [0.5, 1.0, 2.0], 20_000, rng=0)
    gap = max(r.value for r in rep.metrics if r.metric.startswith("half_batch_gap"))
    e1, bound = rep.value("E_exp_X[g=1]"), rep.value("support_bound[g=1]")
    record(9, rep.passed and rep.details["delta"] <= 0.5,
           f"Delta = {rep.details['delta']:.3g}, max half-batch gap {gap:.4f} (< 0.10), "
           f"E exp|X| = {e1:.4f} <= exp(2) = {bound:.4f}, verdict {rep.verdict}")


def test_criterion_10_clt():
    rep = clt_experiment(functional_model(m=8), 1000, 2000, rng=0)
    ks = [k.statistic for k in rep.ks]
    ratio = max(r.value for r in rep.rows("coboundary_ratio[0]") + rep.rows("coboundary_ratio[1]")
                + rep.rows("coboundary_ratio[2]") if r.n == 10_000)
    record(10, rep.passed, f"KS {', '.join(f'{s:.4f}' for s in ks)} (< {ks_band(2000):.4f}), "
                           f"max coboundary / SD {ratio:.4f} (< 0.1), verdict {rep.verdict}")


def test_criterion_11_null_gate():
    runs = {
        "wlln": lambda m: wlln_experiment(m, [400, 1600, 3200], 200, rng=0),
        "rate": lambda m: hilbert_rate_experiment(m, [2000], 1000, rng=0),
        "slln": lambda m: slln_experiment(m, [1000, 10_000, 100_000], rng=0),
        "complete": lambda m: complete_convergence_experiment(m, 1.0, 1.5, 1.0, 4096, 2000, rng=0),
        "expmoment": lambda m: exp_moment_experiment(m, [0.5, 1.0, 2.0], 20_000, rng=0),
        "clt": lambda m: clt_experiment(m, 1000, 2000, rng=0),
    }
    passed, refused = [], []
    for name, run in runs.items():
        model = null_model(m=8, **({"noise.kind": "bounded_uniform"} if name == "expmoment" else {}))
        if run(model).passed:
            passed.append(name)
        try:
            run(explosive_model(m=8))
        except BRCAError:
            refused.append(name)
    record(11, len(passed) == 6 and len(refused) == 6,
           f"null model passes {len(passed)}/6 ({', '.join(passed)}); 1.1 I refused by {len(refused)}/6")


def test_criterion_12_reproducible(tmp_path):
    commands = [
        ["verify", "wlln", "--n-list", "200,400", "--reps", "40"],
        ["verify", "clt", "--reps", "1000", "--n", "500"],
        ["verify", "expmoment", "--reps", "2000", "--set", "model.operator.kind=scaled_contraction",
         "--set", "model.operator.kernel=constant", "--set", "model.noise.kind=bounded_uniform"],
        ["simulate", "--n", "500", "--engine", "both"],
        ["estimate", "--n", "2000", "--reps", "200"],
        ["decompose", "--n", "500", "--n-resample", "1000"],
        ["conditions", "--n-mc", "2000"],
    ]
    same = 0
    for cmd in commands:
        args = cmd + ["--seed", "12", "--set", "model.grid.m=8", "--out", str(tmp_path)]
        snaps = []
        for _ in range(2):
            main(args, out=io.StringIO())
            snap = {}
            for f in sorted(os.listdir(tmp_path)):
                lines = open(tmp_path / f, "rb").read().split(b"\n")
                if f.endswith(".json") and lines[1].startswith(b'  "header"'):
                    del lines[1]  # timestamp and runtime
                snap[f] = b"\n".join(lines)
            snaps.append(snap)
            for f in os.listdir(tmp_path):
                os.remove(tmp_path / f)
        same += snaps[0] == snaps[1] and bool(snaps[0])
    record(12, same == len(commands), f"{same}/{len(commands)} commands give byte-identical outputs on rerun")
