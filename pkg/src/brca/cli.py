"""Command-line runner: ``brca <command> [--config FILE] [options]``.

Exit status: 0 when the command completed (and any verdict passed), 2 when a
theorem check ran and failed, 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._parallel import set_threads
from ._rng import generator
from .coeffgen import diagnose_conditions
from .config import RunConfig, load_config, parse_override
from .errors import BRCAError, ConfigError
from .estimate import (
    CovOperator,
    bartlett_mean_cov,
    cov_identity_residual,
    cov_summary,
    cross_cov_decay_check,
    default_longrun_lag,
    empirical_cross_cov,
    longrun_cov,
    longrun_cov_exact,
    sample_mean,
    stationary_cov_exact,
    write_cov_csv,
)
from .funspace import L2, SUP, Lp, op_norm
from .martdecomp import decompose, martingale_mean_test, telescoping_residual
from .models import build_model
from .process import (
    SimConfig,
    finite_decomposition_residual,
    simulate_recursive,
    simulate_series,
    write_trajectories_csv,
)
from .verify import (
    ExperimentReport,
    clt_experiment,
    complete_convergence_experiment,
    exp_moment_experiment,
    hilbert_rate_experiment,
    report_csv,
    report_json,
    slln_experiment,
    wlln_experiment,
)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
THEOREMS = ("wlln", "rate", "slln", "complete", "expmoment", "clt")

# command-line flag -> command.<key>
FLAG_KEYS = {
    "n": int,
    "reps": int,
    "burnin": int,
    "p": float,
    "alpha": float,
    "eps": float,
    "n_max": int,
    "n_mc": int,
    "H": int,
    "h_max": int,
    "J": int,
    "engine": str,
    "n_list": None,
    "gammas": None,
    "n_resample": int,
}

DEFAULTS = {
    "conditions": {"p": 2.0, "n_mc": 10_000, "norm": "L2"},
    "simulate": {"n": 1000, "burnin": 500, "engine": "recursive", "J": None},
    "decompose": {"n": 1000, "burnin": 500, "n_resample": 10_000},
    "estimate": {"n": 10_000, "burnin": 500, "H": None, "reps": 2000, "h_max": 5},
    "wlln": {"n_list": [400, 1600, 3200], "reps": 200, "H": None, "burnin": 500},
    "rate": {"n_list": [2000], "reps": 1000, "burnin": 500},
    "slln": {"n_list": [1000, 10_000, 100_000], "burnin": 500},
    "complete": {"alpha": 1.0, "p": 1.5, "eps": 1.0, "n_max": 4096, "reps": 2000, "burnin": 500},
    "expmoment": {"gammas": [0.5, 1.0, 2.0], "reps": 20_000, "burnin": 200},
    "clt": {"n": 1000, "reps": 2000, "burnin": 500},
}


# --------------------------------------------------------------------------
# helpers


class Runner:
    def __init__(self, cfg: RunConfig, name: str, out=sys.stdout):
        self.cfg = cfg
        self.name = name
        self.out = out
        self.params = dict(DEFAULTS.get(name, {}))
        self.params.update(cfg.command)

    def get(self, key, kind=None):
        v = self.params.get(key)
        if v is None or kind is None:
            return v
        try:
            if kind is int and isinstance(v, float) and not v.is_integer():
                raise ValueError
            return kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"command.{key}: expected {kind.__name__}, got {v!r}") from None

    def int_list(self, key):
        v = self.params.get(key)
        if isinstance(v, str):
            v = [x for x in v.replace(",", " ").split()]
        if isinstance(v, (int, float)):
            v = [v]
        try:
            return [int(x) for x in v]
        except (TypeError, ValueError):
            raise ConfigError(f"command.{key}: expected a list of integers, got {v!r}") from None

    def float_list(self, key):
        v = self.params.get(key)
        if isinstance(v, str):
            v = [x for x in v.replace(",", " ").split()]
        if isinstance(v, (int, float)):
            v = [v]
        try:
            return [float(x) for x in v]
        except (TypeError, ValueError):
            raise ConfigError(f"command.{key}: expected a list of numbers, got {v!r}") from None

    @property
    def outdir(self) -> str:
        d = str(self.cfg.output.get("dir", "brca_out"))
        try:
            os.makedirs(d, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output.dir: cannot create {d!r}: {exc.strerror}") from None
        if not os.access(d, os.W_OK):
            raise ConfigError(f"output.dir: {d!r} is not writable")
        return d

    def path(self, filename):
        return os.path.join(self.outdir, filename)

    def model(self):
        return build_model(self.cfg.model)

    def say(self, line: str):
        print(line, file=self.out)

    def write_json(self, filename, data: dict):
        with open(self.path(filename), "w") as fh:
            json.dump(_jsonable(data), fh, indent=2)
            fh.write("\n")

    def effective(self) -> dict:
        d = self.cfg.flat()
        for k, v in sorted(self.params.items()):
            d.setdefault(f"command.{k}", v)
        return dict(sorted(d.items()))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _norm_kind(text):
    t = str(text).lower()
    if t in ("sup", "inf", "linf"):
        return SUP
    if t.startswith("l"):
        t = t[1:]
    try:
        return Lp(float(t))
    except (ValueError, BRCAError):
        raise ConfigError(f"command.norm: unknown norm {text!r}") from None


# --------------------------------------------------------------------------
# commands


def cmd_conditions(r: Runner) -> int:
    model = r.model()
    p = r.get("p", float)
    kind = _norm_kind(r.get("norm"))
    rep = diagnose_conditions(model.op_sampler, p, r.get("n_mc", int), generator(r.cfg.seed, 1), kind)
    exact = model.op_sampler.norm_moment(p, kind)
    rb = model.op_sampler.mean_operator()
    data = {"config": r.effective(), "closed_form_E_norm_rho_p": exact,
            "mean_operator_norm": op_norm(rb, L2), "diagnostics": rep.as_dict()}
    r.say(f"E|rho|^{p:g} = {rep.est_E_norm_rho_p:.6g} +/- {rep.hw_E_norm_rho_p:.2g} (closed form {exact:.6g})")
    r.say(f"E log|rho| = {rep.est_E_log_norm_rho:.6g} +/- {rep.hw_E_log_norm_rho:.2g}")
    r.say(f"sup|rho| = {rep.est_sup_norm:.6g} ({'exact' if rep.sup_norm_exact else 'max over draws'})")
    r.say(f"C3({p:g}) {'pass' if rep.c3 else 'fail'}; log criterion {'pass' if rep.log_criterion else 'fail'}; "
          f"Delta < 1 {'pass' if rep.delta_lt_1 else 'fail'}")
    if "json" in r.cfg.formats:
        r.write_json("conditions.json", data)
    return EXIT_OK if rep.c3 else EXIT_FAIL


def cmd_simulate(r: Runner) -> int:
    model = r.model()
    engine = r.get("engine", str)
    if engine not in ("recursive", "series", "both"):
        raise ConfigError(f"command.engine: unknown engine {engine!r} (choose recursive, series, both)")
    J = r.get("J", int)
    sim = SimConfig(n=r.get("n", int), burnin=r.get("burnin", int), seed=r.cfg.seed, truncation_J=J, p=2.0)
    trajs = {}
    if engine in ("recursive", "both"):
        trajs["recursive"] = simulate_recursive(model, sim)
    if engine in ("series", "both"):
        trajs["series"] = simulate_series(model, sim)
    w = model.grid.weights
    summary = {"config": r.effective(), "engines": {}}
    for name, t in trajs.items():
        Y = t.centered
        sq = (Y**2) @ w
        stats = {"mean_sq_norm": float(sq.mean()), "sample_mean_norm": float(np.sqrt((Y[1:].mean(0) ** 2) @ w))}
        if "J" in t.meta:
            stats["J"] = t.meta["J"]
        summary["engines"][name] = stats
        write_trajectories_csv(r.path(f"trajectory_{name}.csv"), t)
        r.say(f"{name}: mean |X - mu|^2 = {stats['mean_sq_norm']:.6g}, |X_bar - mu| = {stats['sample_mean_norm']:.6g}")
    if len(trajs) == 2:
        a, b = trajs["recursive"].values, trajs["series"].values
        diff = float(np.abs(a - b).max())
        ma, mb = summary["engines"]["recursive"]["mean_sq_norm"], summary["engines"]["series"]["mean_sq_norm"]
        summary["max_abs_difference"] = diff
        summary["second_moment_relative_gap"] = abs(ma - mb) / max(ma, 1e-300)
        r.say(f"engines: max |difference| = {diff:.3g}, second-moment gap = {summary['second_moment_relative_gap']:.3g}")
    if "json" in r.cfg.formats:
        r.write_json("simulate.json", summary)
    return EXIT_OK


def cmd_decompose(r: Runner) -> int:
    model = r.model()
    sim = SimConfig(n=r.get("n", int), burnin=r.get("burnin", int), seed=r.cfg.seed, record_draws=True, p=2.0)
    traj = simulate_recursive(model, sim)
    cob = decompose(traj, model.mean_operator())
    tel = telescoping_residual(traj, cob)
    fin = finite_decomposition_residual(traj)
    mean, se = martingale_mean_test(model, traj.X[-1], r.get("n_resample", int), generator(r.cfg.seed, 2))
    data = {
        "config": r.effective(),
        "neumann_terms": cob.n_terms,
        "telescoping_residual": tel,
        "finite_decomposition_residual": fin,
        "martingale_mean_norm": mean,
        "martingale_mean_se": se,
        "martingale_mean_ratio": mean / se if se > 0 else 0.0,
    }
    r.say(f"telescoping residual = {tel:.3g}")
    r.say(f"finite decomposition residual = {fin:.3g}")
    r.say(f"martingale mean test: |mean| = {mean:.4g}, se = {se:.4g}")
    if "json" in r.cfg.formats:
        r.write_json("decompose.json", data)
    return EXIT_OK


def cmd_estimate(r: Runner) -> int:
    model = r.model()
    g = model.grid
    sim = SimConfig(n=r.get("n", int), burnin=r.get("burnin", int), seed=r.cfg.seed, p=2.0)
    traj = simulate_recursive(model, sim)
    xbar = sample_mean(traj)
    C0 = empirical_cross_cov(traj, 0, xbar)
    H = r.get("H", int)
    if H is None:
        H = default_longrun_lag(model, float(np.diag(stationary_cov_exact(model)) @ g.weights))
    L = longrun_cov(traj, H, xbar, model)
    B = bartlett_mean_cov(traj, xbar, max_lag=H)
    Lx = CovOperator(g, longrun_cov_exact(model))
    ident = cov_identity_residual(model, r.get("reps", int), r.get("burnin", int), generator(r.cfg.seed, 3))
    decay = cross_cov_decay_check(model, r.get("h_max", int), generator(r.cfg.seed, 4))
    data = {
        "config": r.effective(),
        "sample_mean": xbar.values,
        "lag0": cov_summary(C0),
        "longrun": cov_summary(L),
        "bartlett": cov_summary(B),
        "longrun_lag": H,
        "longrun_exact_nuclear_distance": (L - Lx).nuclear_norm(),
        "cov_identity": {"residual": ident.residual, "se": ident.se, "reps": ident.n_reps},
        "decay": [{"h": d.h, "nuclear": d.nuclear, "se": d.se, "bound": d.bound, "violation": d.violation}
                  for d in decay],
    }
    r.say(f"lag-0 covariance: nuclear = {C0.nuclear_norm():.6g}")
    r.say(f"long-run covariance: nuclear = {L.nuclear_norm():.6g} (exact {Lx.nuclear_norm():.6g})")
    r.say(f"covariance identity residual = {ident.residual:.4g} (se {ident.se:.3g})")
    for d in decay:
        r.say(f"decay h={d.h}: nuclear = {d.nuclear:.4g} +/- {d.se:.2g}, bound = {d.bound:.4g}")
    if "csv" in r.cfg.formats:
        write_cov_csv(r.path("cov_lag0.csv"), C0)
        write_cov_csv(r.path("cov_longrun.csv"), L)
        write_cov_csv(r.path("cov_bartlett.csv"), B)
    if "json" in r.cfg.formats:
        r.write_json("estimate.json", data)
    return EXIT_OK


def run_theorem(r: Runner, which: str) -> ExperimentReport:
    model = r.model()
    seed = r.cfg.seed
    burnin = r.get("burnin", int)
    if which == "wlln":
        return wlln_experiment(model, r.int_list("n_list"), r.get("reps", int), r.get("H", int), seed, burnin)
    if which == "rate":
        return hilbert_rate_experiment(model, r.int_list("n_list"), r.get("reps", int), seed, burnin)
    if which == "slln":
        return slln_experiment(model, r.int_list("n_list"), seed, burnin)
    if which == "complete":
        return complete_convergence_experiment(
            model, r.get("alpha", float), r.get("p", float), r.get("eps", float), r.get("n_max", int),
            r.get("reps", int), seed, burnin,
        )
    if which == "expmoment":
        return exp_moment_experiment(model, r.float_list("gammas"), r.get("reps", int), seed, burnin)
    if which == "clt":
        return clt_experiment(model, r.get("n", int), r.get("reps", int), rng=seed, burnin=burnin)
    raise ConfigError(f"unknown theorem {which!r}")


def cmd_verify(r: Runner, which: str) -> int:
    rep = run_theorem(r, which)
    for row in rep.metrics:
        r.say(f"{rep.theorem} n={row.n} {row.metric} = {row.value:.6g} +/- {row.half_width:.3g}")
    r.say(f"{rep.theorem}: verdict {rep.verdict} ({rep.criterion})")
    if "json" in r.cfg.formats:
        with open(r.path(f"{which}.json"), "w") as fh:
            fh.write(report_json(rep, {"config": r.effective()}))
    if "csv" in r.cfg.formats:
        with open(r.path(f"{which}.csv"), "w", newline="") as fh:
            fh.write(report_csv(rep))
    return EXIT_OK if rep.completed else EXIT_FAIL


def cmd_selftest(r: Runner) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok, detail in results:
        r.say(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    bad = sum(not ok for _, ok, _ in results)
    r.say(f"selftest: {len(results) - bad}/{len(results)} passed")
    return EXIT_OK if bad == 0 else EXIT_FAIL


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, flags=()):
    p.add_argument("--config", help="configuration file (flat dotted key = value)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--seed", type=int, help="master seed (config: seed)")
    p.add_argument("--out", help="output directory (config: output.dir)")
    p.add_argument("--format", help="comma-separated output formats, json,csv (config: output.formats)")
    p.add_argument("--threads", type=int, help="worker cap for replication blocks (config: threads)")
    for f in flags:
        opt = "--" + f.replace("_", "-")
        p.add_argument(opt, dest=f, help=f"config: command.{f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brca", description="BRCA(1) simulation and limit-theorem checks")
    ap.add_argument("--version", action="version", version=f"brca {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("conditions", help="diagnose contraction conditions"), ("p", "n_mc"))
    _common(sub.add_parser("simulate", help="simulate a trajectory"), ("n", "burnin", "engine", "J"))
    _common(sub.add_parser("decompose", help="martingale-coboundary decomposition"), ("n", "burnin", "n_resample"))
    _common(sub.add_parser("estimate", help="covariance estimation"), ("n", "burnin", "H", "reps", "h_max"))
    v = sub.add_parser("verify", help="run a limit-theorem harness")
    v.add_argument("theorem", choices=THEOREMS)
    _common(v, ("n", "reps", "burnin", "p", "alpha", "eps", "n_max", "H", "n_list", "gammas"))
    _common(sub.add_parser("selftest", help="run the built-in identity checks"))
    return ap


def _overrides(args) -> list:
    out = []
    if args.seed is not None:
        out.append(("seed", args.seed))
    if args.threads is not None:
        out.append(("threads", args.threads))
    if args.out is not None:
        out.append(("output.dir", args.out))
    if args.format is not None:
        out.append(("output.formats", args.format))
    for f, kind in FLAG_KEYS.items():
        v = getattr(args, f, None)
        if v is None:
            continue
        if kind is None:
            out.append((f"command.{f}", v))
            continue
        try:
            out.append((f"command.{f}", kind(v)))
        except ValueError:
            raise ConfigError(f"--{f.replace('_', '-')}: expected {kind.__name__}, got {v!r}") from None
    out.extend(parse_override(s) for s in args.set)
    return out


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        if args.config is not None and not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        cfg = load_config(args.config, _overrides(args))
        set_threads(cfg.threads)
        name = args.theorem if args.command == "verify" else args.command
        r = Runner(cfg, name, out)
        if args.command == "conditions":
            return cmd_conditions(r)
        if args.command == "simulate":
            return cmd_simulate(r)
        if args.command == "decompose":
            return cmd_decompose(r)
        if args.command == "estimate":
            return cmd_estimate(r)
        if args.command == "verify":
            return cmd_verify(r, args.theorem)
        return cmd_selftest(r)
    except (BRCAError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
