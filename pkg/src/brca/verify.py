"""Monte Carlo harnesses for the limit theorems of BRCA(1) processes.

Each harness simulates at desk scale, compares against a closed-form or
independently estimated reference, and returns an :class:`ExperimentReport`
whose ``criterion`` field states the verdict rule in words.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from ._parallel import map_blocks
from ._rng import generator, split_streams
from .coeffgen import diagnose_conditions
from .errors import ConditionError, DegenerateProbeError, InvalidArgument
from .estimate import (
    CovOperator,
    LagAccumulator,
    _seed_from,
    default_longrun_lag,
    longrun_cov_exact,
    mean_cov_exact,
    nuclear_se,
    stationary_cov_exact,
)
from .funspace import SUP, GridFunction, grid_function
from .martdecomp import martingale_increments, neumann_inverse
from .process import BRCAModel, iterate_states

__all__ = [
    "MetricRow",
    "KSResult",
    "ExperimentReport",
    "ks_statistic",
    "check_conditions",
    "default_probes",
    "wlln_experiment",
    "hilbert_rate_experiment",
    "slln_experiment",
    "complete_convergence_experiment",
    "exp_moment_experiment",
    "clt_experiment",
    "write_report_json",
    "write_report_csv",
]

PASS, FAIL, INSUFFICIENT = "pass", "fail", "insufficient sizes"
_Z95 = 1.959963984540054


# --------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class MetricRow:
    n: int
    metric: str
    value: float
    half_width: float


@dataclass(frozen=True)
class KSResult:
    statistic: float
    n: int
    reference: str

    def __post_init__(self):
        if not 0.0 <= self.statistic <= 1.0:
            raise InvalidArgument("KS statistic must lie in [0, 1]")


@dataclass
class ExperimentReport:
    theorem: str
    model: dict
    sizes: list
    reps: int
    seed: int
    criterion: str
    verdict: str = FAIL
    metrics: list = field(default_factory=list)
    runtime_seconds: float = 0.0
    degenerate: bool = False
    ks: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def add(self, n, metric, value, half_width=0.0):
        self.metrics.append(MetricRow(int(n), str(metric), float(value), float(half_width)))

    def value(self, metric: str, n: Optional[int] = None) -> float:
        for row in self.metrics:
            if row.metric == metric and (n is None or row.n == n):
                return row.value
        raise KeyError(metric)

    def rows(self, metric: str) -> list:
        return [r for r in self.metrics if r.metric == metric]

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def completed(self) -> bool:
        return self.verdict in (PASS, INSUFFICIENT)

    def body(self) -> dict:
        """Everything except runtime, which lives in the header."""
        d = {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "criterion": self.criterion,
            "degenerate": self.degenerate,
            "seed": self.seed,
            "reps": self.reps,
            "sizes": list(self.sizes),
            "model": self.model,
            "metrics": [asdict(r) for r in self.metrics],
        }
        if self.ks:
            d["ks"] = [asdict(k) for k in self.ks]
        if self.details:
            d["details"] = self.details
        return _plain(d)


def _plain(x):
    """Convert numpy scalars and arrays to JSON-ready Python values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def report_json(report: ExperimentReport, extra: Optional[dict] = None, timestamp: Optional[str] = None) -> str:
    """JSON text whose first member, ``header``, sits alone on line 2.

    Only the header carries wall-clock data; all other lines depend on the
    seed and configuration alone.
    """
    header = {
        "timestamp": timestamp or time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "runtime_seconds": round(report.runtime_seconds, 3),
    }
    body = report.body()
    if extra:
        body.update(_plain(extra))
    rest = json.dumps(body, indent=2, sort_keys=False)
    return "{\n  \"header\": " + json.dumps(header) + ",\n" + rest[2:] + "\n"


def write_report_json(path, report: ExperimentReport, extra: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        fh.write(report_json(report, extra))


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theorem", "n", "metric", "value", "half_width", "verdict"])
    for r in report.metrics:
        w.writerow([report.theorem, r.n, r.metric, repr(r.value), repr(r.half_width), report.verdict])
    return buf.getvalue()


def write_report_csv(path, report: ExperimentReport) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report_csv(report))


# --------------------------------------------------------------------------
# KS statistic


def ks_statistic(sample: Sequence[float], reference_cdf: Callable, reference: str = "") -> KSResult:
    """Sup distance between the empirical CDF of ``sample`` and ``reference_cdf``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise InvalidArgument("KS statistic needs a nonempty sample")
    F = np.clip(np.asarray(reference_cdf(x), dtype=float), 0.0, 1.0)
    i = np.arange(1, n + 1)
    d = float(np.max(np.maximum(np.abs(i / n - F), np.abs(F - (i - 1) / n))))
    return KSResult(min(d, 1.0), n, reference)


def ks_band(reps: int) -> float:
    return 1.63 / math.sqrt(reps) + 0.02


# --------------------------------------------------------------------------
# shared plumbing


def check_conditions(model: BRCAModel, p: float, seed: int, n_mc: int = 4000):
    """Refuse to run unless the contraction conditions hold.

    Uses the closed-form moments and, independently, the conservative Monte
    Carlo diagnostics.  Raises :class:`ConditionError` on any failure.
    """
    model.check_simulable(p)
    rep = diagnose_conditions(model.op_sampler, p, n_mc, generator(seed, 90))
    if not rep.c3:
        raise ConditionError(
            f"diagnostics reject E|rho|^{p:g} < 1 (estimate {rep.est_E_norm_rho_p:.4g} "
            f"+/- {rep.hw_E_norm_rho_p:.2g})"
        )
    if not rep.log_criterion:
        raise ConditionError(f"diagnostics reject E log|rho| < 0 (estimate {rep.est_E_log_norm_rho:.4g})")
    return rep


def _wsq(Y, w):
    return (Y**2) @ w


def _trace_w(C, w):
    return float(np.diag(C) @ w)


def _sizes(n_list) -> list:
    sizes = [int(n) for n in n_list]
    if not sizes:
        raise InvalidArgument("n_list must be nonempty")
    if any(n < 1 for n in sizes):
        raise InvalidArgument("sample sizes must be positive")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidArgument("n_list must be strictly increasing")
    return sizes


def default_probes(grid) -> list:
    """Constant one and the first cosine and sine modes."""
    return [
        grid_function(grid, 1.0),
        grid_function(grid, lambda t: math.sqrt(2) * np.cos(2 * np.pi * t)),
        grid_function(grid, lambda t: math.sqrt(2) * np.sin(2 * np.pi * t)),
    ]


def _path_sums(model, n, reps, seed, key, burnin, lags=None):
    """Per-path sums of ``Y_1..Y_n``; optionally per-path lag accumulators."""

    def one(size, rho_rng, eps_rng):
        acc = LagAccumulator(size, model.m, lags) if lags is not None else None
        states = iterate_states(model, n, size, rho_rng, eps_rng, burnin)
        y0 = next(states)
        S = np.zeros((size, model.m))
        Y = y0
        for Y in states:
            S += Y
            if acc is not None:
                acc.push(Y)
        return S, y0, Y, acc

    return map_blocks(one, reps, seed, key)


# --------------------------------------------------------------------------
# weak law for the covariance of the sample mean


def wlln_experiment(model: BRCAModel, n_list, reps: int, H: Optional[int] = None, rng=0,
                    burnin: int = 500) -> ExperimentReport:
    """Nuclear-norm distance between ``n C_{X_bar_n}`` and the long-run covariance.

    ``n C_{X_bar_n}`` is estimated by the Bartlett lag sum
    ``sum_{|h|<=H} (1 - |h|/n) C_hat(h)`` computed within each of ``reps``
    independent paths and averaged over paths; ``H`` defaults to the lag at
    which the geometric cross-covariance bound falls below 1e-4.  The
    reference is the exact long-run covariance of the discretized model.
    Two secondary metrics are reported: the plain replication estimator
    (empirical covariance of ``sqrt(n) X_bar_n`` across paths) and the exact
    finite-``n`` distance.
    """
    t0 = time.perf_counter()
    seed = _seed_from(rng)
    check_conditions(model, 2.0, seed)
    sizes = _sizes(n_list)
    if reps < 2:
        raise InvalidArgument("reps must be >= 2")
    g, w = model.grid, model.grid.weights
    C0 = stationary_cov_exact(model)
    L = longrun_cov_exact(model, C0)
    if H is None:
        H = default_longrun_lag(model, _trace_w(C0, w))
    H = int(H)
    crit = ("error(n) <= error(prev n) + half_width(n) for consecutive sizes, "
            "and either error(last) < 0.5 * error(first) or every error is within its half-width")
    rep = ExperimentReport("wlln", model.describe(), sizes, reps, seed, crit)
    rep.details = {"H": H, "longrun_nuclear": CovOperator(g, L).nuclear_norm()}
    errs, hws = [], []
    for k, n in enumerate(sizes):
        Hn = min(H, n - 1)
        out = _path_sums(model, n, reps, seed, (20, k), burnin, lags=Hn)
        S = np.concatenate([o[0] for o in out])
        B = np.concatenate([o[3].bartlett(n) for o in out])
        est = B.mean(axis=0)
        err = CovOperator(g, est - L).nuclear_norm()
        hw = _Z95 * nuclear_se(B, g)
        errs.append(err)
        hws.append(hw)
        rep.add(n, "nuclear_error", err, hw)
        Z = S / math.sqrt(n)
        Zc = Z - Z.mean(axis=0)
        rep_est = Zc.T @ Zc / (reps - 1)
        outer = np.einsum("ri,rj->rij", Z, Z)
        rep.add(n, "replication_nuclear_error", CovOperator(g, rep_est - L).nuclear_norm(),
                _Z95 * nuclear_se(outer, g))
        rep.add(n, "exact_nuclear_error", CovOperator(g, mean_cov_exact(model, n, C0) - L).nuclear_norm())
    if len(sizes) < 2:
        rep.verdict = INSUFFICIENT
    else:
        mono = all(errs[i + 1] <= errs[i] + hws[i + 1] for i in range(len(errs) - 1))
        halved = errs[-1] < 0.5 * errs[0]
        # at the Monte Carlo floor the halving rule is a coin flip
        resolved = all(e <= h for e, h in zip(errs, hws))
        rep.details["halved"] = bool(halved)
        rep.details["within_half_width"] = bool(resolved)
        rep.verdict = PASS if mono and (halved or resolved) else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# exact rate in the Hilbert norm


def hilbert_rate_experiment(model: BRCAModel, n_list, reps: int, rng=0, burnin: int = 500,
                            tol: float = 0.10) -> ExperimentReport:
    """Average of ``n |X_bar_n - mu|^2`` against the trace of the long-run covariance."""
    t0 = time.perf_counter()
    seed = _seed_from(rng)
    check_conditions(model, 2.0, seed)
    sizes = _sizes(n_list)
    if reps < 2:
        raise InvalidArgument("reps must be >= 2")
    w = model.grid.weights
    ref = _trace_w(longrun_cov_exact(model), w)
    crit = f"|mean(n |X_bar_n - mu|^2) / trace(longrun) - 1| < {tol:g} at the last n"
    rep = ExperimentReport("rate", model.describe(), sizes, reps, seed, crit)
    rep.details = {"reference_trace": ref}
    rel = []
    all_zero = True
    for k, n in enumerate(sizes):
        out = _path_sums(model, n, reps, seed, (21, k), burnin)
        S = np.concatenate([o[0] for o in out])
        vals = _wsq(S, w) / n
        all_zero &= not np.any(vals)
        mean = float(vals.mean())
        hw = _Z95 * float(vals.std(ddof=1)) / math.sqrt(reps)
        rep.add(n, "n_mean_sq_norm", mean, hw)
        if ref > 0:
            rel.append(mean / ref - 1.0)
            rep.add(n, "relative_error", rel[-1], hw / ref)
    if ref == 0:
        rep.degenerate = True
        rep.verdict = PASS if all_zero else FAIL
    else:
        rep.verdict = PASS if abs(rel[-1]) < tol else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# strong law on a single path


def slln_experiment(model: BRCAModel, n_list, rng=0, burnin: int = 500) -> ExperimentReport:
    """``|X_bar_n - mu|`` along one path at the sizes in ``n_list``."""
    t0 = time.perf_counter()
    seed = _seed_from(rng)
    check_conditions(model, 1.0, seed)
    sizes = _sizes(n_list)
    w = model.grid.weights
    tr = _trace_w(longrun_cov_exact(model), w)
    theta = 4.0 * math.sqrt(tr / sizes[-1])
    crit = "value(last) < value(first) / 4 and value(last) < 4 sqrt(trace(longrun) / n_last)"
    rep = ExperimentReport("slln", model.describe(), sizes, 1, seed, crit)
    rep.details = {"threshold": theta, "reference_trace": tr}
    rho_rng, eps_rng = split_streams(seed, 22)
    targets = set(sizes)
    vals = []
    S = np.zeros((1, model.m))
    states = iterate_states(model, sizes[-1], 1, rho_rng, eps_rng, burnin)
    next(states)
    for i, Y in enumerate(states, start=1):
        S += Y
        if i in targets:
            v = math.sqrt(float(_wsq(S[0] / i, w)))
            vals.append(v)
            # typical size of |X_bar_n - mu| at this n
            rep.add(i, "mean_error_norm", v, 2.0 * math.sqrt(tr / i))
    if tr == 0:
        rep.degenerate = True
        rep.verdict = PASS if not any(vals) else FAIL
    elif len(sizes) < 2:
        rep.verdict = INSUFFICIENT
    else:
        rep.verdict = PASS if vals[-1] < vals[0] / 4 and vals[-1] < theta else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# complete convergence


def complete_convergence_experiment(model: BRCAModel, alpha: float, p: float, eps: float, n_max: int,
                                    reps: int, rng=0, burnin: int = 500, start_block: int = 6) -> ExperimentReport:
    """Dyadic-block view of ``sum_n n^{alpha p - 2} P(max_{k<=n} |S_k| >= eps n^alpha)``.

    For ``n = 2^j`` the tail probability is estimated from ``reps`` paths; the
    block ``[2^j, 2^{j+1})`` contributes about ``2^j * n^{alpha p - 2} * P_hat``.
    Beyond ``2^start_block`` each block must be at most half its predecessor
    unless its probability is at the Monte Carlo floor (``P_hat <= 3/reps``).
    """
    t0 = time.perf_counter()
    if not (1.0 < p < 2.0):
        raise InvalidArgument(f"p must lie in (1, 2), got {p}")
    if not (alpha > 0 and 1.0 <= 1.0 / alpha <= p):
        raise InvalidArgument(f"alpha must satisfy 1 <= 1/alpha <= p, got alpha={alpha}, p={p}")
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if np.any(model.mu.values != 0):
        raise InvalidArgument("complete convergence harness requires mu = 0")
    if n_max < 2 or reps < 1:
        raise InvalidArgument("need n_max >= 2 and reps >= 1")
    seed = _seed_from(rng)
    check_conditions(model, p, seed)
    J = int(math.floor(math.log2(n_max)))
    sizes = [2**j for j in range(J + 1)]
    w = model.grid.weights
    floor = 3.0 / reps
    crit = (f"for blocks beyond 2^{start_block}: block(j+1) <= block(j) / 2 "
            f"or P_hat(2^(j+1)) <= 3/reps")
    rep = ExperimentReport("complete", model.describe(), sizes, reps, seed, crit)
    rep.details = {"alpha": alpha, "p": p, "eps": eps, "noise_floor": floor}

    def one(size, rho_rng, eps_rng):
        hits = np.zeros((J + 1, size), dtype=bool)
        states = iterate_states(model, sizes[-1], size, rho_rng, eps_rng, burnin)
        next(states)
        S = np.zeros((size, model.m))
        run = np.zeros(size)
        j = 0
        for k, Y in enumerate(states, start=1):
            S += Y
            np.maximum(run, np.sqrt(_wsq(S, w)), out=run)
            if k == sizes[j]:
                hits[j] = run >= eps * k**alpha
                j += 1
        return hits

    hits = np.concatenate(map_blocks(one, reps, seed, (23,)), axis=1)
    P = hits.mean(axis=1)
    blocks = []
    for j, n in enumerate(sizes):
        hw = _Z95 * math.sqrt(max(P[j] * (1 - P[j]), 1.0 / reps) / reps)
        rep.add(n, "tail_probability", P[j], hw)
        scale = n * n ** (alpha * p - 2)
        blocks.append(scale * P[j])
        rep.add(n, "block_contribution", blocks[-1], scale * hw)
    ok = True
    for j in range(start_block, J):
        if P[j + 1] <= floor:
            continue
        ok &= blocks[j + 1] <= blocks[j] / 2
    rep.degenerate = bool(not P.any())
    rep.verdict = PASS if ok else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# exponential moments


def exp_moment_experiment(model: BRCAModel, gamma_list, reps: int, rng=0, burnin: int = 200,
                          agree: float = 0.10) -> ExperimentReport:
    """``E exp(g |X_0|)`` next to ``E exp(g |eps_0|)`` in the sup norm.

    Requires an almost-sure bound ``Delta = sup |rho| < 1``.  Checks, for every
    ``g``: half-batch agreement of ``E exp(g |X_0|)``; the support bound
    ``exp(g b / (1 - Delta))`` when the noise is bounded by ``b``; the
    direction ``E exp(g/2 |eps|) <= E exp(g |X|)``; and the converse bound
    ``E exp(g |X|) <= E exp(g |eps| / (1 - Delta))`` (Hoelder with weights
    ``(1 - Delta) Delta^j``).  Both inequalities allow 3 combined SE.
    """
    t0 = time.perf_counter()
    delta = model.op_sampler.delta_bound(SUP)
    if not math.isfinite(delta):
        raise InvalidArgument("operator law has no almost-sure norm bound; exponential-moment harness needs one")
    if not delta < 1:
        raise ConditionError(f"sup |rho| = {delta:.4g} >= 1")
    gammas = [float(x) for x in gamma_list]
    if not gammas or any(x < 0 for x in gammas):
        raise InvalidArgument("gamma_list must be nonempty and nonnegative")
    if reps < 4:
        raise InvalidArgument("reps must be >= 4")
    seed = _seed_from(rng)
    check_conditions(model, 1.0, seed)
    b = model.noise_sampler.sup_bound
    crit = (f"half-batch estimates agree within {agree:.0%}; estimate <= support bound; "
            "E exp(g/2 |eps|) <= E exp(g |X|) + 3 SE; E exp(g |X|) <= E exp(g |eps|/(1-Delta)) + 3 SE")
    rep = ExperimentReport("expmoment", model.describe(), gammas, reps, seed, crit)
    rep.details = {"delta": delta, "noise_sup_bound": b}
    half = reps // 2

    def one(size, rho_rng, eps_rng):
        Y = next(iterate_states(model, 0, size, rho_rng, eps_rng, burnin))
        E = model.noise_sampler.draw(eps_rng, size)
        return np.abs(Y).max(axis=1), np.abs(E).max(axis=1)

    out = map_blocks(one, 2 * half, seed, (24,))
    nx = np.concatenate([o[0] for o in out])
    ne = np.concatenate([o[1] for o in out])

    def mean_se(v):
        return float(v.mean()), float(v.std(ddof=1)) / math.sqrt(v.size)

    ok = True
    for k, g in enumerate(gammas):
        ex = np.exp(g * nx)
        mx, sx = mean_se(ex)
        a, bb = float(ex[:half].mean()), float(ex[half:].mean())
        gap = abs(a - bb) / max(mx, 1e-300)
        me_half, se_half = mean_se(np.exp(0.5 * g * ne))
        me_conv, se_conv = mean_se(np.exp(g * ne / (1 - delta)))
        rep.add(k, f"E_exp_X[g={g:g}]", mx, _Z95 * sx)
        rep.add(k, f"half_batch_gap[g={g:g}]", gap, _Z95 * math.sqrt(2) * sx / max(mx, 1e-300))
        rep.add(k, f"E_exp_half_eps[g={g:g}]", me_half, _Z95 * se_half)
        rep.add(k, f"E_exp_eps_scaled[g={g:g}]", me_conv, _Z95 * se_conv)
        ok &= gap <= agree
        ok &= me_half <= mx + 3 * math.hypot(sx, se_half)
        ok &= mx <= me_conv + 3 * math.hypot(sx, se_conv)
        if math.isfinite(b):
            bound = math.exp(g * b / (1 - delta))
            rep.add(k, f"support_bound[g={g:g}]", bound)
            ok &= mx <= bound
    rep.degenerate = bool(not nx.any() and not ne.any())
    rep.verdict = PASS if ok else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# central limit theorem


def clt_experiment(model: BRCAModel, n: int, reps: int, probes: Optional[list] = None, rng=0,
                   n_gamma: int = 10_000, cross_paths: int = 20, cross_n: int = 10_000,
                   burnin: int = 500) -> ExperimentReport:
    """KS test of ``sqrt(n) <X_bar_n - mu, x>`` against ``N(0, <x, Gamma x>)``.

    ``Gamma`` is the empirical covariance of ``n_gamma`` stationary draws of
    ``M_1 = (I - rho_bar)^{-1}(Y_1 - rho_bar Y_0)``.  Two side checks use
    ``cross_paths`` extra paths of length ``cross_n``: the coboundary term
    ``max_r |N_0 - N_n| / sqrt(n)`` on those paths must stay below 10% of each
    probe's sample SD, and the probe variances from ``Gamma`` and from
    within-path Bartlett sums must agree within 4 combined SE.  The coboundary
    term at the main ``n`` is reported but does not enter the verdict.
    """
    t0 = time.perf_counter()
    if n < 500:
        raise InvalidArgument("clt harness needs n >= 500")
    if reps < 1000:
        raise InvalidArgument("clt harness needs reps >= 1000")
    seed = _seed_from(rng)
    check_conditions(model, 2.0, seed)
    g, w = model.grid, model.grid.weights
    probes = default_probes(g) if probes is None else list(probes)
    for f in probes:
        if not isinstance(f, GridFunction) or f.grid != g:
            raise InvalidArgument("probes must be grid functions on the model grid")
    A = np.array([f.values * w for f in probes])  # weighted probe rows
    band = ks_band(reps)
    crit = (f"KS < 1.63/sqrt(reps) + 0.02 = {band:.4f} for every probe; "
            f"max |N_0 - N_n|/sqrt(n) at n={cross_n} < 0.1 * probe SD; "
            "Gamma and Bartlett probe variances within 4 SE")
    rep = ExperimentReport("clt", model.describe(), [n], reps, seed, crit)

    rho_bar = model.mean_operator()
    RP = neumann_inverse(rho_bar).matrix @ rho_bar.matrix
    out = _path_sums(model, n, reps, seed, (25,), burnin)
    S = np.concatenate([o[0] for o in out])
    dN = np.concatenate([(o[1] - o[2]) @ RP.T for o in out])
    cob_main = float(np.sqrt(_wsq(dN, w)).max()) / math.sqrt(n)
    samples = S @ A.T / math.sqrt(n)  # (reps, probes)

    rho_rng, eps_rng = split_streams(seed, 26)
    M = martingale_increments(model, n_gamma, rho_rng, eps_rng, burnin)
    Mp = M @ A.T
    Mc = Mp - Mp.mean(axis=0)
    v_gamma = (Mc**2).sum(axis=0) / (n_gamma - 1)
    se_gamma = (Mc**2).std(axis=0, ddof=1) / math.sqrt(n_gamma)

    C0 = stationary_cov_exact(model)
    H = min(default_longrun_lag(model, _trace_w(C0, w)), cross_n - 1)
    cross = _path_sums(model, cross_n, cross_paths, seed, (27,), burnin, lags=H)
    B = np.concatenate([o[3].bartlett(cross_n) for o in cross])
    vb = np.einsum("pi,rij,pj->rp", A, B, A)
    v_bart = vb.mean(axis=0)
    se_bart = vb.std(axis=0, ddof=1) / math.sqrt(cross_paths)
    dN = np.concatenate([(o[1] - o[2]) @ RP.T for o in cross])
    cob = float(np.sqrt(_wsq(dN, w)).max()) / math.sqrt(cross_n)

    ok = True
    rep.add(n, "coboundary_max", cob_main)
    rep.add(cross_n, "coboundary_max", cob)
    rep.details = {"ks_band": band, "longrun_lag": H}
    for k in range(len(probes)):
        x = samples[:, k]
        sd = float(x.std(ddof=1))
        v = float(v_gamma[k])
        if v <= 0:
            if np.any(x):
                raise DegenerateProbeError(f"probe {k}: zero target variance but nonzero sample")
            rep.degenerate = True
            ks = KSResult(0.0, reps, f"probe {k}: point mass at 0")
        else:
            ks = ks_statistic(x, stats.norm(0.0, math.sqrt(v)).cdf, f"probe {k}: N(0, {v:.6g})")
        rep.ks.append(ks)
        rep.add(n, f"ks[{k}]", ks.statistic, band)
        rep.add(n, f"sample_sd[{k}]", sd, _Z95 * sd / math.sqrt(2 * (reps - 1)))
        rep.add(n, f"var_gamma[{k}]", v, _Z95 * float(se_gamma[k]))
        rep.add(n, f"var_bartlett[{k}]", float(v_bart[k]), _Z95 * float(se_bart[k]))
        rep.add(n, f"coboundary_ratio[{k}]", cob_main / sd if sd > 0 else 0.0)
        rep.add(cross_n, f"coboundary_ratio[{k}]", cob / sd if sd > 0 else 0.0)
        ok &= ks.statistic < band
        if sd > 0:
            ok &= cob < 0.1 * sd
        ok &= abs(v - v_bart[k]) <= 4 * math.hypot(se_gamma[k], se_bart[k])
    rep.verdict = PASS if ok else FAIL
    rep.runtime_seconds = time.perf_counter() - t0
    return rep
