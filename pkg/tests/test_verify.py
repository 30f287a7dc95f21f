import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from brca.errors import ConditionError, DegenerateProbeError, InvalidArgument
from brca.funspace import grid_function
from brca.models import build_model, explosive_model, functional_model, null_model, scalar_model
from brca.verify import (
    ExperimentReport,
    KSResult,
    clt_experiment,
    complete_convergence_experiment,
    default_probes,
    exp_moment_experiment,
    hilbert_rate_experiment,
    ks_statistic,
    slln_experiment,
    wlln_experiment,
)
from brca.verify import ks_band, report_csv, report_json

from oracles import ks_brute


def contraction_model(m=8, c=0.5, amplitude=1.0, **extra):
    spec = {"grid.m": m, "operator.kind": "scaled_contraction", "operator.kernel": "constant",
            "operator.c": c, "noise.kind": "bounded_uniform", "noise.amplitude": amplitude}
    spec.update(extra)
    return build_model(spec, name="contraction")


class TestKS:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=60))
    def test_matches_brute_force(self, xs):
        cdf = stats.norm.cdf
        assert ks_statistic(xs, cdf).statistic == pytest.approx(ks_brute(xs, cdf), abs=1e-12)

    def test_matches_scipy(self):
        x = np.random.default_rng(0).standard_normal(500)
        ref = stats.kstest(x, "norm").statistic
        assert ks_statistic(x, stats.norm.cdf).statistic == pytest.approx(ref, abs=1e-12)

    def test_single_point(self):
        assert ks_statistic([0.0], stats.norm.cdf).statistic == 0.5

    def test_far_sample(self):
        assert ks_statistic([100.0, 101.0], stats.norm.cdf).statistic == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            ks_statistic([], stats.norm.cdf)

    def test_range(self):
        with pytest.raises(InvalidArgument):
            KSResult(1.5, 3, "")

    def test_band(self):
        assert ks_band(2000) == pytest.approx(1.63 / math.sqrt(2000) + 0.02)


class TestReport:
    def make(self):
        rep = ExperimentReport("demo", {"kind": "x"}, [10, 20], 5, 3, "always")
        rep.add(10, "err", 0.5, 0.1)
        rep.add(20, "err", np.float64(0.25), 0.05)
        rep.verdict = "pass"
        rep.runtime_seconds = 1.23456
        return rep

    def test_json_header_line(self):
        text = report_json(self.make(), {"config": {"seed": 3}}, timestamp="T0")
        lines = text.splitlines()
        assert lines[0] == "{" and lines[1].startswith('  "header": ')
        assert "T0" in lines[1] and all("T0" not in l and "runtime" not in l for l in lines[2:])
        data = json.loads(text)
        assert data["header"]["runtime_seconds"] == 1.235
        assert data["verdict"] == "pass" and data["config"] == {"seed": 3}
        assert data["metrics"][1] == {"n": 20, "metric": "err", "value": 0.25, "half_width": 0.05}

    def test_body_ignores_runtime(self):
        a, b = self.make(), self.make()
        b.runtime_seconds = 99.0
        assert report_json(a, timestamp="x").splitlines()[2:] == report_json(b, timestamp="y").splitlines()[2:]

    def test_csv(self):
        lines = report_csv(self.make()).splitlines()
        assert lines[0] == "theorem,n,metric,value,half_width,verdict"
        assert lines[2] == "demo,20,err,0.25,0.05,pass"

    def test_lookup(self):
        rep = self.make()
        assert rep.value("err", 20) == 0.25 and len(rep.rows("err")) == 2 and rep.passed
        with pytest.raises(KeyError):
            rep.value("missing")

    def test_nonfinite_serialized(self):
        rep = self.make()
        rep.add(30, "inf", math.inf)
        assert json.loads(report_json(rep, timestamp="t"))["metrics"][-1]["value"] == "inf"


class TestRefusal:
    def test_explosive(self):
        model = explosive_model(m=4)
        for run in (
            lambda: wlln_experiment(model, [50, 100], 10),
            lambda: hilbert_rate_experiment(model, [50], 10),
            lambda: slln_experiment(model, [50, 100]),
            lambda: clt_experiment(model, 500, 1000),
        ):
            with pytest.raises(ConditionError):
                run()

    def test_explosive_expmoment(self):
        with pytest.raises(ConditionError):
            exp_moment_experiment(explosive_model(m=4), [1.0], 10)

    def test_unbounded_expmoment(self):
        with pytest.raises(InvalidArgument):
            exp_moment_experiment(functional_model(m=4, **{"operator.amplitude.law": "normal"}), [1.0], 10)

    @pytest.mark.parametrize("alpha,p", [(1.0, 1.0), (1.0, 2.0), (0.5, 1.5), (1.2, 1.5)])
    def test_complete_ranges(self, alpha, p):
        with pytest.raises(InvalidArgument):
            complete_convergence_experiment(scalar_model(), alpha, p, 1.0, 64, 10)

    def test_complete_needs_zero_mean(self):
        with pytest.raises(InvalidArgument):
            complete_convergence_experiment(scalar_model(mu=1.0), 1.0, 1.5, 1.0, 64, 10)

    def test_complete_eps(self):
        with pytest.raises(InvalidArgument):
            complete_convergence_experiment(scalar_model(), 1.0, 1.5, 0.0, 64, 10)

    def test_sizes(self):
        with pytest.raises(InvalidArgument):
            wlln_experiment(null_model(m=2), [100, 50], 10)
        with pytest.raises(InvalidArgument):
            slln_experiment(null_model(m=2), [])

    def test_clt_minimums(self):
        with pytest.raises(InvalidArgument):
            clt_experiment(null_model(m=2), 100, 1000)
        with pytest.raises(InvalidArgument):
            clt_experiment(null_model(m=2), 500, 10)

    def test_clt_probe_grid(self):
        other = functional_model(m=4).grid
        with pytest.raises(InvalidArgument):
            clt_experiment(null_model(m=2), 500, 1000, probes=[grid_function(other, 1.0)])


class TestHarnesses:
    def test_wlln_functional(self):
        rep = wlln_experiment(functional_model(m=8), [400, 1600, 3200], 200, rng=0)
        assert rep.passed, rep.metrics
        errs = [r.value for r in rep.rows("nuclear_error")]
        assert errs[-1] < 0.5 * errs[0] and rep.details["halved"]

    def test_wlln_single_size(self):
        rep = wlln_experiment(null_model(m=4), [200], 20, rng=1)
        assert rep.verdict == "insufficient sizes" and rep.completed and not rep.passed

    def test_rate_functional(self):
        rep = hilbert_rate_experiment(functional_model(m=8), [2000], 1000, rng=0)
        assert rep.passed, rep.metrics

    def test_slln_functional(self):
        rep = slln_experiment(functional_model(m=8), [1000, 10_000, 100_000], rng=0)
        assert rep.passed, rep.metrics

    def test_complete_scalar(self):
        rep = complete_convergence_experiment(scalar_model(), 1.0, 1.5, 1.0, 4096, 2000, rng=0)
        assert rep.passed, rep.metrics

    def test_expmoment(self):
        rep = exp_moment_experiment(contraction_model(), [0.5, 1.0, 2.0], 20_000, rng=0)
        assert rep.passed, rep.metrics
        assert rep.details["delta"] == pytest.approx(0.5, rel=1e-12)

    def test_expmoment_zero_gamma(self):
        rep = exp_moment_experiment(contraction_model(), [0.0], 100, rng=0)
        assert rep.value("E_exp_X[g=0]") == 1.0 and rep.passed

    def test_clt_functional(self):
        rep = clt_experiment(functional_model(m=8), 1000, 2000, rng=0)
        assert rep.passed, rep.metrics
        assert all(k.statistic < ks_band(2000) for k in rep.ks)

    def test_clt_degenerate_probe(self):
        # with rho = 0 the probe orthogonal to every noise direction has zero variance
        model = null_model(m=2, **{"noise.kind": "iid_gaussian", "noise.sigma": 0.0})
        rep = clt_experiment(model, 500, 1000, n_gamma=100, cross_paths=3, cross_n=600)
        assert rep.degenerate and rep.passed

    def test_clt_rejects_nonzero_sample_on_null_probe(self, monkeypatch):
        import brca.verify as v

        model = null_model(m=2)
        real = v.martingale_increments
        monkeypatch.setattr(v, "martingale_increments", lambda *a, **k: 0 * real(*a, **k))
        with pytest.raises(DegenerateProbeError):
            clt_experiment(model, 500, 1000, n_gamma=100, cross_paths=3, cross_n=600)


class TestNullGate:
    """With rho = 0 every harness must pass."""

    def test_wlln(self):
        assert wlln_experiment(null_model(m=8), [400, 1600, 3200], 200, rng=3).passed

    def test_rate(self):
        assert hilbert_rate_experiment(null_model(m=8), [2000], 1000, rng=3).passed

    def test_slln(self):
        assert slln_experiment(null_model(m=8), [1000, 10_000, 100_000], rng=3).passed

    def test_complete(self):
        model = null_model(m=1, **{"operator.kernel": "zero", "noise.kind": "iid_gaussian"})
        assert complete_convergence_experiment(model, 1.0, 1.5, 1.0, 4096, 2000, rng=3).passed

    def test_expmoment(self):
        model = null_model(m=8, **{"noise.kind": "bounded_uniform"})
        assert exp_moment_experiment(model, [0.5, 1.0, 2.0], 20_000, rng=3).passed

    def test_clt(self):
        assert clt_experiment(null_model(m=8), 1000, 2000, rng=3).passed


class TestReproducible:
    def test_same_seed_same_report(self):
        a = wlln_experiment(functional_model(m=4), [100, 200], 20, rng=11)
        b = wlln_experiment(functional_model(m=4), [100, 200], 20, rng=11)
        assert report_json(a, timestamp="t").splitlines()[2:] == report_json(b, timestamp="t").splitlines()[2:]

    def test_thread_count_irrelevant(self):
        from brca._parallel import set_threads

        try:
            set_threads(1)
            a = hilbert_rate_experiment(functional_model(m=4), [300], 1200, rng=5)
            set_threads(4)
            b = hilbert_rate_experiment(functional_model(m=4), [300], 1200, rng=5)
        finally:
            set_threads(None)
        assert a.metrics == b.metrics

    def test_seed_changes_report(self):
        a = slln_experiment(functional_model(m=4), [100, 1000], rng=1)
        b = slln_experiment(functional_model(m=4), [100, 1000], rng=2)
        assert a.metrics != b.metrics


def test_default_probes_orthonormal():
    g = functional_model(m=64).grid
    P = np.array([f.values for f in default_probes(g)])
    np.testing.assert_allclose(P * g.weights @ P.T, np.eye(3), atol=1e-12)
