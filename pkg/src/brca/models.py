"""Ready-made models and the dictionary form used by config files."""

from __future__ import annotations

import numpy as np

from .coeffgen import (
    BoundedUniform,
    FixedKernel,
    GaussianProcess,
    IIDGridGaussian,
    Normal,
    RandomKernelIID,
    ScaledContraction,
    TwoRegimeBernoulli,
    Uniform,
    normalized_kernel,
)
from .errors import ModelConfigError
from .funspace import grid_function, make_uniform_grid, named_kernel
from .process import BRCAModel

MODEL_DEFAULTS = {
    "grid.m": 32,
    "mu.kind": "zero",
    "mu.value": 1.0,
    "operator.kind": "random_iid",
    "operator.kernel": "exponential",
    "operator.length_scale": 0.2,
    "operator.normalize": True,
    "operator.scale": 1.0,
    "operator.amplitude.law": "uniform",
    "operator.amplitude.low": 0.0,
    "operator.amplitude.high": 0.6,
    "operator.amplitude.mean": 0.3,
    "operator.amplitude.sd": 0.1,
    "operator.kernel_b": "identity",
    "operator.scale_b": 0.0,
    "operator.q": 0.5,
    "operator.c": 0.5,
    "operator.a": 1.0,
    "operator.b": 1.0,
    "noise.kind": "gaussian_process",
    "noise.kernel": "exponential",
    "noise.length_scale": 0.2,
    "noise.sigma": 1.0,
    "noise.amplitude": 1.0,
}

MU_KINDS = ("zero", "constant", "sine")
OPERATOR_KINDS = ("fixed", "random_iid", "two_regime", "scaled_contraction")
NOISE_KINDS = ("gaussian_process", "iid_gaussian", "bounded_uniform")


def _kernel(grid, name, length_scale, normalize, key):
    try:
        if normalize:
            return normalized_kernel(grid, name, length_scale)
        return named_kernel(grid, name, length_scale)
    except ValueError as exc:
        raise ModelConfigError(f"{key}: {exc}") from None


def build_model(spec: dict, name: str = "model") -> BRCAModel:
    """Build a model from flat keys such as ``operator.kind`` (``model.`` prefix optional)."""
    cfg = dict(MODEL_DEFAULTS)
    for k, v in spec.items():
        cfg[k[6:] if k.startswith("model.") else k] = v

    m = cfg["grid.m"]
    if not isinstance(m, int) or m < 1:
        raise ModelConfigError(f"model.grid.m must be a positive integer, got {m!r}")
    grid = make_uniform_grid(m)

    mu_kind = cfg["mu.kind"]
    if mu_kind == "zero":
        mu = grid_function(grid, 0.0)
    elif mu_kind == "constant":
        mu = grid_function(grid, float(cfg["mu.value"]))
    elif mu_kind == "sine":
        mu = grid_function(grid, lambda t: float(cfg["mu.value"]) * np.sin(2 * np.pi * t))
    else:
        raise ModelConfigError(f"model.mu.kind: unknown kind {mu_kind!r} (choose from {', '.join(MU_KINDS)})")

    kind = cfg["operator.kind"]
    K = _kernel(grid, cfg["operator.kernel"], float(cfg["operator.length_scale"]),
                bool(cfg["operator.normalize"]), "model.operator.kernel")
    if kind == "fixed":
        ops = FixedKernel(grid, float(cfg["operator.scale"]) * K)
    elif kind == "random_iid":
        law = cfg["operator.amplitude.law"]
        if law == "uniform":
            amp = Uniform(float(cfg["operator.amplitude.low"]), float(cfg["operator.amplitude.high"]))
        elif law == "normal":
            amp = Normal(float(cfg["operator.amplitude.mean"]), float(cfg["operator.amplitude.sd"]))
        else:
            raise ModelConfigError(f"model.operator.amplitude.law: unknown law {law!r} (choose uniform, normal)")
        ops = RandomKernelIID(grid, float(cfg["operator.scale"]) * K, amp)
    elif kind == "two_regime":
        Kb = _kernel(grid, cfg["operator.kernel_b"], float(cfg["operator.length_scale"]),
                     bool(cfg["operator.normalize"]), "model.operator.kernel_b")
        ops = TwoRegimeBernoulli(grid, float(cfg["operator.scale"]) * K,
                                 float(cfg["operator.scale_b"]) * Kb, float(cfg["operator.q"]))
    elif kind == "scaled_contraction":
        ops = ScaledContraction(grid, K, float(cfg["operator.c"]), float(cfg["operator.a"]),
                                float(cfg["operator.b"]))
    else:
        raise ModelConfigError(
            f"model.operator.kind: unknown kind {kind!r} (choose from {', '.join(OPERATOR_KINDS)})"
        )

    nkind = cfg["noise.kind"]
    sigma = float(cfg["noise.sigma"])
    if nkind == "gaussian_process":
        C = _kernel(grid, cfg["noise.kernel"], float(cfg["noise.length_scale"]), False, "model.noise.kernel")
        noise = GaussianProcess(grid, C, sigma)
    elif nkind == "iid_gaussian":
        noise = IIDGridGaussian(grid, sigma)
    elif nkind == "bounded_uniform":
        noise = BoundedUniform(grid, float(cfg["noise.amplitude"]))
    else:
        raise ModelConfigError(f"model.noise.kind: unknown kind {nkind!r} (choose from {', '.join(NOISE_KINDS)})")
    return BRCAModel(mu, ops, noise, name=name)


def functional_model(m: int = 8, high: float = 0.6, **overrides) -> BRCAModel:
    """Random exponential-kernel operators with amplitude ``U[0, high]``, GP noise."""
    spec = {"grid.m": m, "operator.amplitude.high": high}
    spec.update(overrides)
    return build_model(spec, name="functional")


def scalar_model(low: float = 0.0, high: float = 0.8, sigma: float = 1.0, mu: float = 0.0) -> BRCAModel:
    """Real RCA(1) on a one-point grid: ``rho ~ U[low, high]``, ``eps ~ N(0, sigma^2)``."""
    return build_model(
        {
            "grid.m": 1,
            "mu.kind": "constant",
            "mu.value": mu,
            "operator.kernel": "identity",
            "operator.amplitude.low": low,
            "operator.amplitude.high": high,
            "noise.kind": "iid_gaussian",
            "noise.sigma": sigma,
        },
        name="scalar",
    )


def null_model(m: int = 8, **overrides) -> BRCAModel:
    """``rho = 0``: the i.i.d. special case."""
    spec = {"grid.m": m, "operator.kind": "fixed", "operator.kernel": "zero", "operator.normalize": False}
    spec.update(overrides)
    return build_model(spec, name="null")


def explosive_model(m: int = 8, factor: float = 1.1) -> BRCAModel:
    """``rho = factor * I``, violating every contraction condition when ``factor >= 1``."""
    return build_model(
        {"grid.m": m, "operator.kind": "fixed", "operator.kernel": "identity", "operator.scale": factor},
        name="explosive",
    )
