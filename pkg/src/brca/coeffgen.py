"""Random coefficient operators, strong white noise, and condition diagnostics.

All operator samplers draw operators of the form ``a * K_b`` where ``K_b`` is
one of a small set of fixed kernels and ``a`` is a scalar.  That keeps the
moments of ``|rho|`` and the mean operator available in closed form, which the
oracle tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from ._rng import as_generator
from .errors import InvalidArgument, ModelConfigError, UnsupportedError
from .funspace import (
    L2,
    Grid,
    GridFunction,
    LinearOp,
    NormKind,
    named_kernel,
    op_norm,
)

__all__ = [
    "Uniform",
    "Normal",
    "ScaledBeta",
    "OperatorDraws",
    "OperatorSampler",
    "FixedKernel",
    "RandomKernelIID",
    "TwoRegimeBernoulli",
    "ScaledContraction",
    "NoiseSampler",
    "GaussianProcess",
    "IIDGridGaussian",
    "BoundedUniform",
    "ConditionReport",
    "sample_operator",
    "sample_noise",
    "mean_operator",
    "diagnose_conditions",
    "normalized_kernel",
]


# --------------------------------------------------------------------------
# scalar amplitude laws


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.high < self.low:
            raise InvalidArgument("uniform law needs low <= high")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    def abs_moment(self, p):
        lo, hi = self.low, self.high
        if hi == lo:
            return abs(lo) ** p
        prim = lambda x: math.copysign(abs(x) ** (p + 1), x) / (p + 1)  # noqa: E731
        return (prim(hi) - prim(lo)) / (hi - lo)

    @property
    def sup_abs(self):
        return max(abs(self.low), abs(self.high))


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.sd < 0:
            raise InvalidArgument("normal law needs sd >= 0")

    def sample(self, rng, size):
        return self.mean + self.sd * rng.standard_normal(size)

    def abs_moment(self, p):
        if self.sd == 0:
            return abs(self.mean) ** p
        if p == 2:
            return self.mean**2 + self.sd**2
        return float(stats.norm(self.mean, self.sd).expect(lambda a: np.abs(a) ** p))

    @property
    def sup_abs(self):
        return abs(self.mean) if self.sd == 0 else math.inf


@dataclass(frozen=True)
class ScaledBeta:
    """``scale * Beta(a, b)``, supported in ``[0, scale]``."""

    scale: float
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.scale < 0 or self.a <= 0 or self.b <= 0:
            raise InvalidArgument("scaled beta law needs scale >= 0 and a, b > 0")

    def sample(self, rng, size):
        return self.scale * rng.beta(self.a, self.b, size)

    @property
    def mean(self):
        return self.scale * self.a / (self.a + self.b)

    def abs_moment(self, p):
        # E B^p = B(a + p, b) / B(a, b)
        log_ratio = math.lgamma(self.a + p) + math.lgamma(self.a + self.b) - math.lgamma(
            self.a
        ) - math.lgamma(self.a + self.b + p)
        return self.scale**p * math.exp(log_ratio)

    @property
    def sup_abs(self):
        return self.scale


def normalized_kernel(grid: Grid, shape: str = "exponential", length_scale: float = 0.2) -> np.ndarray:
    """Named kernel rescaled to unit L2 operator norm (zero stays zero)."""
    K = named_kernel(grid, shape, length_scale)
    nrm = op_norm(LinearOp(grid, K), L2)
    return K / nrm if nrm > 0 else K


# --------------------------------------------------------------------------
# operator draws


@dataclass(frozen=True, eq=False)
class OperatorDraws:
    """A batch of operators ``coef[k] * K[index[k]]``.

    ``bases`` holds the distinct kernels; ``index`` picks one per draw and
    ``coef`` scales it.  The representation keeps a long batch cheap to store
    and to apply row-by-row to a stack of states.
    """

    grid: Grid
    bases: tuple
    index: np.ndarray
    coef: np.ndarray

    def __len__(self):
        return self.index.size

    @cached_property
    def _matrices(self):
        w = self.grid.weights
        return [K * w[None, :] for K in self.bases]

    def apply(self, Y: np.ndarray) -> np.ndarray:
        """Apply draw ``k`` to row ``k`` of ``Y`` (shape ``(len(self), m)``)."""
        mats = self._matrices
        if len(mats) == 1:
            out = Y @ mats[0].T
        else:
            out = np.empty_like(Y)
            for b, M in enumerate(mats):
                sel = self.index == b
                out[sel] = Y[sel] @ M.T
        out *= self.coef[:, None]
        return out

    def matrix(self, k: int) -> np.ndarray:
        """Value-space matrix of draw ``k``."""
        return self.coef[k] * self._matrices[self.index[k]]

    def kernel(self, k: int) -> np.ndarray:
        return self.coef[k] * self.bases[self.index[k]]

    def op(self, k: int) -> LinearOp:
        return LinearOp(self.grid, self.kernel(k))

    def kernels(self) -> np.ndarray:
        stack = np.stack(self.bases)[self.index]
        return stack * self.coef[:, None, None]

    def norms(self, kind: NormKind = L2) -> np.ndarray:
        base_norms = np.array([op_norm(LinearOp(self.grid, K), kind) for K in self.bases])
        return np.abs(self.coef) * base_norms[self.index]

    def slice(self, start: int, stop: int) -> "OperatorDraws":
        return OperatorDraws(self.grid, self.bases, self.index[start:stop], self.coef[start:stop])


# --------------------------------------------------------------------------
# operator samplers


class OperatorSampler:
    """Common interface of the i.i.d. operator laws.

    Subclasses provide ``bases``, a way to draw ``(index, coef)`` and the
    first two moments of ``coef`` given the regime.
    """

    grid: Grid
    kind = "abstract"

    # regime probabilities and per-regime amplitude moments
    def _regimes(self):
        raise NotImplementedError

    def _draw_index_coef(self, rng, size):
        raise NotImplementedError

    @cached_property
    def bases(self) -> tuple:
        return tuple(np.array(K, dtype=float) for K in self._bases())

    @cached_property
    def _base_matrices(self):
        w = self.grid.weights
        return [K * w[None, :] for K in self.bases]

    def draw(self, rng, size: int) -> OperatorDraws:
        rng = as_generator(rng)
        index, coef = self._draw_index_coef(rng, int(size))
        return OperatorDraws(self.grid, self.bases, index, np.asarray(coef, dtype=float))

    def sample(self, rng) -> LinearOp:
        return self.draw(rng, 1).op(0)

    def mean_operator(self) -> LinearOp:
        K = sum(prob * mean_a * base for (prob, mean_a, _), base in zip(self._regimes(), self.bases))
        return LinearOp(self.grid, K)

    def second_moment_map(self, C: np.ndarray) -> np.ndarray:
        """``E[P C P^T]`` for the value-space matrix ``P`` of one draw."""
        out = np.zeros_like(C, dtype=float)
        for (prob, _, second), M in zip(self._regimes(), self._base_matrices):
            out += prob * second * (M @ C @ M.T)
        return out

    def norm_moment(self, p: float, kind: NormKind = L2) -> float:
        """Closed-form ``E |rho_0|^p``."""
        total = 0.0
        for (prob, _, _), base, law in zip(self._regimes(), self.bases, self._laws()):
            nrm = op_norm(LinearOp(self.grid, base), kind)
            total += prob * law.abs_moment(p) * nrm**p
        return total

    def delta_bound(self, kind: NormKind = L2) -> float:
        """Almost-sure bound ``sup |rho_n|`` (``inf`` when unbounded)."""
        out = 0.0
        for (prob, _, _), base, law in zip(self._regimes(), self.bases, self._laws()):
            if prob > 0:
                out = max(out, law.sup_abs * op_norm(LinearOp(self.grid, base), kind))
        return out

    def describe(self) -> dict:
        return {"kind": self.kind}


class _Const:
    def __init__(self, value):
        self.value = float(value)

    def abs_moment(self, p):
        return abs(self.value) ** p

    @property
    def sup_abs(self):
        return abs(self.value)


@dataclass(frozen=True, eq=False)
class FixedKernel(OperatorSampler):
    grid: Grid
    kernel: np.ndarray
    kind = "fixed"

    def _bases(self):
        return [self.kernel]

    def _laws(self):
        return [_Const(1.0)]

    def _regimes(self):
        return [(1.0, 1.0, 1.0)]

    def _draw_index_coef(self, rng, size):
        return np.zeros(size, dtype=np.intp), np.ones(size)

    def mean_operator(self):
        return LinearOp(self.grid, self.kernel)


@dataclass(frozen=True, eq=False)
class RandomKernelIID(OperatorSampler):
    """``K_n = A_n * K_base`` with i.i.d. scalar amplitudes ``A_n``."""

    grid: Grid
    base: np.ndarray
    amplitude: object = field(default_factory=Uniform)
    kind = "random_iid"

    def _bases(self):
        return [self.base]

    def _laws(self):
        return [self.amplitude]

    def _regimes(self):
        return [(1.0, self.amplitude.mean, self.amplitude.abs_moment(2))]

    def _draw_index_coef(self, rng, size):
        return np.zeros(size, dtype=np.intp), self.amplitude.sample(rng, size)

    def describe(self):
        amp = self.amplitude
        return {"kind": self.kind, "amplitude": {"law": type(amp).__name__, **vars(amp)}}


@dataclass(frozen=True, eq=False)
class TwoRegimeBernoulli(OperatorSampler):
    """``K_a`` with probability ``q``, otherwise ``K_b``."""

    grid: Grid
    kernel_a: np.ndarray
    kernel_b: np.ndarray
    q: float
    kind = "two_regime"

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise InvalidArgument("q must lie in [0, 1]")

    def _bases(self):
        return [self.kernel_a, self.kernel_b]

    def _laws(self):
        return [_Const(1.0), _Const(1.0)]

    def _regimes(self):
        return [(self.q, 1.0, 1.0), (1.0 - self.q, 1.0, 1.0)]

    def _draw_index_coef(self, rng, size):
        index = np.where(rng.random(size) < self.q, 0, 1).astype(np.intp)
        return index, np.ones(size)

    def mean_operator(self):
        K = self.q * np.asarray(self.kernel_a) + (1.0 - self.q) * np.asarray(self.kernel_b)
        return LinearOp(self.grid, K)

    def describe(self):
        return {"kind": self.kind, "q": self.q}


@dataclass(frozen=True, eq=False)
class ScaledContraction(OperatorSampler):
    """``A_n * K_0`` with ``K_0`` of unit L2 norm and ``A_n ~ c * Beta(a, b)``.

    Every draw has L2 operator norm at most ``c < 1``.
    """

    grid: Grid
    base: np.ndarray
    c: float
    a: float = 1.0
    b: float = 1.0
    kind = "scaled_contraction"

    def __post_init__(self):
        if not 0 <= self.c < 1:
            raise InvalidArgument("contraction bound c must lie in [0, 1)")
        nrm = op_norm(LinearOp(self.grid, self.base), L2)
        if nrm == 0:
            raise InvalidArgument("contraction base kernel must be nonzero")
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float) / nrm)

    @cached_property
    def amplitude(self):
        return ScaledBeta(self.c, self.a, self.b)

    def _bases(self):
        return [self.base]

    def _laws(self):
        return [self.amplitude]

    def _regimes(self):
        return [(1.0, self.amplitude.mean, self.amplitude.abs_moment(2))]

    def _draw_index_coef(self, rng, size):
        return np.zeros(size, dtype=np.intp), self.amplitude.sample(rng, size)

    def describe(self):
        return {"kind": self.kind, "c": self.c}


def sample_operator(s: OperatorSampler, rng) -> LinearOp:
    return s.sample(rng)


def mean_operator(s: OperatorSampler) -> LinearOp:
    if not isinstance(s, OperatorSampler):
        raise UnsupportedError(f"no closed-form mean for {type(s).__name__}")
    return s.mean_operator()


# --------------------------------------------------------------------------
# noise


class NoiseSampler:
    grid: Grid
    kind = "abstract"

    def draw(self, rng, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng) -> GridFunction:
        return GridFunction(self.grid, self.draw(as_generator(rng), 1)[0])

    def covariance(self) -> np.ndarray:
        """Exact covariance of nodal values."""
        raise NotImplementedError

    @property
    def sup_bound(self) -> float:
        """Almost-sure bound on the sup norm (``inf`` if unbounded)."""
        return math.inf

    def second_moment(self) -> float:
        """``E |eps|^2`` in the weighted L2 norm."""
        return float(self.grid.weights @ np.diag(self.covariance()))

    def norm_moment_bound(self, p: float) -> float:
        """Upper bound on ``E |eps|^p`` (L2 norm); exact at ``p = 2``."""
        s2 = self.second_moment()
        if p <= 2:
            return s2 ** (p / 2)
        if math.isfinite(self.sup_bound):
            return self.sup_bound**p
        # Gaussian hypercontractivity: |||X|||_p <= sqrt(p - 1) |||X|||_2
        return (p - 1) ** (p / 2) * s2 ** (p / 2)

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class GaussianProcess(NoiseSampler):
    """Centered Gaussian process with covariance ``sigma^2 * c(t, s)``."""

    grid: Grid
    cov_kernel: np.ndarray
    sigma: float = 1.0
    kind = "gaussian_process"

    def __post_init__(self):
        C = np.asarray(self.cov_kernel, dtype=float)
        if C.shape != (self.grid.m, self.grid.m) or not np.allclose(C, C.T, atol=1e-12):
            raise ModelConfigError("noise covariance kernel must be a symmetric m x m matrix")
        vals, vecs = np.linalg.eigh(C)
        scale = max(abs(vals).max(), 1e-300)
        if vals.min() < -1e-10 * scale:
            raise ModelConfigError(
                f"noise covariance kernel is not positive semidefinite (min eigenvalue {vals.min():.3g})"
            )
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))[None, :]
        object.__setattr__(self, "cov_kernel", C)
        object.__setattr__(self, "_factor", self.sigma * factor)

    def draw(self, rng, size):
        z = rng.standard_normal((int(size), self.grid.m))
        return z @ self._factor.T

    def covariance(self):
        return self.sigma**2 * self.cov_kernel

    def describe(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class IIDGridGaussian(NoiseSampler):
    grid: Grid
    sigma: float = 1.0
    kind = "iid_gaussian"

    def draw(self, rng, size):
        return self.sigma * rng.standard_normal((int(size), self.grid.m))

    def covariance(self):
        return self.sigma**2 * np.eye(self.grid.m)

    @property
    def sup_bound(self):
        return 0.0 if self.sigma == 0 else math.inf

    def describe(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class BoundedUniform(NoiseSampler):
    """Independent ``Uniform[-b, b]`` values at each node."""

    grid: Grid
    amplitude: float = 1.0
    kind = "bounded_uniform"

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidArgument("amplitude must be nonnegative")

    def draw(self, rng, size):
        b = self.amplitude
        return rng.uniform(-b, b, (int(size), self.grid.m))

    def covariance(self):
        return self.amplitude**2 / 3.0 * np.eye(self.grid.m)

    @property
    def sup_bound(self):
        return self.amplitude

    def describe(self):
        return {"kind": self.kind, "amplitude": self.amplitude}


def sample_noise(s: NoiseSampler, rng) -> GridFunction:
    return s.sample(rng)


# --------------------------------------------------------------------------
# condition diagnostics

_Z99 = stats.norm.ppf(0.995)


@dataclass(frozen=True)
class ConditionReport:
    p: float
    n_mc: int
    est_E_norm_rho_p: float
    hw_E_norm_rho_p: float
    est_E_log_norm_rho: float
    hw_E_log_norm_rho: float
    est_sup_norm: float
    sup_norm_exact: bool
    c3: bool
    log_criterion: bool
    delta_lt_1: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _mean_hw(x):
    x = np.asarray(x, dtype=float)
    mean = float(x.mean())
    if not np.isfinite(mean):
        return mean, 0.0
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return mean, _Z99 * sd / math.sqrt(x.size)


def diagnose_conditions(s: OperatorSampler, p: float, n_mc: int, rng, kind: NormKind = L2) -> ConditionReport:
    """Monte Carlo check of ``E|rho|^p < 1``, ``E ln|rho| < 0`` and ``sup|rho| < 1``.

    Verdicts are conservative: a condition holds only if the estimate plus
    its 99% half-width is on the right side of the threshold.
    """
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    if n_mc < 100:
        raise InvalidArgument("n_mc must be >= 100")
    norms = s.draw(as_generator(rng), n_mc).norms(kind)
    m_p, hw_p = _mean_hw(norms**p)
    with np.errstate(divide="ignore"):
        m_log, hw_log = _mean_hw(np.log(norms))
    delta = s.delta_bound(kind)
    exact = math.isfinite(delta)
    sup_est = delta if exact else float(norms.max())
    return ConditionReport(
        p=float(p),
        n_mc=int(n_mc),
        est_E_norm_rho_p=m_p,
        hw_E_norm_rho_p=hw_p,
        est_E_log_norm_rho=m_log,
        hw_E_log_norm_rho=hw_log,
        est_sup_norm=sup_est,
        sup_norm_exact=exact,
        c3=bool(m_p + hw_p < 1),
        log_criterion=bool(m_log + hw_log < 0),
        delta_lt_1=bool(exact and delta < 1),
    )
