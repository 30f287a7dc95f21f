"""Independent reference computations used by the test-suite.

Nothing here imports the package: these are plain scalar and dense-matrix
re-derivations that the package results are checked against.
"""

import math

import numpy as np


def scalar_rca_path(n, rho_low, rho_high, sigma, seed, burnin=1000):
    """Scalar RCA(1) ``x_t = a_t x_{t-1} + e_t`` with ``a_t ~ U[low, high]``."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(rho_low, rho_high, n + burnin).tolist()
    e = (sigma * rng.standard_normal(n + burnin)).tolist()
    x = 0.0
    out = []
    for t in range(n + burnin):
        x = a[t] * x + e[t]
        if t >= burnin:
            out.append(x)
    return np.array(out)


def scalar_rca_moments(rho_low, rho_high, sigma):
    """Closed forms: stationary variance, mean coefficient, long-run variance."""
    m1 = 0.5 * (rho_low + rho_high)
    m2 = (rho_high**3 - rho_low**3) / (3 * (rho_high - rho_low))
    var = sigma**2 / (1 - m2)
    return var, m1, var * (1 + m1) / (1 - m1)


def batch_means(x, n_batches=50):
    """Mean and standard error of a stationary series by batch means."""
    x = np.asarray(x, dtype=float)
    L = x.size // n_batches
    b = x[: L * n_batches].reshape(n_batches, L).mean(axis=1)
    return float(b.mean()), float(b.std(ddof=1) / math.sqrt(n_batches))


def ks_brute(sample, cdf):
    """Sup distance between the empirical CDF and ``cdf`` checked at every jump."""
    xs = sorted(sample)
    n = len(xs)
    worst = 0.0
    for i, x in enumerate(xs):
        F = cdf(x)
        worst = max(worst, abs((i + 1) / n - F), abs(F - i / n))
    return worst
