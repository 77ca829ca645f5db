"""Closed-form distributions used across the generator.

Discretized Pareto degrees, the logarithmic reuse law, lognormal salaries and
the truncated Gaussian used for every transaction amount.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri, zeta

# ---------------------------------------------------------------------------
# discretized Pareto degree law
# ---------------------------------------------------------------------------


def degree_pmf(k, loc: int, scale: float, gamma: float):
    """``P[deg = k]`` for ``k >= loc`` (zero below ``loc``).

    The mass is normalised on the lattice ``loc + scale*j``; for ``scale == 1``
    that is every integer ``k >= loc``.
    """
    k = np.asarray(k, dtype=float)
    x = (k - loc) / scale
    with np.errstate(invalid="ignore", divide="ignore"):
        p = (x + 1.0) ** (-gamma) - (x + 2.0) ** (-gamma)
    return np.where(k >= loc, p, 0.0)


def degree_cdf(k, loc: int, scale: float, gamma: float):
    """``P[deg <= k]`` for the lattice law (integer ``k``)."""
    k = np.asarray(k, dtype=float)
    j = np.floor((k - loc) / scale + 1e-12)
    with np.errstate(invalid="ignore"):
        c = 1.0 - (j + 2.0) ** (-gamma)
    return np.where(k >= loc, c, 0.0)


def mean_degree(loc: float, scale: float, gamma: float) -> float:
    if gamma <= 1:
        raise ValueError("mean degree is infinite for gamma <= 1")
    return loc + scale * (float(zeta(gamma, 1)) - 1.0)


def derive_scale(target_mean_degree: float, loc: int, gamma: float) -> float:
    """Scale giving ``mean_degree(loc, scale, gamma) == target_mean_degree``."""
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1 (zeta diverges), got {gamma}")
    if target_mean_degree <= loc:
        raise ValueError(
            f"target mean degree {target_mean_degree} must exceed loc {loc}")
    return (target_mean_degree - loc) / (float(zeta(gamma, 1)) - 1.0)


def sample_degrees(rng: np.random.Generator, n: int, loc: int, scale: float,
                   gamma: float) -> np.ndarray:
    """Inverse-CDF draws; ``P[J >= j] = (j + 1)^-gamma`` on the lattice index."""
    u = rng.random(n)
    # 1 - u lies in (0, 1] so the power is finite
    j = np.floor((1.0 - u) ** (-1.0 / gamma)) - 1.0
    j = np.maximum(j, 0.0)
    return (loc + np.floor(scale * j + 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# logarithmic law for repeated participation
# ---------------------------------------------------------------------------


def log_pmf(k, p: float):
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (-1.0 / math.log1p(-p)) * p ** k / k
    return np.where(k >= 1, out, 0.0)


def log_cdf(k, p: float):
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    kmax = int(max(k.max(), 1))
    cum = np.cumsum(log_pmf(np.arange(1, kmax + 1), p))
    out = np.where(k >= 1, cum[np.clip(k, 1, kmax) - 1], 0.0)
    return out


def log_mean(p: float) -> float:
    return p / ((1.0 - p) * -math.log1p(-p))


# ---------------------------------------------------------------------------
# salaries
# ---------------------------------------------------------------------------


def lognormal_params(median: float, mean: float) -> tuple[float, float]:
    """``(mu_loc, sigma_scale)`` of a lognormal with the given median and mean."""
    if median <= 0:
        raise ValueError("median salary must be positive")
    if mean < median:
        raise ValueError(
            f"mean salary {mean} below median {median}: lognormal sigma undefined")
    mu = math.log(median)
    return mu, math.sqrt(2.0 * (math.log(mean) - mu))


# ---------------------------------------------------------------------------
# truncated Gaussian amounts (integer cents)
# ---------------------------------------------------------------------------


def truncnorm_cents(u, mean, std, lo_cents, hi_cents):
    """Inverse-CDF truncated Gaussian draw, returned as integer cents.

    ``mean``/``std`` are in currency units, the bounds in cents.  Entries with
    ``hi_cents < lo_cents`` are infeasible and come back as 0.  The upper tail
    is inverted through the survival function so bounds far above the mean do
    not collapse to 1.0 in double precision.
    """
    u = np.asarray(u, dtype=float)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), u.shape)
    std = np.broadcast_to(np.asarray(std, dtype=float), u.shape)
    lo_c = np.broadcast_to(np.asarray(lo_cents, dtype=np.int64), u.shape)
    hi_c = np.broadcast_to(np.asarray(hi_cents, dtype=np.int64), u.shape)
    lo = lo_c / 100.0
    hi = hi_c / 100.0
    safe_std = np.where(std > 0, std, 1.0)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        z_lo = (lo - mean) / safe_std
        z_hi = (hi - mean) / safe_std
        upper = z_lo >= 0
        # lower/central branch
        p_lo = ndtr(z_lo)
        p_hi = ndtr(z_hi)
        z_a = ndtri(p_lo + u * (p_hi - p_lo))
        # upper-tail branch
        s_lo = ndtr(-z_lo)
        s_hi = ndtr(-z_hi)
        z_b = -ndtri(s_lo - u * (s_lo - s_hi))
        z = np.where(upper, z_b, z_a)
        x = np.where(std > 0, mean + std * z, mean)
    x = np.where(np.isfinite(x), x, np.where(upper, lo, hi))
    c = np.floor(x * 100.0 + 0.5)
    c = np.minimum(np.maximum(c, lo_c), hi_c).astype(np.int64)
    return np.where(hi_c >= lo_c, c, 0)


def truncnorm_mean(mean: float, std: float, lo: float, hi: float) -> float:
    """Mean of ``N(mean, std^2)`` truncated to ``[lo, hi]`` (closed form)."""
    if std == 0:
        return min(max(mean, lo), hi)
    a = (lo - mean) / std
    b = (hi - mean) / std
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    z = float(ndtr(b) - ndtr(a))
    return mean + std * (phi(a) - phi(b)) / z
