"""Parametric runtime-distribution kernel.

Three families describe runtimes: the lognormal, the Weibull, and the
generalized Pareto (GP), the latter two shifted by a location parameter.
The module provides closed-form cdf/pdf/quantile, maximum-likelihood
fitting, a Kolmogorov-Smirnov goodness-of-fit test with asymptotic
p-values, and the restart-time calculus on fitted distributions:
the expected runtime under a fixed cutoff t,

    E(t) = ((1 - F(t)) / F(t)) * t + E[X | X <= t],

and its numeric minimizer.

Conventions: lognormal params are (shape=sigma, scale=exp(mu), location=0);
Weibull/GP carry (shape, scale, location) with support x > location.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special


class DistFamily(enum.Enum):
    LOGNORMAL = "lognormal"
    WEIBULL = "weibull"
    GP = "gp"

    @property
    def label(self) -> str:
        return self.value

    @property
    def short(self) -> str:
        return {"lognormal": "L", "weibull": "W", "gp": "GP"}[self.value]

    @staticmethod
    def from_label(label: str) -> "DistFamily":
        return DistFamily(label.lower())


# fixed tie-break / presentation order
FAMILY_ORDER = (DistFamily.WEIBULL, DistFamily.LOGNORMAL, DistFamily.GP)

_GP_XI_EXP_BRANCH = 1e-9  # |xi| below this uses the exponential limit
_GP_XI_MIN = -0.5  # regular MLE regime


@dataclass(frozen=True)
class DistParams:
    shape: float
    scale: float
    location: float = 0.0


@dataclass(frozen=True)
class FitResult:
    family: DistFamily
    params: DistParams
    ks_stat: float
    p_value: float
    log_likelihood: float

    def to_dict(self) -> dict:
        return {
            "family": self.family.label,
            "shape": self.params.shape,
            "scale": self.params.scale,
            "location": self.params.location,
            "ks_stat": self.ks_stat,
            "p_value": self.p_value,
            "log_likelihood": self.log_likelihood,
        }

    @staticmethod
    def from_dict(d: dict) -> "FitResult":
        return FitResult(
            DistFamily.from_label(d["family"]),
            DistParams(d["shape"], d["scale"], d["location"]),
            d["ks_stat"],
            d["p_value"],
            d["log_likelihood"],
        )


@dataclass(frozen=True)
class RestartRecommendation:
    """Either restart at time t (t is not None) or do not restart.

    expected_runtime is E(t) for the restart case and the plain
    distribution mean otherwise.
    """

    t: float | None
    expected_runtime: float

    @property
    def should_restart(self) -> bool:
        return self.t is not None

    def to_dict(self) -> dict:
        return {"t": self.t, "expected_runtime": self.expected_runtime}


class FitError(ValueError):
    """Samples unusable for fitting (too few, degenerate, non-positive)."""


def validate_params(family: DistFamily, p: DistParams) -> None:
    if not p.scale > 0:
        raise ValueError("scale must be positive")
    if p.location < 0:
        raise ValueError("location must be non-negative")
    if family is DistFamily.LOGNORMAL:
        if not p.shape > 0:
            raise ValueError("lognormal shape (sigma) must be positive")
        if p.location != 0:
            raise ValueError("lognormal location is fixed at 0")
    elif family is DistFamily.WEIBULL:
        if not p.shape > 0:
            raise ValueError("Weibull shape must be positive")


# --------------------------------------------------------------------------
# cdf / pdf / quantile / mean
# --------------------------------------------------------------------------

def cdf(family: DistFamily, p: DistParams, x):
    """Cumulative distribution function, vectorized over x."""
    validate_params(family, p)
    x = np.asarray(x, dtype=float)
    if family is DistFamily.LOGNORMAL:
        mu = math.log(p.scale)
        out = np.where(
            x > 0,
            special.ndtr((np.log(np.maximum(x, 1e-300)) - mu) / p.shape),
            0.0,
        )
    elif family is DistFamily.WEIBULL:
        z = np.maximum((x - p.location) / p.scale, 0.0)
        out = -np.expm1(-(z**p.shape))
    else:
        z = np.maximum((x - p.location) / p.scale, 0.0)
        xi = p.shape
        if abs(xi) < _GP_XI_EXP_BRANCH:
            out = -np.expm1(-z)
        elif xi > 0:
            out = 1.0 - (1.0 + xi * z) ** (-1.0 / xi)
        else:
            # bounded support: F = 1 beyond location - scale/xi
            arg = np.maximum(1.0 + xi * z, 0.0)
            out = 1.0 - arg ** (-1.0 / xi)
    return out if out.ndim else float(out)


def pdf(family: DistFamily, p: DistParams, x):
    """Probability density, vectorized over x; 0 outside the support."""
    validate_params(family, p)
    x = np.asarray(x, dtype=float)
    if family is DistFamily.LOGNORMAL:
        mu = math.log(p.scale)
        safe = np.maximum(x, 1e-300)
        u = (np.log(safe) - mu) / p.shape
        out = np.where(
            x > 0,
            np.exp(-0.5 * u * u) / (safe * p.shape * math.sqrt(2 * math.pi)),
            0.0,
        )
    elif family is DistFamily.WEIBULL:
        z = (x - p.location) / p.scale
        k = p.shape
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            raw = (k / p.scale) * z ** (k - 1.0) * np.exp(-(z**k))
        out = np.where(z > 0, raw, 0.0)
        out = np.where(np.isfinite(out), out, 0.0)  # z == 0 with k < 1
    else:
        z = (x - p.location) / p.scale
        xi = p.shape
        if abs(xi) < _GP_XI_EXP_BRANCH:
            out = np.where(z > 0, np.exp(-np.maximum(z, 0.0)) / p.scale, 0.0)
        else:
            arg = 1.0 + xi * z
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                raw = arg ** (-1.0 / xi - 1.0) / p.scale
            out = np.where((z > 0) & (arg > 0), raw, 0.0)
    return out if out.ndim else float(out)


def quantile(family: DistFamily, p: DistParams, q):
    """Inverse cdf; q must lie strictly inside (0, 1)."""
    validate_params(family, p)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must be in the open interval (0, 1)")
    if family is DistFamily.LOGNORMAL:
        mu = math.log(p.scale)
        out = np.exp(mu + p.shape * special.ndtri(q))
    elif family is DistFamily.WEIBULL:
        out = p.location + p.scale * (-np.log1p(-q)) ** (1.0 / p.shape)
    else:
        xi = p.shape
        if abs(xi) < _GP_XI_EXP_BRANCH:
            out = p.location - p.scale * np.log1p(-q)
        else:
            out = p.location + p.scale * ((1.0 - q) ** (-xi) - 1.0) / xi
    return out if out.ndim else float(out)


def mean(family: DistFamily, p: DistParams) -> float:
    """Distribution mean; +inf for GP with shape >= 1."""
    validate_params(family, p)
    if family is DistFamily.LOGNORMAL:
        mu = math.log(p.scale)
        return math.exp(mu + 0.5 * p.shape**2)
    if family is DistFamily.WEIBULL:
        return p.location + p.scale * math.gamma(1.0 + 1.0 / p.shape)
    if p.shape >= 1.0:
        return math.inf
    return p.location + p.scale / (1.0 - p.shape)


def sample(family: DistFamily, p: DistParams, size: int, rng: np.random.Generator):
    """Draw samples by the quantile (inverse-cdf) transform."""
    u = rng.random(size)
    u = np.clip(u, 1e-15, 1.0 - 1e-15)
    return quantile(family, p, u)


# --------------------------------------------------------------------------
# Maximum-likelihood fitting
# --------------------------------------------------------------------------

def _shift_location(samples: np.ndarray) -> float:
    """Location rule for shifted fits: just below the smallest observation.

    loc = min - (max - min) / (2n) keeps every sample inside the support;
    the likelihood is monotone in the location up to the minimum for these
    families, so this pins the boundary parameter stably.
    """
    n = samples.size
    return float(samples.min() - (samples.max() - samples.min()) / (2.0 * n))


def _check_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size < 10:
        raise FitError(f"need at least 10 samples, got {x.size}")
    if np.any(x <= 0):
        raise FitError("samples must be positive")
    if x.max() == x.min():
        raise FitError("degenerate sample: all values equal")
    return x


def fit_mle(family: DistFamily, samples) -> DistParams:
    """Maximum-likelihood parameter estimate for one family.

    lognormal uses the closed form (mean and population std of log
    samples).  Weibull and GP first fix the location just below the
    sample minimum, then maximize the likelihood of the shifted data:
    Weibull by solving the profile-likelihood shape equation, GP by
    Nelder-Mead over (shape, log scale) constrained to shape > -0.5.
    """
    x = _check_samples(samples)
    if family is DistFamily.LOGNORMAL:
        logs = np.log(x)
        mu = float(logs.mean())
        sigma = float(logs.std(ddof=0))
        if sigma == 0:
            raise FitError("degenerate sample: zero variance in logs")
        return DistParams(shape=sigma, scale=math.exp(mu), location=0.0)

    loc = max(_shift_location(x), 0.0)
    y = x - loc
    if family is DistFamily.WEIBULL:
        k, scale = _fit_weibull_shifted(y)
        return DistParams(shape=k, scale=scale, location=loc)
    xi, scale = _fit_gp_shifted(y)
    return DistParams(shape=xi, scale=scale, location=loc)


def _fit_weibull_shifted(y: np.ndarray) -> tuple[float, float]:
    """Profile MLE for the 2-parameter Weibull on shifted data y > 0.

    The shape k solves  S1(k)/S0(k) - 1/k - mean(log y) = 0  with
    Sj(k) = sum(log(y)^j * y^k); the expression is evaluated around
    max(log y) to avoid overflow, and the root is bracketed before brentq.
    """
    logs = np.log(y)
    lmax = logs.max()
    lbar = logs.mean()

    def score(k: float) -> float:
        w = np.exp(k * (logs - lmax))
        return float((logs * w).sum() / w.sum() - 1.0 / k - lbar)

    lo, hi = 1e-3, 64.0
    while score(lo) > 0 and lo > 1e-9:
        lo /= 8.0
    while score(hi) < 0 and hi < 1e9:
        hi *= 8.0
    k = optimize.brentq(score, lo, hi, xtol=1e-12, rtol=1e-12)
    w = np.exp(k * (logs - lmax))
    log_scale = lmax + math.log(w.mean()) / k
    return float(k), float(math.exp(log_scale))


def _gp_nll(xi: float, log_scale: float, y: np.ndarray) -> float:
    scale = math.exp(log_scale)
    n = y.size
    if xi <= _GP_XI_MIN:
        return math.inf
    if abs(xi) < _GP_XI_EXP_BRANCH:
        return n * log_scale + float(y.sum()) / scale
    arg = 1.0 + xi * y / scale
    if np.any(arg <= 0):
        return math.inf
    return n * log_scale + (1.0 + 1.0 / xi) * float(np.log(arg).sum())


def _fit_gp_shifted(y: np.ndarray) -> tuple[float, float]:
    m1 = float(y.mean())
    s2 = float(y.var())
    # method-of-moments start, clamped into the admissible region
    xi0 = 0.5 * (1.0 - m1 * m1 / s2) if s2 > 0 else 0.0
    xi0 = min(max(xi0, -0.45), 0.9)
    scale0 = max(m1 * (1.0 - xi0), 1e-12)
    best = None
    for start in ((xi0, math.log(scale0)), (0.1, math.log(max(m1, 1e-12)))):
        res = optimize.minimize(
            lambda v: _gp_nll(v[0], v[1], y),
            x0=np.array(start),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        if best is None or res.fun < best.fun:
            best = res
    xi, log_scale = best.x
    return float(xi), float(math.exp(log_scale))


def log_likelihood(family: DistFamily, p: DistParams, samples) -> float:
    x = np.asarray(samples, dtype=float)
    dens = pdf(family, p, x)
    if np.any(dens <= 0):
        return -math.inf
    return float(np.log(dens).sum())


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov goodness of fit
# --------------------------------------------------------------------------

def kolmogorov_sf(t: float, max_terms: int = 100, term_tol: float = 1e-10) -> float:
    """Asymptotic Kolmogorov survival function Q(t) = 2 * sum_{j>=1}
    (-1)^(j-1) exp(-2 j^2 t^2), truncated at max_terms or when a term
    drops below term_tol."""
    if t <= 0:
        return 1.0
    total = 0.0
    for j in range(1, max_terms + 1):
        term = 2.0 * math.exp(-2.0 * j * j * t * t)
        total += term if j % 2 == 1 else -term
        if term < term_tol:
            break
    return min(max(total, 0.0), 1.0)


def ks_test(samples, family: DistFamily, p: DistParams) -> tuple[float, float]:
    """One-sample KS statistic and asymptotic p-value.

    D is the sup distance between the empirical step function and F,
    evaluated on both sides of every step; the p-value is Q(sqrt(n) * D).
    Input order does not matter (sorted internally).
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 1:
        raise ValueError("need at least one sample")
    f = np.asarray(cdf(family, p, x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = (i / n - f).max()
    d_minus = (f - (i - 1) / n).max()
    d = float(max(d_plus, d_minus))
    return d, kolmogorov_sf(math.sqrt(n) * d)


# --------------------------------------------------------------------------
# Restart-time calculus
# --------------------------------------------------------------------------

_EXT_QUANTILE = 1e-6  # matching point of the below-support exponential tail


def _extension_anchor(family: DistFamily, p: DistParams) -> tuple[float, float, float]:
    """Anchor (x_m, F(x_m), lambda) of the exponential extension used for
    cutoffs at or below the support edge, matched so that both F and f are
    continuous at x_m."""
    x_m = quantile(family, p, _EXT_QUANTILE)
    f_m = _EXT_QUANTILE
    lam = pdf(family, p, x_m) / f_m
    return x_m, f_m, lam


def expected_runtime_with_restart(
    family: DistFamily, p: DistParams, t: float
) -> float:
    """Expected runtime when restarting every t steps.

    E(t) = ((1-F(t))/F(t)) * t + E[X | X <= t]; the conditional mean is
    computed as (1/F(t)) * integral of the quantile function over (0, F(t)),
    an exact change of variables that avoids density singularities at the
    support edge.  Cutoffs at or below the support edge use an exponential
    tail extension of the distribution, so the density decays towards zero
    fast below the location and E(t) stays finite.
    """
    validate_params(family, p)
    x_m, f_m, lam = _extension_anchor(family, p)
    if t >= x_m:
        ft = cdf(family, p, t)
        partial, _err = integrate.quad(
            lambda q: quantile(family, p, q), 0.0, ft, epsabs=0.0, epsrel=1e-8,
            limit=200,
        )
        return (1.0 - ft) / ft * t + partial / ft
    if t <= 0:
        raise ValueError("cutoff must be positive")
    f_ext = f_m * math.exp(lam * (t - x_m))
    if f_ext <= 0:
        return math.inf  # success probability underflows, restarting at t is hopeless
    return (1.0 - f_ext) / f_ext * t + (t - 1.0 / lam)


def optimal_restart_time(
    family: DistFamily, p: DistParams, *, grid_points: int = 200
) -> RestartRecommendation:
    """Minimize E(t) over the support and decide whether restarting pays.

    A coarse logarithmic grid between the 1e-6 and 0.99999 quantiles is
    refined by golden-section search; the recommendation is NoRestart
    unless the best E(t) beats the unrestarted mean by more than 0.1%
    relative.
    """
    validate_params(family, p)
    unrestarted = mean(family, p)
    lo = quantile(family, p, _EXT_QUANTILE)
    hi = quantile(family, p, 0.99999)
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), grid_points))
    values = np.array(
        [expected_runtime_with_restart(family, p, t) for t in grid]
    )
    idx = int(values.argmin())

    t_best = float(grid[idx])
    e_best = float(values[idx])
    if 0 < idx < grid_points - 1 and values[idx] < min(values[idx - 1], values[idx + 1]):
        res = optimize.minimize_scalar(
            lambda t: expected_runtime_with_restart(family, p, t),
            bracket=(float(grid[idx - 1]), t_best, float(grid[idx + 1])),
            method="golden",
            options={"xtol": 1e-6},
        )
        if res.fun < e_best:
            t_best, e_best = float(res.x), float(res.fun)

    if not math.isfinite(unrestarted) or e_best < unrestarted * (1.0 - 1e-3):
        return RestartRecommendation(t=t_best, expected_runtime=e_best)
    return RestartRecommendation(t=None, expected_runtime=unrestarted)
