"""Gaussian special functions, SPD solves, and seeded random streams.

Everything downstream (solvers, predictors, calibration, scenario generators)
builds on this module. All functions are pure; RngStream instances are the
only stateful objects and each concurrent task should own its stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the standard normal quantile
# (refined below by Newton steps, so only ~1e-9 accuracy is needed here).
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)
_ACKLAM_PLOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF. Accepts a scalar or an array; error < 1e-15."""
    if np.ndim(x) == 0:
        xf = float(x)
        if not math.isfinite(xf):
            raise ValueError("normal_cdf requires finite input")
        return 0.5 * (1.0 + math.erf(xf / _SQRT2))
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValueError("normal_cdf requires finite input")
    return 0.5 * (1.0 + np.vectorize(math.erf)(xs / _SQRT2))


def normal_pdf(x):
    """Standard normal density."""
    xs = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * xs * xs)
    return float(out) if np.ndim(x) == 0 else out


def _acklam(p: float) -> float:
    if p < _ACKLAM_PLOW:
        q = math.sqrt(-2.0 * math.log(p))
        a, b, c, d, e, f = _ACKLAM_C
        g, h, i, j = _ACKLAM_D
        return (((((a * q + b) * q + c) * q + d) * q + e) * q + f) / \
               ((((g * q + h) * q + i) * q + j) * q + 1.0)
    if p > 1.0 - _ACKLAM_PLOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    a, b, c, d, e, f = _ACKLAM_A
    g, h, i, j, k = _ACKLAM_B
    return (((((a * r + b) * r + c) * r + d) * r + e) * r + f) * q / \
           (((((g * r + h) * r + i) * r + j) * r + k) * r + 1.0)


def normal_quantile(p):
    """Inverse standard normal CDF on (0, 1).

    Rational initial guess refined by two Newton steps against normal_cdf,
    giving a roundtrip error far below 1e-8.
    """
    if np.ndim(p) != 0:
        return np.array([normal_quantile(v) for v in np.asarray(p, dtype=float)])
    pf = float(p)
    if not (0.0 < pf < 1.0):
        raise ValueError(f"normal_quantile requires p in (0, 1), got {pf}")
    x = _acklam(pf)
    for _ in range(2):
        err = normal_cdf(x) - pf
        x -= err / normal_pdf(x)
    return x


def solve_spd(mat, rhs):
    """Solve M @ x = rhs for symmetric positive definite M via Cholesky.

    Raises numpy.linalg.LinAlgError when M is not SPD (asymmetry or a
    nonpositive Cholesky pivot).
    """
    m = np.asarray(mat, dtype=float)
    r = np.asarray(rhs, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if r.shape[0] != m.shape[0]:
        raise ValueError("rhs length does not match matrix size")
    scale = np.max(np.abs(m)) if m.size else 1.0
    if not np.allclose(m, m.T, atol=1e-10 * max(scale, 1.0)):
        raise np.linalg.LinAlgError("matrix is not symmetric")
    try:
        factor = cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise
    except Exception as exc:  # scipy raises its own LinAlgError subclass
        raise np.linalg.LinAlgError(str(exc)) from exc
    return cho_solve(factor, r, check_finite=False)


_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass
class RngStream:
    """Counter-based random stream keyed by (seed, index).

    Identical (seed, index) pairs reproduce identical draw sequences, and
    distinct indices under the same seed give statistically independent
    streams, so parallel replications can be keyed deterministically.
    """

    seed: int
    index: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.index < 0:
            raise ValueError("seed and index must be nonnegative")
        key = np.array([np.uint64(self.seed) & _U64, np.uint64(self.index) & _U64],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        """A fresh stream under the same seed; does not disturb this one."""
        return RngStream(self.seed, index)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def gaussian(self, mean: float, var: float, size=None):
        """Normal draw parameterized by (mean, variance)."""
        if var < 0:
            raise ValueError(f"variance must be nonnegative, got {var}")
        return self._gen.normal(mean, math.sqrt(var), size=size)

    def uniform(self, low: float, high: float, size=None):
        if low > high:
            raise ValueError(f"uniform requires low <= high, got ({low}, {high})")
        return self._gen.uniform(low, high, size=size)

    def bernoulli(self, p: float, size=None):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"bernoulli requires p in [0, 1], got {p}")
        out = (self._gen.random(size) < p)
        return out.astype(float) if size is not None else float(out)


def sample(dist: str, rng: RngStream, size=None, **params):
    """Draw from a named distribution: gaussian(mean, var), uniform(low, high),
    bernoulli(p)."""
    if dist == "gaussian":
        return rng.gaussian(params["mean"], params["var"], size=size)
    if dist == "uniform":
        return rng.uniform(params["low"], params["high"], size=size)
    if dist == "bernoulli":
        return rng.bernoulli(params["p"], size=size)
    raise ValueError(f"unknown distribution {dist!r}")
