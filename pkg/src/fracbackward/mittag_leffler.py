r"""Mittag-Leffler functions on the non-positive real axis.

The two-parameter function

.. math::

    E_{\gamma,\beta}(x) = \sum_{k=0}^\infty \frac{x^k}{\Gamma(k\gamma + \beta)}

is evaluated for :math:`x \le 0`, :math:`0 < \gamma \le 1`, :math:`\beta > 0`
by one of three branches, chosen per point from a-posteriori error
indicators:

1. the power series, summed exactly-rounded with :func:`math.fsum`, accepted
   only when its condition number keeps the rounding error below the
   requested tolerance;
2. the algebraic asymptotic expansion
   :math:`-\sum_{k=1}^{K} x^{-k}/\Gamma(\beta-\gamma k)`, truncated at the
   smallest term of a reflection-formula envelope and accepted when that
   envelope is below the tolerance;
3. the real-axis integral obtained by collapsing the Hankel contour onto the
   branch cut,

   .. math::

       E_{\gamma,\beta}(-y) = \frac{1}{\gamma\pi}\int_0^\infty
           e^{-u^{1/\gamma}} u^{(1-\beta)/\gamma}
           \frac{u\sin(\pi\beta) + y\sin(\pi(\beta-\gamma))}
                {u^2 + 2yu\cos(\pi\gamma) + y^2}\,du,

   valid for :math:`0<\gamma<1`, :math:`\beta < 1+\gamma`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special

from .exceptions import DomainError, ParameterError

log = logging.getLogger(__name__)

__all__ = [
    "MLOrder",
    "MLBoundConstants",
    "ml_eval",
    "ml_eval_many",
    "ml_asymptotic",
    "ml_kernel",
    "ml_kernel_l1",
    "estimate_bound_constants",
    "calibration_grid",
    "calibrate",
    "save_calibration",
    "load_calibration",
]

_EPS = np.finfo(float).eps
_DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class MLOrder:
    """Parameters :math:`(\\gamma, \\beta)` of :math:`E_{\\gamma,\\beta}`."""

    gamma: float
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.beta > 0.0:
            raise ParameterError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class MLBoundConstants:
    """Empirical constants of the two-sided bound

    ``c1_lower / (Gamma(1-alpha) (1-x)) <= E_{alpha,1}(x) <= c1_upper / (...)``.
    """

    c1_lower: float
    c1_upper: float
    alpha: float
    grid_hash: str = ""

    def __post_init__(self) -> None:
        if not (0.0 < self.c1_lower <= self.c1_upper < math.inf):
            raise ParameterError(
                f"invalid bound constants {self.c1_lower}, {self.c1_upper}"
            )

    def lower(self, x: float) -> float:
        return self.c1_lower / (math.gamma(1.0 - self.alpha) * (1.0 - x))

    def upper(self, x: float) -> float:
        return self.c1_upper / (math.gamma(1.0 - self.alpha) * (1.0 - x))


# {{{ branches


def _series(gamma: float, beta: float, x: float, rtol: float) -> float | None:
    """Power series; ``None`` if rounding could exceed ``rtol``."""
    y = -x
    if y ** (1.0 / gamma) > 45.0:
        return None

    ly = math.log(y)
    # largest term sits near k ~ y**(1/gamma)/gamma; go well past it
    kmax = int(4 * y ** (1.0 / gamma) / gamma) + 60
    k = np.arange(kmax + 1, dtype=float)
    logmag = k * ly - special.gammaln(k * gamma + beta)
    sign = np.sign(special.rgamma(k * gamma + beta)) * np.where(k % 2 == 0, 1.0, -1.0)
    terms = sign * np.exp(logmag)

    total = math.fsum(terms)
    if total == 0.0:
        return None
    magnitude = float(np.sum(np.abs(terms)))
    tail = abs(terms[-1])
    if (4.0 * magnitude * _EPS + tail) > 1e-2 * rtol * abs(total):
        return None
    return total


def _asymptotic_terms(gamma: float, beta: float, x: float) -> tuple[float, float]:
    """Optimally truncated asymptotic sum and its error envelope."""
    y = -x
    ly = math.log(y)
    kmax = 800
    k = np.arange(1, kmax + 1, dtype=float)
    # |1/Gamma(z)| <= Gamma(1-z)/pi for z < 1 by reflection
    arg = gamma * k + 1.0 - beta
    env = np.where(arg > 0, special.gammaln(np.maximum(arg, 1e-300)) - math.log(math.pi), 0.0)
    env = env - k * ly
    K = int(np.argmin(env))  # first omitted term index (0-based)
    if K == 0:
        return 0.0, math.exp(env[0])
    kk = k[:K]
    z = beta - gamma * kk
    # 1/Gamma(z) = Gamma(1-z) sin(pi z) / pi keeps large negative z finite
    pos = z > 0
    logmag = np.where(pos, 0.0, special.gammaln(np.where(pos, 1.0, 1.0 - z))) - kk * ly
    factor = np.where(pos, special.rgamma(np.where(pos, z, 1.0)), np.sin(np.pi * z) / np.pi)
    signs = np.where(kk % 2 == 0, 1.0, -1.0)  # x**(-k) = (-1)**k y**(-k)
    terms = -signs * factor * np.exp(logmag)
    return math.fsum(terms), math.exp(env[K])


def ml_asymptotic(order: MLOrder, x: float) -> float:
    """Algebraic asymptotic expansion of :math:`E_{\\gamma,\\beta}(x)`, x < 0.

    The series is divergent; it is truncated where the error envelope is
    smallest. Used by the evaluator and as an independent cross-check.
    """
    if x >= 0.0:
        raise DomainError("asymptotic expansion needs x < 0")
    return _asymptotic_terms(order.gamma, order.beta, x)[0]


def _integral(gamma: float, beta: float, x: float, rtol: float) -> float:
    if beta >= 1.0 + gamma:
        # E_{g,b}(x) = (E_{g,b-g}(x) - 1/Gamma(b-g)) / x
        inner = _integral(gamma, beta - gamma, x, rtol)
        return (inner - float(special.rgamma(beta - gamma))) / x

    y = -x
    c = math.cos(math.pi * gamma)
    sb = math.sin(math.pi * beta)
    sba = math.sin(math.pi * (beta - gamma))
    expo = (1.0 - beta) / gamma
    inv = 1.0 / gamma

    def smooth(u: float) -> float:
        return math.exp(-(u**inv)) * (u * sb + y * sba) / (u * u + 2.0 * y * u * c + y * y)

    def f(u: float) -> float:
        return u**expo * smooth(u)

    upper = 750.0**gamma
    # denominator scale y; for gamma > 1/2 it peaks near u = -y cos(pi gamma)
    breaks = {min(y, 0.5 * upper)}
    if c < -1e-3:
        breaks.add(min(-y * c, 0.5 * upper))
    breaks = sorted(breaks)
    epsrel = max(1.2e-14, 1e-2 * rtol)
    # u**expo is integrated exactly by the algebraic weight near the origin
    u1 = 0.5 * min(breaks[0], 1.0)
    head = _quad(smooth, 0.0, u1, epsrel, weight="alg", wvar=(expo, 0.0))
    body = _quad(f, u1, upper, points=[b for b in breaks if b > u1], epsrel=epsrel)
    val = head + body
    return val / (gamma * math.pi)


def _quad(f, a: float, b: float, epsrel: float, **kwargs) -> float:
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once it hits machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=400, **kwargs)
    return val


def _classical(beta: float, x: float, rtol: float) -> float:
    """gamma = 1: E_{1,beta}."""
    if beta == 1.0:
        return math.exp(x)
    if beta > 1.0:
        a = beta - 2.0

        def f(t: float) -> float:
            return math.exp(x * t)

        epsrel = max(1.2e-14, 1e-2 * rtol)
        if a == 0.0:
            val = _quad(f, 0.0, 1.0, epsrel)
        else:
            val = _quad(f, 0.0, 1.0, epsrel, weight="alg", wvar=(0.0, a))
        return val * float(special.rgamma(beta - 1.0))
    # E_{1,b}(x) = 1/Gamma(b) + x E_{1,b+1}(x)
    return float(special.rgamma(beta)) + x * _classical(beta + 1.0, x, rtol)


# }}}


def ml_eval(order: MLOrder, x: float, rel_tol: float = _DEFAULT_RTOL) -> float:
    """Evaluate :math:`E_{\\gamma,\\beta}(x)` for real :math:`x \\le 0`.

    Parameters
    ----------
    order : MLOrder
        Fractional order ``gamma`` in (0, 1] and ``beta`` > 0.
    x : float
        Argument; must be non-positive.
    rel_tol : float
        Target relative accuracy, in ``[1e-14, 1e-6]``.

    Returns
    -------
    float
        The function value. Positive whenever ``beta >= gamma``.

    Raises
    ------
    DomainError
        If ``x > 0``.
    ParameterError
        If ``rel_tol`` is outside the supported range.
    """
    if not (1e-14 <= rel_tol <= 1e-6):
        raise ParameterError(f"rel_tol must lie in [1e-14, 1e-6], got {rel_tol}")
    x = float(x)
    if not x <= 0.0:
        raise DomainError(f"positive arguments are not supported (x = {x})")
    gamma, beta = order.gamma, order.beta
    if x == 0.0:
        return float(special.rgamma(beta))
    if not math.isfinite(x):
        return 0.0

    if gamma == 1.0:
        series = _series(gamma, beta, x, rel_tol) if beta != 1.0 else None
        return series if series is not None else _classical(beta, x, rel_tol)

    series = _series(gamma, beta, x, rel_tol)
    if series is not None:
        return series
    approx, envelope = _asymptotic_terms(gamma, beta, x)
    if approx != 0.0 and envelope <= 1e-2 * rel_tol * abs(approx):
        return approx
    return _integral(gamma, beta, x, rel_tol)


def ml_eval_many(order: MLOrder, xs: Iterable[float], rel_tol: float = _DEFAULT_RTOL) -> np.ndarray:
    """Vectorised :func:`ml_eval`."""
    arr = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=float)
    out = np.empty_like(arr)
    flat = out.reshape(-1)
    for i, x in enumerate(arr.reshape(-1)):
        flat[i] = ml_eval(order, x, rel_tol)
    return out


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")


def ml_kernel(alpha: float, lam: float, t: float, rel_tol: float = _DEFAULT_RTOL) -> float:
    """Relaxation kernel :math:`t^{\\alpha-1} E_{\\alpha,\\alpha}(-\\lambda t^\\alpha)`.

    The weak singularity at ``t = 0`` is integrable; callers must not
    evaluate there.
    """
    _check_alpha(alpha)
    if not lam > 0.0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not t > 0.0:
        raise DomainError(f"kernel is singular at t <= 0 (t = {t})")
    if alpha == 1.0:
        return math.exp(-lam * t)
    return t ** (alpha - 1.0) * ml_eval(MLOrder(alpha, alpha), -lam * t**alpha, rel_tol)


def ml_kernel_l1(alpha: float, lam: float, tau: float, rel_tol: float = _DEFAULT_RTOL) -> float:
    """:math:`\\int_0^\\tau s^{\\alpha-1}E_{\\alpha,\\alpha}(-\\lambda s^\\alpha)\\,ds`.

    Uses the antiderivative ``(1 - E_{alpha,1}(-lam tau^alpha)) / lam``; near
    ``tau = 0`` the equivalent form ``tau^alpha E_{alpha,alpha+1}(...)`` avoids
    cancellation. The value never exceeds ``1 / lam``.
    """
    _check_alpha(alpha)
    if not lam > 0.0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if tau < 0.0:
        raise DomainError(f"tau must be non-negative, got {tau}")
    if tau == 0.0:
        return 0.0
    if alpha == 1.0:
        return -math.expm1(-lam * tau) / lam
    z = -lam * tau**alpha
    e1 = ml_eval(MLOrder(alpha, 1.0), z, rel_tol)
    if e1 <= 0.5:
        return (1.0 - e1) / lam
    return tau**alpha * ml_eval(MLOrder(alpha, alpha + 1.0), z, rel_tol)


# {{{ two-sided bound calibration


def calibration_grid(x_min: float = -1e6, n_points: int = 400) -> np.ndarray:
    """Logarithmic grid on ``[x_min, 0]`` (``0`` included)."""
    if not x_min < 0 or n_points < 2:
        raise ParameterError("calibration grid needs x_min < 0 and n_points >= 2")
    mags = np.logspace(-6, math.log10(-x_min), n_points - 1)
    return np.concatenate([[0.0], -mags])


def _grid_hash(grid: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(grid, dtype=float).tobytes()).hexdigest()[:16]


def estimate_bound_constants(alpha: float, x_grid: Sequence[float]) -> MLBoundConstants:
    """Tightest constants of the two-sided bound on the sampled grid.

    ``c1_lower`` and ``c1_upper`` are the min and max of
    ``E_{alpha,1}(x) * Gamma(1-alpha) * (1-x)`` over ``x_grid``.
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"bound constants need alpha in (0, 1), got {alpha}")
    grid = np.asarray(x_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty calibration grid")
    if np.any(grid > 0):
        raise DomainError("calibration grid must be non-positive")
    vals = ml_eval_many(MLOrder(alpha, 1.0), grid)
    prod = vals * math.gamma(1.0 - alpha) * (1.0 - grid)
    return MLBoundConstants(
        c1_lower=float(prod.min()),
        c1_upper=float(prod.max()),
        alpha=alpha,
        grid_hash=_grid_hash(grid),
    )


@lru_cache(maxsize=64)
def calibrate(alpha: float, x_min: float = -1e6, n_points: int = 400) -> MLBoundConstants:
    """Cached :func:`estimate_bound_constants` on :func:`calibration_grid`."""
    return estimate_bound_constants(alpha, calibration_grid(x_min, n_points))


_FIXTURE_VERSION = 1


def save_calibration(path: str | Path, entries: Iterable[tuple[MLBoundConstants, dict]]) -> None:
    """Write calibration entries ``(constants, grid_spec)`` as JSON."""
    payload = {
        "version": _FIXTURE_VERSION,
        "entries": [{"grid": dict(spec), **asdict(c)} for c, spec in entries],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_calibration(path: str | Path) -> list[tuple[MLBoundConstants, dict]]:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != _FIXTURE_VERSION:
        raise ParameterError(f"unsupported calibration fixture version {payload.get('version')}")
    out = []
    for e in payload["entries"]:
        spec = e.pop("grid")
        out.append((MLBoundConstants(**e), spec))
    return out


# }}}
