r"""Forward solution of the fractional fourth-order problem in modal form.

Mode ``n`` of :math:`\partial_t^\alpha v + \Delta^2 v = f` evolves as

.. math::

    v_n(t) = E_{\alpha,1}(-\lambda_n^2 t^\alpha) g_n + \Psi^{\alpha,n}_f(t),

where the convolution :math:`\Psi` against the kernel
:math:`t^{\alpha-1}E_{\alpha,\alpha}(-\lambda_n^2 t^\alpha)` is evaluated
exactly for piecewise-constant sources.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .constants import DerivedConstants, derived_constants
from .exceptions import ConfigurationError, DomainError, ParameterError
from .mittag_leffler import MLOrder, ml_eval, ml_kernel_l1
from .spectral import SpectralDomain, SpectralField, TimeSource

logger = logging.getLogger(__name__)

__all__ = [
    "ForwardSolution",
    "EffectiveData",
    "decay_rates",
    "psi",
    "psi_modes",
    "forward_solve",
    "effective_data",
    "stability_bound",
    "stability_bound_check",
]


class DecayRates(np.ndarray):
    """Array of ``lambda_n^2``; the type marks the squaring as done."""


def decay_rates(domain: SpectralDomain) -> DecayRates:
    """Decay rates ``lambda_n^2`` of the bi-Laplacian modes."""
    return (domain.eigenvalues**2).view(DecayRates)


def _require_rates(domain: SpectralDomain, rates: np.ndarray) -> None:
    if not isinstance(rates, DecayRates) or not np.array_equal(rates, domain.eigenvalues**2):
        raise ParameterError("kernel decay rates must be lambda_n^2 from decay_rates()")


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")


def psi(
    alpha: float,
    lambda_n2: float,
    f_n: float | tuple[Sequence[float], Sequence[float]],
    t: float,
    tau: float | None = None,
) -> float:
    r"""Convolution :math:`\Psi^{\alpha,n}_f(t)` for one mode.

    Parameters
    ----------
    alpha : float
        Fractional order in ``(0, 1]``.
    lambda_n2 : float
        Decay rate, i.e. the *squared* Laplacian eigenvalue.
    f_n : float or (times, values)
        Either a constant, or a piecewise-constant function with
        ``values[i]`` on ``[times[i], times[i+1])``.
    t : float
        Evaluation time, ``0 <= t <= tau``.
    tau : float, optional
        Horizon; defaults to ``times[-1]`` (or ``t`` for constants).
    """
    _check_alpha(alpha)
    if isinstance(f_n, tuple):
        times = np.asarray(f_n[0], dtype=float)
        values = np.asarray(f_n[1], dtype=float)
        horizon = float(times[-1]) if tau is None else tau
    else:
        times = values = None
        horizon = t if tau is None else tau
    if t < 0.0 or t > horizon * (1.0 + 1e-14):
        raise DomainError(f"t = {t} outside [0, {horizon}]")
    if t == 0.0:
        return 0.0
    if times is None:
        return float(f_n) * ml_kernel_l1(alpha, lambda_n2, t)

    # sum_i c_i [K(t - s_i) - K(t - min(s_{i+1}, t))] with K the kernel integral
    def K(u: float) -> float:
        return ml_kernel_l1(alpha, lambda_n2, u) if u > 0.0 else 0.0

    terms = []
    for i in range(len(values)):
        s0 = times[i]
        if s0 >= t:
            break
        s1 = min(times[i + 1], t)
        terms.append(values[i] * (K(t - s0) - K(t - s1)))
    return math.fsum(terms)


@lru_cache(maxsize=256)
def _kernel_table(alpha: float, rates: tuple[float, ...], t: float) -> np.ndarray:
    return np.array([ml_kernel_l1(alpha, r, t) for r in rates])


@lru_cache(maxsize=64)
def _relaxation_table(alpha: float, rates: tuple[float, ...], t: float) -> np.ndarray:
    if t == 0.0:
        return np.ones(len(rates))
    if alpha == 1.0:
        return np.exp(-np.asarray(rates) * t)
    order = MLOrder(alpha, 1.0)
    return np.array([ml_eval(order, -r * t**alpha) for r in rates])


def relaxation(domain: SpectralDomain, alpha: float, t: float) -> np.ndarray:
    """``E_{alpha,1}(-lambda_n^2 t^alpha)`` for every stored mode."""
    _check_alpha(alpha)
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    rates = decay_rates(domain)
    _require_rates(domain, rates)
    return _relaxation_table(float(alpha), tuple(rates.tolist()), float(t)).copy()


def psi_modes(source: TimeSource, alpha: float, t: float) -> np.ndarray:
    """:math:`\\Psi^{\\alpha,n}_f(t)` for every mode of ``source``."""
    _check_alpha(alpha)
    if t < 0.0 or t > source.tau * (1.0 + 1e-14):
        raise DomainError(f"t = {t} outside [0, {source.tau}]")
    domain = source.domain
    N = domain.n_modes
    if source.kind == "zero" or t == 0.0:
        return np.zeros(N)
    rates = decay_rates(domain)
    _require_rates(domain, rates)
    key = tuple(rates.tolist())
    if source.kind == "constant":
        return source.values * _kernel_table(float(alpha), key, float(t))

    # weights per breakpoint, shared by all modes: Psi = sum_j w_j(t) K(t - s_j)
    times = source.times
    active = times < t
    s = times[active]
    k = np.array([_kernel_table(float(alpha), key, float(t - sj)) for sj in s])
    vals = source.values[: s.size]
    out = np.einsum("ij,ij->j", vals, k)
    # subtract the right end of each active piece (zero length for the last one)
    ends = np.minimum(times[1 : s.size + 1], t)
    for i, e in enumerate(ends):
        if e < t:
            out -= vals[i] * _kernel_table(float(alpha), key, float(t - e))
    return out


@dataclass(frozen=True, eq=False)
class ForwardSolution:
    """Lazy modal representation of ``v(., t)`` on ``[0, tau]``."""

    domain: SpectralDomain
    alpha: float
    tau: float
    g0: SpectralField
    source: TimeSource

    def coefficients(self, t: float) -> np.ndarray:
        if t < 0.0 or t > self.tau * (1.0 + 1e-14):
            raise DomainError(f"t = {t} outside [0, {self.tau}]")
        if t == 0.0:
            return self.g0.coeffs.copy()
        return relaxation(self.domain, self.alpha, t) * self.g0.coeffs + psi_modes(
            self.source, self.alpha, t
        )

    def mode_eval(self, n: int, t: float) -> float:
        if not 1 <= n <= self.domain.n_modes:
            raise ParameterError(f"mode index {n} outside 1..{self.domain.n_modes}")
        return float(self.coefficients(t)[n - 1])

    def at(self, t: float) -> SpectralField:
        return SpectralField(self.coefficients(t), self.domain)

    def final_value(self) -> SpectralField:
        return self.at(self.tau)


def forward_solve(
    domain: SpectralDomain,
    alpha: float,
    g0: SpectralField,
    source: TimeSource,
    tau: float,
) -> ForwardSolution:
    """Solution of the forward problem with initial value ``g0``."""
    _check_alpha(alpha)
    if not (g0.domain.same_as(domain) and source.domain.same_as(domain)):
        raise ConfigurationError("initial value, source and domain must agree")
    if not math.isclose(source.tau, tau, rel_tol=1e-14):
        raise ConfigurationError(f"source horizon {source.tau} differs from tau = {tau}")
    return ForwardSolution(domain, float(alpha), float(tau), g0, source)


@dataclass(frozen=True, eq=False)
class EffectiveData:
    """Effective right-hand side ``Upsilon_n = h_n - Psi_n(tau)``."""

    upsilon: SpectralField
    provenance: str = "clean"

    @property
    def coeffs(self) -> np.ndarray:
        return self.upsilon.coeffs

    @property
    def domain(self) -> SpectralDomain:
        return self.upsilon.domain

    def norm(self) -> float:
        return self.upsilon.norm()


def effective_data(
    h: SpectralField,
    source: TimeSource,
    alpha: float,
    tau: float,
    provenance: str = "clean",
) -> EffectiveData:
    """Subtract the accumulated source influence from the final value."""
    if not h.domain.same_as(source.domain):
        raise ConfigurationError("final value and source live on different domains")
    if not math.isclose(source.tau, tau, rel_tol=1e-14):
        raise ConfigurationError(f"source horizon {source.tau} differs from tau = {tau}")
    ups = h.coeffs - psi_modes(source, alpha, tau)
    return EffectiveData(SpectralField(ups, h.domain), provenance)


def stability_bound(
    t: float,
    alpha: float,
    theta: float,
    h_diff_sq: float,
    f_diff_sup_sq: float,
    constant: float,
) -> float:
    """Right-hand side of the interior-time stability estimate.

    ``4 C^2 / t^(2 alpha) * (|dh|^2 + theta |df|^2) + 2 theta |df|^2``.
    """
    data = h_diff_sq + theta * f_diff_sup_sq
    return 4.0 * constant**2 / t ** (2.0 * alpha) * data + 2.0 * theta * f_diff_sup_sq


def stability_bound_check(
    u: ForwardSolution,
    u_tilde: ForwardSolution,
    t: float,
    delta_parts: tuple[float, float] | None = None,
    constants: DerivedConstants | None = None,
) -> bool:
    """Whether ``||u~(t) - u(t)||^2`` obeys the interior-time stability bound.

    ``delta_parts = (||h - h~||^2, ||f - f~||_inf^2)``; by default both are
    measured from the two solutions.
    """
    if not u.domain.same_as(u_tilde.domain):
        raise ConfigurationError("solutions live on different domains")
    if not 0.0 < t < u.tau:
        raise DomainError(f"stability estimate needs 0 < t < tau, got t = {t}")
    if delta_parts is None:
        dh = (u.final_value() - u_tilde.final_value()).norm() ** 2
        df = u.source.difference_sup(u_tilde.source) ** 2
    else:
        dh, df = delta_parts
    c = constants or derived_constants(u.domain, u.alpha, u.tau)
    lhs = float(np.sum((u.coefficients(t) - u_tilde.coefficients(t)) ** 2))
    rhs = stability_bound(t, u.alpha, u.domain.theta, dh, df, c.stability)
    return lhs <= rhs
