r"""Quasi-boundary value and Fourier truncation regularization.

The (modified) quasi-boundary value method replaces :math:`1/\kappa_n` by
:math:`1/(\kappa_n + \beta\lambda_n^q)`; truncation keeps the first ``N``
modes of the exact inverse. Parameters are chosen either a priori from
``(delta, rho, p)`` or a posteriori by a discrepancy principle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .constants import DerivedConstants, phi_peak, psi_peak
from .exceptions import DegenerateNoiseError, NoRootError, ParameterError
from .forward import EffectiveData
from .inverse import BackwardOperator
from .spectral import SpectralDomain, SpectralField

logger = logging.getLogger(__name__)

__all__ = [
    "QbvmConfig",
    "FtmConfig",
    "DiscrepancyConfig",
    "RegularizedSolution",
    "qbvm_solve",
    "ftm_solve",
    "apriori_beta",
    "apriori_beta_exponent",
    "apriori_N",
    "discrepancy_phi",
    "discrepancy_target",
    "aposteriori_beta",
    "tail_norms",
    "aposteriori_N",
    "aposteriori_N_bound",
    "envelope_max",
    "theoretical_rate",
    "method_name",
    "qbvm_noise_bound",
    "qbvm_bias_bound",
    "ftm_noise_bound",
    "ftm_bias_bound",
]

SQRT2 = math.sqrt(2.0)
BETA_LO = 1e-16
BETA_HI = 1e8
MAX_BISECT = 200


def _check_q(q: int) -> int:
    if isinstance(q, bool) or int(q) != q or q < 0:
        raise ParameterError(f"q must be a non-negative integer, got {q}")
    return int(q)


@dataclass(frozen=True)
class QbvmConfig:
    """``q = 0`` is the plain method, ``q >= 1`` the modified one."""

    q: int = 0
    beta: float = 1e-3

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_q(self.q))
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class FtmConfig:
    n_cut: int

    def __post_init__(self) -> None:
        if int(self.n_cut) != self.n_cut or self.n_cut < 1:
            raise ParameterError(f"truncation level must be an integer >= 1, got {self.n_cut}")
        object.__setattr__(self, "n_cut", int(self.n_cut))


@dataclass(frozen=True)
class DiscrepancyConfig:
    """Discrepancy-principle multipliers and the root-solve tolerance."""

    xi: float = 1.5
    mu: float = 1.5
    nu: float = 0.5
    root_tol: float = 1e-12

    def __post_init__(self) -> None:
        if not self.xi > SQRT2:
            raise ParameterError(f"xi must exceed sqrt(2), got {self.xi}")
        if not self.mu > SQRT2:
            raise ParameterError(f"mu must exceed sqrt(2), got {self.mu}")
        if not 0.0 < self.nu < 1.0:
            raise ParameterError(f"nu must lie in (0, 1), got {self.nu}")
        if not 0.0 < self.root_tol < 1.0:
            raise ParameterError(f"root_tol must lie in (0, 1), got {self.root_tol}")


def method_name(q: int | None) -> str:
    """``"ftm"`` for ``None``, ``"qbvm"`` for ``q = 0``, else ``"mqbvm:q"``."""
    if q is None:
        return "ftm"
    return "qbvm" if q == 0 else f"mqbvm:{q}"


@dataclass(frozen=True, eq=False)
class RegularizedSolution:
    """Reconstructed initial value with its parameter and diagnostics."""

    g_rec: SpectralField
    method: str
    parameter: float
    choice_rule: str | None
    residual: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def recompute_residual(self, op: BackwardOperator, upsilon: EffectiveData) -> float:
        return float(np.linalg.norm(op.kappas * self.g_rec.coeffs - upsilon.coeffs))


def _residual(op: BackwardOperator, g: np.ndarray, ups: np.ndarray) -> float:
    return float(np.linalg.norm(op.kappas * g - ups))


def qbvm_solve(
    op: BackwardOperator,
    upsilon_delta: EffectiveData,
    cfg: QbvmConfig,
    choice_rule: str | None = None,
    diagnostics: dict | None = None,
) -> RegularizedSolution:
    """``g_n = Upsilon_n / (kappa_n + beta lambda_n^q)``."""
    op.check(upsilon_delta)
    weights = op.kappas + cfg.beta * op.domain.eigenvalues**cfg.q
    g = upsilon_delta.coeffs / weights
    return RegularizedSolution(
        g_rec=SpectralField(g, op.domain),
        method=method_name(cfg.q),
        parameter=float(cfg.beta),
        choice_rule=choice_rule,
        residual=_residual(op, g, upsilon_delta.coeffs),
        diagnostics=dict(diagnostics or {}),
    )


def ftm_solve(
    op: BackwardOperator,
    upsilon_delta: EffectiveData,
    cfg: FtmConfig,
    choice_rule: str | None = None,
    diagnostics: dict | None = None,
) -> RegularizedSolution:
    """Exact inverse on modes ``1..N``, zero above."""
    op.check(upsilon_delta)
    if cfg.n_cut > op.domain.n_modes:
        raise ParameterError(f"truncation level {cfg.n_cut} exceeds {op.domain.n_modes} modes")
    g = np.zeros(op.domain.n_modes)
    g[: cfg.n_cut] = upsilon_delta.coeffs[: cfg.n_cut] / op.kappas[: cfg.n_cut]
    return RegularizedSolution(
        g_rec=SpectralField(g, op.domain),
        method="ftm",
        parameter=float(cfg.n_cut),
        choice_rule=choice_rule,
        residual=_residual(op, g, upsilon_delta.coeffs),
        diagnostics=dict(diagnostics or {}),
    )


# {{{ a priori rules


def apriori_beta_exponent(p: float, q: int) -> float:
    """Exponent ``e`` of the rule ``beta = (delta/rho)^e``."""
    q = _check_q(q)
    if not p > 0:
        raise ParameterError(f"smoothness index must be positive, got {p}")
    if q == 0:
        return 2.0 / (p + 2.0) if p < 2 else 0.5
    if p < q + 2:
        return (q + 2.0) / (p + 2.0)
    return (q + 2.0) / (q + 4.0)


def apriori_beta(delta: float, rho: float, p: float, q: int) -> float:
    """``beta = (delta/rho)^e`` with unit proportionality constant."""
    if not (delta > 0 and rho > 0):
        raise ParameterError("delta and rho must be positive")
    return (delta / rho) ** apriori_beta_exponent(p, q)


def apriori_N(
    delta: float,
    rho: float,
    p: float,
    domain: SpectralDomain,
    constants: DerivedConstants | float,
    n_max: int | None = None,
    diagnostics: dict | None = None,
) -> int:
    """Truncation level ``floor((rho / (C18 e1^p e2^2 delta))^(d/(2p+4)))``.

    ``constants`` is either the calibrated set or ``C18`` itself. The result
    is clamped to ``n_max`` (default: all stored modes); clamping is noted
    in ``diagnostics``.
    """
    if not (delta > 0 and rho > 0 and p > 0):
        raise ParameterError("delta, rho and p must be positive")
    c18 = constants if isinstance(constants, (int, float)) else constants.c18
    n_max = domain.n_modes if n_max is None else int(n_max)
    base = rho / (c18 * domain.e1**p * domain.e2**2 * delta)
    value = base ** (domain.dim / (2.0 * p + 4.0))
    if diagnostics is not None:
        diagnostics["formula"] = value
    if value < 1.0:
        raise DegenerateNoiseError(
            f"a priori truncation level {value:.3g} < 1: noise too large", sentinel=0
        )
    n = int(math.floor(value))
    if n > n_max:
        if diagnostics is not None:
            diagnostics["clamped"] = True
        logger.info("a priori truncation level %d clamped to %d", n, n_max)
        n = n_max
    return n


# }}}


# {{{ a posteriori rules


def discrepancy_phi(
    op: BackwardOperator, upsilon_delta: EffectiveData, q: int, beta: float
) -> float:
    """``Phi(beta) = ||T g_beta - Upsilon||``, evaluated mode-wise."""
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    w = beta * op.domain.eigenvalues ** _check_q(q)
    r = w * upsilon_delta.coeffs / (op.kappas + w)
    return float(np.linalg.norm(r))


def discrepancy_target(delta: float, q: int, cfg: DiscrepancyConfig) -> float:
    """``xi delta^nu`` for ``q = 0``, ``xi delta`` for ``q >= 1``."""
    return cfg.xi * (delta**cfg.nu if _check_q(q) == 0 else delta)


def aposteriori_beta(
    op: BackwardOperator,
    upsilon_delta: EffectiveData,
    delta: float,
    q: int,
    cfg: DiscrepancyConfig | None = None,
    diagnostics: dict | None = None,
) -> float:
    """Solve ``Phi(beta) = target`` by geometric bisection.

    The bracket starts at ``[1e-16, 1e8]`` and the upper end grows tenfold
    until ``Phi`` exceeds the target. If ``Phi(1e-16)`` already exceeds it,
    ``1e-16`` is returned and flagged in ``diagnostics``.
    """
    cfg = cfg or DiscrepancyConfig()
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    target = discrepancy_target(delta, q, cfg)
    norm = upsilon_delta.norm()
    diag = diagnostics if diagnostics is not None else {}
    diag["target"] = target
    if target >= norm:
        raise NoRootError(
            f"discrepancy target {target:.3e} >= ||Upsilon^delta|| = {norm:.3e}"
        )

    def phi(b: float) -> float:
        return discrepancy_phi(op, upsilon_delta, q, b)

    lo, hi = BETA_LO, BETA_HI
    if phi(lo) > target:
        diag["boundary"] = "lower"
        logger.info("Phi(%g) already exceeds the target; returning the lower bracket", lo)
        return lo
    while phi(hi) <= target:
        hi *= 10.0
        if hi > 1e300:
            raise NoRootError("could not bracket the discrepancy root")
    iterations = 0
    for iterations in range(1, MAX_BISECT + 1):
        mid = math.sqrt(lo * hi)
        if phi(mid) > target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= cfg.root_tol * lo:
            break
    diag["iterations"] = iterations
    beta = math.sqrt(lo * hi)
    diag["phi"] = phi(beta)
    return beta


def tail_norms(coeffs: np.ndarray) -> np.ndarray:
    """``zeta[N] = (sum_{n > N} c_n^2)^(1/2)`` for ``N = 0..len(coeffs)``."""
    sq = np.asarray(coeffs, dtype=float) ** 2
    tails = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    return np.sqrt(tails)


def aposteriori_N(
    upsilon_delta: EffectiveData | SpectralField,
    delta: float,
    mu: float = 1.5,
) -> int:
    """Smallest ``N >= 1`` with ``zeta(N) <= mu delta < zeta(N-1)``.

    Raises :class:`DegenerateNoiseError` (sentinel ``0``) when
    ``mu delta >= ||Upsilon^delta||``.
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    level = mu * delta
    zeta = tail_norms(upsilon_delta.coeffs)
    if level >= zeta[0]:
        raise DegenerateNoiseError(
            f"mu delta = {level:.3e} >= ||Upsilon^delta|| = {zeta[0]:.3e}", sentinel=0
        )
    # zeta is nonincreasing; first index with zeta <= level
    return int(np.argmax(zeta <= level))


def aposteriori_N_bound(
    delta: float, rho: float, p: float, mu: float, domain: SpectralDomain, c20: float
) -> float:
    """Upper bound ``(C20 rho / ((mu - sqrt2) e1^(p+2) delta))^(d/(2p+4))``."""
    base = c20 * rho / ((mu - SQRT2) * domain.e1 ** (p + 2.0) * delta)
    return base ** (domain.dim / (2.0 * p + 4.0))


# }}}


def envelope_max(
    kind: str,
    c: float,
    q: float,
    p: float | None,
    beta: float,
    s_min: float = 0.0,
) -> tuple[float, float]:
    """Maximizer and maximum on ``s >= s_min`` of the two envelopes.

    ``psi(s) = s^2 / (c + beta s^(q+2))`` and
    ``phi(s) = beta s^(q+2-p) / (c + beta s^(q+2))``. Both are unimodal, so a
    maximizer left of ``s_min`` moves to the boundary.
    """
    if kind == "psi":
        s0, _ = psi_peak(c, q, beta)

        def f(s: float) -> float:
            return s * s / (c + beta * s ** (q + 2.0))

    elif kind == "phi":
        if p is None or not p > 0:
            raise ParameterError("phi envelope needs p > 0")
        if p >= q + 2:
            raise ParameterError(f"phi envelope needs p < q+2, got p={p}, q={q}")
        s0, _ = phi_peak(c, q, p, beta)

        def f(s: float) -> float:
            return beta * s ** (q + 2.0 - p) / (c + beta * s ** (q + 2.0))

    else:
        raise ParameterError(f"unknown envelope kind {kind!r}")
    s_star = max(s0, s_min)
    return s_star, f(s_star)


# {{{ error bounds


def qbvm_noise_bound(constants: DerivedConstants, q: int, beta: float, delta: float) -> float:
    """Bound on ``||g_beta^delta - g_beta||`` under the combined noise budget."""
    if _check_q(q) == 0:
        return SQRT2 * delta / beta
    return constants.c5(q) * delta / beta ** (2.0 / (q + 2.0))


def qbvm_bias_bound(
    constants: DerivedConstants, q: int, p: float, rho: float, beta: float
) -> float:
    """Bound on ``||g - g_beta||`` for ``g`` in the source set."""
    q = _check_q(q)
    if p < q + 2:
        return constants.c6(p, q) * rho * beta ** (p / (q + 2.0))
    return constants.c7(p, q) * rho * beta


def ftm_noise_bound(constants: DerivedConstants, domain: SpectralDomain, n: int, delta: float) -> float:
    return constants.c18 * delta * float(domain.eigenvalues[n - 1]) ** 2


def ftm_bias_bound(domain: SpectralDomain, n: int, rho: float, p: float) -> float:
    """``rho / lambda_{N+1}^p`` (zero when every mode is kept)."""
    if n >= domain.n_modes:
        return 0.0
    return rho / float(domain.eigenvalues[n]) ** p


# }}}


def theoretical_rate(method: str, rule: str, p: float, q: int = 0, nu: float = 0.5) -> float:
    """Convergence exponent of ``||g - g_rec||`` in ``delta``."""
    if not p > 0:
        raise ParameterError(f"smoothness index must be positive, got {p}")
    if rule not in ("apriori", "aposteriori"):
        raise ParameterError(f"unknown rule {rule!r}")
    if method == "ftm":
        return p / (p + 2.0)
    if method.startswith("mqbvm") and ":" in method:
        q = int(method.split(":", 1)[1])
    elif method not in ("qbvm", "mqbvm"):
        raise ParameterError(f"unknown method {method!r}")
    q = _check_q(q)
    if rule == "apriori":
        return p / (p + 2.0) if p < q + 2 else (q + 2.0) / (q + 4.0)
    if q == 0:
        return min(p * nu / (p + 2.0), 1.0 - nu)
    return p / (p + 2.0) if p < q else q / (q + 2.0)
