r"""The diagonal operator :math:`T` and unregularized backward solves.

:math:`T` multiplies mode ``n`` by
:math:`\kappa_n = E_{\alpha,1}(-\lambda_n^2\tau^\alpha)`, which decays like
:math:`\lambda_n^{-2}`; inverting it amplifies data errors in mode ``n`` by
:math:`1/\kappa_n`.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .constants import DerivedConstants, derived_constants
from .exceptions import ConfigurationError, ParameterError
from .forward import EffectiveData, relaxation
from .spectral import SpectralDomain, SpectralField

logger = logging.getLogger(__name__)

__all__ = [
    "BackwardOperator",
    "AmplificationReport",
    "build_operator",
    "apply_T",
    "exact_backward",
    "illposedness_demo",
    "amplification_table",
    "conditional_stability_check",
    "conditional_stability_sides",
]


@dataclass(frozen=True, eq=False)
class BackwardOperator:
    """``T`` on the represented modes, with its calibrated constants."""

    domain: SpectralDomain
    alpha: float
    tau: float
    kappas: np.ndarray = field(repr=False)

    @cached_property
    def constants(self) -> DerivedConstants:
        # calibrated lazily; alpha = 1 has no two-sided bound constants
        return derived_constants(self.domain, self.alpha, self.tau)

    def amplification(self) -> np.ndarray:
        return 1.0 / self.kappas

    def check(self, g: SpectralField | EffectiveData) -> None:
        if not g.domain.same_as(self.domain):
            raise ConfigurationError("field and operator live on different domains")


def build_operator(domain: SpectralDomain, alpha: float, tau: float) -> BackwardOperator:
    """Assemble ``kappa_n`` (cached per domain, alpha and tau)."""
    if not tau > 0:
        raise ParameterError(f"horizon tau must be positive, got {tau}")
    kappas = relaxation(domain, alpha, tau)
    kappas.setflags(write=False)
    return BackwardOperator(domain, float(alpha), float(tau), kappas)


def apply_T(op: BackwardOperator, g: SpectralField) -> SpectralField:
    op.check(g)
    return SpectralField(op.kappas * g.coeffs, op.domain)


def exact_backward(op: BackwardOperator, upsilon: EffectiveData | SpectralField) -> SpectralField:
    """``g_n = Upsilon_n / kappa_n`` on every represented mode.

    Data errors in mode ``n`` are amplified by ``1/kappa_n``; the worst
    factor is logged.
    """
    op.check(upsilon)
    coeffs = upsilon.coeffs
    k = op.kappas
    # kappa_n can underflow to 0 (classical case); zero data there stays zero
    dead = k == 0.0
    out = np.zeros_like(coeffs)
    np.divide(coeffs, k, out=out, where=~dead)
    if dead.any():
        hit = dead & (coeffs != 0.0)
        out[hit] = np.copysign(np.inf, coeffs[hit])
        logger.warning(
            "kappa_n underflows to 0 on %d of %d modes (first n = %d)",
            int(dead.sum()), k.size, int(np.argmax(dead)) + 1,
        )
    else:
        logger.debug("exact backward solve: worst amplification 1/kappa_N = %.3e", 1.0 / k[-1])
    return SpectralField(out, op.domain)


@dataclass(frozen=True)
class AmplificationReport:
    """Single-mode perturbation of the final value and its effect on ``u(0)``."""

    n: int
    lambda_n: float
    kappa_n: float
    data_perturbation: float
    solution_perturbation: float
    ratio: float
    ratio_lower_bound: float


def illposedness_demo(op: BackwardOperator, n_probe: int) -> AmplificationReport:
    """Perturb ``h`` by ``phi_n / lambda_n`` (``f = 0``) and measure ``u(0)``.

    The perturbation of the recovered initial value is computed by actually
    running :func:`exact_backward` on both data sets.
    """
    N = op.domain.n_modes
    if not 1 <= n_probe <= N:
        raise ParameterError(f"probe mode {n_probe} outside 1..{N}")
    lam = float(op.domain.eigenvalues[n_probe - 1])
    h = SpectralField.unit(op.domain, 1)
    h_tilde = h + SpectralField.unit(op.domain, n_probe) * (1.0 / lam)
    u0 = exact_backward(op, h)
    u0_tilde = exact_backward(op, h_tilde)
    data = (h - h_tilde).norm()
    sol = (u0 - u0_tilde).norm()
    if op.alpha < 1.0:
        c = op.constants
        bound = op.tau**op.alpha * math.gamma(1.0 - op.alpha) * lam**2 / c.c2
    else:
        bound = float("nan")
    return AmplificationReport(
        n=n_probe,
        lambda_n=lam,
        kappa_n=float(op.kappas[n_probe - 1]),
        data_perturbation=data,
        solution_perturbation=sol,
        ratio=sol / data,
        ratio_lower_bound=bound,
    )


def amplification_table(op: BackwardOperator, path: str | Path | None = None) -> str:
    """CSV rows ``n, lambda_n, kappa_n, ratio`` for every mode."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "lambda_n", "kappa_n", "ratio"])
    for i, (lam, k) in enumerate(zip(op.domain.eigenvalues, op.kappas)):
        w.writerow([i + 1, repr(float(lam)), repr(float(k)), repr(float(1.0 / k))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def conditional_stability_sides(
    g: SpectralField, upsilon: EffectiveData | SpectralField, p: float, c3: float
) -> tuple[float, float]:
    """``(||g||, C3^(p/(p+2)) ||g||_{H_p}^(2/(p+2)) ||Upsilon||^(p/(p+2)))``."""
    if not p > 0:
        raise ParameterError(f"smoothness index must be positive, got {p}")
    a = p / (p + 2.0)
    rhs = c3**a * g.hp_norm(p) ** (1.0 - a) * upsilon.norm() ** a
    return g.norm(), rhs


def conditional_stability_check(
    g: SpectralField,
    upsilon: EffectiveData | SpectralField,
    p: float,
    c3: float,
    rtol: float = 1e-12,
) -> bool:
    """Interpolation inequality between ``||g||``, ``||g||_{H_p}`` and ``||Tg||``."""
    lhs, rhs = conditional_stability_sides(g, upsilon, p, c3)
    return lhs <= rhs * (1.0 + rtol)
