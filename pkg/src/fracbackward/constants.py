"""Concrete values for the constants in the error estimates.

Everything here derives from the calibrated two-sided Mittag-Leffler bound
``C1/(Gamma(1-a)(1-x)) <= E_{a,1}(x) <= C2/(Gamma(1-a)(1-x))`` together with
``lambda_1``. The calibration grid is extended to cover the most negative
argument ``-lambda_N^2 tau^a`` that the domain produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import gamma as gamma_fn

from .exceptions import ParameterError
from .mittag_leffler import MLBoundConstants, calibrate
from .spectral import SpectralDomain

__all__ = ["DerivedConstants", "derived_constants", "psi_peak", "phi_peak"]


def psi_peak(c: float, q: float, beta: float) -> tuple[float, float]:
    """Unconstrained maximizer and maximum of ``s^2 / (c + beta s^(q+2))``."""
    if not (c > 0 and q > 0 and beta > 0):
        raise ParameterError("psi envelope needs c, q, beta > 0")
    m = q + 2.0
    s0 = (2.0 * c / (q * beta)) ** (1.0 / m)
    return s0, s0 * s0 * q / (c * m)


def phi_peak(c: float, q: float, p: float, beta: float) -> tuple[float, float]:
    """Unconstrained maximizer and maximum of ``beta s^(q+2-p) / (c + beta s^(q+2))``."""
    if not (c > 0 and q >= 0 and beta > 0):
        raise ParameterError("phi envelope needs c, beta > 0 and q >= 0")
    m = q + 2.0
    r = m - p
    if not (0 < p < m):
        raise ParameterError(f"phi envelope needs 0 < p < q+2, got p={p}, q={q}")
    s0 = (r * c / (p * beta)) ** (1.0 / m)
    return s0, beta * s0**r * p / (c * m)


@dataclass(frozen=True)
class DerivedConstants:
    """Calibrated constants for one ``(alpha, tau, domain)`` triple."""

    alpha: float
    tau: float
    lambda1: float
    bounds: MLBoundConstants

    @property
    def c1(self) -> float:
        return self.bounds.c1_lower

    @property
    def c2(self) -> float:
        return self.bounds.c1_upper

    @property
    def _g(self) -> float:
        return float(gamma_fn(1.0 - self.alpha))

    @property
    def _w(self) -> float:
        # (1 + lambda_1^2 tau^a) / lambda_1^2
        l2 = self.lambda1**2
        return (1.0 + l2 * self.tau**self.alpha) / l2

    @property
    def c3(self) -> float:
        """``1/kappa_n <= C3 lambda_n^2``."""
        return self._w * self._g / self.c1

    @property
    def c4(self) -> float:
        """``kappa_n >= C4 / lambda_n^2``."""
        return 1.0 / self.c3

    @property
    def kappa_upper(self) -> float:
        """``kappa_n <= C / lambda_n^2`` with ``C = C2 / (tau^a Gamma(1-a))``."""
        return self.c2 / (self.tau**self.alpha * self._g)

    c20 = kappa_upper

    @property
    def c18(self) -> float:
        return math.sqrt(2.0) * self.c3

    @property
    def stability(self) -> float:
        """Constant ``C`` of the interior-time stability estimate."""
        return self.c2 * self._w / self.c1

    def c5(self, q: int) -> float:
        """Noise-propagation constant of the modified method (``q >= 1``)."""
        if q < 1:
            raise ParameterError("C5 is defined for q >= 1; q = 0 uses sqrt(2)/beta")
        return math.sqrt(2.0) * psi_peak(self.c4, q, 1.0)[1]

    def c6(self, p: float, q: int) -> float:
        return phi_peak(self.c4, q, p, 1.0)[1]

    def c7(self, p: float, q: int) -> float:
        return 1.0 / (self.c4 * self.lambda1 ** (p - q - 2.0))


def derived_constants(
    domain: SpectralDomain, alpha: float, tau: float, n_points: int = 400
) -> DerivedConstants:
    """Calibrate on ``[-max(1e6, 10 lambda_N^2 tau^a), 0]`` and wrap the result."""
    x_min = -max(1e6, 10.0 * float(domain.eigenvalues[-1]) ** 2 * tau**alpha)
    x_min = float(f"{x_min:.3e}")
    return DerivedConstants(
        alpha=float(alpha),
        tau=float(tau),
        lambda1=domain.lambda1,
        bounds=calibrate(float(alpha), x_min, n_points),
    )
