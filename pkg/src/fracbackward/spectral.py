r"""Dirichlet eigenstructure of boxes and spectral representations.

Functions of space are stored as coefficient vectors in the orthonormal
eigenbasis of :math:`-\Delta` with homogeneous Dirichlet conditions on
:math:`\prod_j (0, L_j)`, truncated to the ``n_modes`` smallest eigenvalues.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate

from .exceptions import ConfigurationError, DomainError, ParameterError

__all__ = [
    "SpectralDomain",
    "SpectralField",
    "SourceSet",
    "TimeSource",
    "NoisyData",
    "build_domain",
    "synthesize_source_member",
    "inject_noise",
    "theta_constant",
    "theta_tail_bound",
    "field_to_json",
    "field_from_json",
    "source_to_json",
    "source_from_json",
    "coefficients_to_csv",
]

MAX_DIM = 7
NOISE_MODES = 64


@dataclass(frozen=True, eq=False)
class SpectralDomain:
    """Box domain with its first ``n_modes`` Dirichlet eigenpairs."""

    dim: int
    side_lengths: tuple[float, ...]
    n_modes: int
    eigenvalues: np.ndarray = field(repr=False)
    multi_indices: np.ndarray = field(repr=False)
    e1: float
    e2: float
    theta: float
    theta_partial: float

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def theta_tail(self) -> float:
        """Part of theta carried by modes beyond ``n_modes``."""
        return max(self.theta - self.theta_partial, 0.0)

    def spec(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "side_lengths": list(self.side_lengths),
            "n_modes": self.n_modes,
        }

    def same_as(self, other: "SpectralDomain") -> bool:
        return self is other or self.spec() == other.spec()

    def eigenfunction(self, n: int, points: np.ndarray) -> np.ndarray:
        """Evaluate the normalized sine product of mode ``n`` (1-based).

        ``points`` has shape ``(..., dim)``.
        """
        if not 1 <= n <= self.n_modes:
            raise ParameterError(f"mode index {n} outside 1..{self.n_modes}")
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ParameterError(f"points must have trailing dimension {self.dim}")
        out = np.ones(pts.shape[:-1])
        for j, (k, L) in enumerate(zip(self.multi_indices[n - 1], self.side_lengths)):
            out = out * math.sqrt(2.0 / L) * np.sin(k * math.pi * pts[..., j] / L)
        return out


def _smallest_eigenvalues(sides: Sequence[float], n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Best-first enumeration of the lattice ``sum_j (k_j pi / L_j)^2``."""
    w = [(math.pi / L) ** 2 for L in sides]
    d = len(sides)

    def value(k: tuple[int, ...]) -> float:
        return sum(wj * kj * kj for wj, kj in zip(w, k))

    start = (1,) * d
    heap = [(value(start), start)]
    seen = {start}
    vals, idx = [], []
    while len(vals) < n_modes:
        v, k = heapq.heappop(heap)
        vals.append(v)
        idx.append(k)
        for j in range(d):
            nk = k[:j] + (k[j] + 1,) + k[j + 1 :]
            if nk not in seen:
                seen.add(nk)
                heapq.heappush(heap, (value(nk), nk))
    return np.array(vals), np.array(idx, dtype=int)


def _heat_trace_1d(c: float, t: float) -> float:
    """sum_{k>=1} exp(-c k^2 t), switching to the Jacobi-transformed form."""
    a = c * t
    if a > 1.0:
        kmax = int(math.sqrt(40.0 / a)) + 2
        return math.fsum(math.exp(-a * k * k) for k in range(1, kmax + 1))
    # theta(x) = sqrt(pi/a) theta(pi^2/a) with theta(x) = 1 + 2 sum exp(-x k^2)
    b = math.pi**2 / a
    kmax = int(math.sqrt(40.0 / b)) + 2
    dual = 1.0 + 2.0 * math.fsum(math.exp(-b * k * k) for k in range(1, kmax + 1))
    return 0.5 * (math.sqrt(math.pi / a) * dual - 1.0)


def theta_constant(side_lengths: Sequence[float]) -> float:
    r"""Compute :math:`\theta = \sum_n \lambda_n^{-4}` over the full spectrum.

    Uses :math:`\lambda^{-4} = \frac16\int_0^\infty t^3 e^{-\lambda t}dt`, so
    theta is a one-dimensional integral of a product of 1-D heat traces.
    Finite only for ``dim <= 7``.
    """
    d = len(side_lengths)
    if not 1 <= d <= MAX_DIM:
        raise DomainError(f"theta diverges for dim = {d}")
    cs = [(math.pi / L) ** 2 for L in side_lengths]
    lam1 = sum(cs)

    def integrand(s: float) -> float:
        # t = s**2 removes the t^{3-d/2} endpoint singularity for d = 7
        t = s * s
        prod = 1.0
        for c in cs:
            prod *= _heat_trace_1d(c, t)
        return 2.0 * s * t**3 * prod

    upper = math.sqrt(80.0 / lam1) * 3.0
    pieces = np.linspace(0.0, upper, 9)
    total = math.fsum(
        integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        for a, b in zip(pieces[:-1], pieces[1:])
    )
    # beyond `upper` the integrand is below exp(-lam1 t) t^3 * const
    return total / 6.0


def theta_tail_bound(side_lengths: Sequence[float], level: float) -> float:
    r"""Upper bound on :math:`\sum_{\lambda_k > \Lambda}\lambda_k^{-4}`.

    Each lattice point ``k`` owns the unit cell ``[k-1, k]`` on which the
    quadratic form is no larger, giving a radial integral over the positive
    orthant outside radius ``sqrt(level) - |c|``.
    """
    d = len(side_lengths)
    c = np.array([math.pi / L for L in side_lengths])
    R = math.sqrt(level) - float(np.linalg.norm(c))
    if R <= 0:
        return math.inf
    volume = math.prod(L / math.pi for L in side_lengths)
    sphere = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return volume * sphere / 2**d * R ** (d - 8) / (8 - d)


def build_domain(dim: int, side_lengths: Sequence[float] | float, n_modes: int) -> SpectralDomain:
    """Eigenpairs of the Dirichlet Laplacian on a box.

    Parameters
    ----------
    dim : int
        Spatial dimension, ``1 <= dim <= 7``.
    side_lengths : sequence of float or float
        Box side lengths (a scalar is broadcast to all axes).
    n_modes : int
        Number of eigenpairs to keep.

    Returns
    -------
    SpectralDomain
        Sorted eigenvalues, multi-indices, envelope constants ``e1, e2``
        and ``theta``.
    """
    if not isinstance(dim, (int, np.integer)) or not 1 <= dim <= MAX_DIM:
        raise DomainError(f"dimension must be in 1..{MAX_DIM}, got {dim}")
    if np.isscalar(side_lengths):
        sides = (float(side_lengths),) * dim
    else:
        sides = tuple(float(s) for s in side_lengths)
    if len(sides) != dim or any(not s > 0 for s in sides):
        raise ParameterError(f"need {dim} positive side lengths, got {sides}")
    if n_modes < 1:
        raise ParameterError("n_modes must be >= 1")

    lam, idx = _smallest_eigenvalues(sides, int(n_modes))
    n = np.arange(1, n_modes + 1)
    ratio = lam / n ** (2.0 / dim)
    theta = theta_constant(sides)
    partial = math.fsum(lam**-4.0)
    return SpectralDomain(
        dim=dim,
        side_lengths=sides,
        n_modes=int(n_modes),
        eigenvalues=lam,
        multi_indices=idx,
        e1=float(ratio.min()),
        e2=float(ratio.max()),
        theta=max(theta, partial),
        theta_partial=partial,
    )


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a function of space in the eigenbasis."""

    coeffs: np.ndarray
    domain: SpectralDomain

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.domain.n_modes,):
            raise ConfigurationError(
                f"expected {self.domain.n_modes} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, domain: SpectralDomain) -> "SpectralField":
        return cls(np.zeros(domain.n_modes), domain)

    @classmethod
    def unit(cls, domain: SpectralDomain, n: int) -> "SpectralField":
        c = np.zeros(domain.n_modes)
        c[n - 1] = 1.0
        return cls(c, domain)

    def norm(self) -> float:
        return float(np.sqrt(math.fsum(self.coeffs**2)))

    def hp_norm(self, p: float) -> float:
        if p < 0:
            raise ParameterError(f"smoothness index must be >= 0, got {p}")
        return float(np.sqrt(math.fsum(self.domain.eigenvalues ** (2 * p) * self.coeffs**2)))

    def inner(self, other: "SpectralField") -> float:
        self._check(other)
        return math.fsum(self.coeffs * other.coeffs)

    def _check(self, other: "SpectralField") -> None:
        if not self.domain.same_as(other.domain):
            raise ConfigurationError("fields live on different domains")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs + other.coeffs, self.domain)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs - other.coeffs, self.domain)

    def __mul__(self, scale: float) -> "SpectralField":
        return SpectralField(scale * self.coeffs, self.domain)

    __rmul__ = __mul__

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Point values of the truncated expansion."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for n in np.flatnonzero(self.coeffs) + 1:
            out += self.coeffs[n - 1] * self.domain.eigenfunction(int(n), pts)
        return out


@dataclass(frozen=True)
class SourceSet:
    """Ball of radius ``rho`` in the scale space ``H_p``."""

    rho: float
    p: float

    def __post_init__(self) -> None:
        if not self.rho > 0 or not self.p > 0:
            raise ParameterError(f"source set needs rho, p > 0, got {self.rho}, {self.p}")

    def contains(self, g: SpectralField) -> bool:
        return g.hp_norm(self.p) <= self.rho


@dataclass(frozen=True, eq=False)
class TimeSource:
    """Source term ``f(., s)`` on ``[0, tau]`` by its mode coefficients.

    ``kind`` is ``"zero"``, ``"constant"`` (``values`` of shape
    ``(n_modes,)``) or ``"sampled"``: piecewise constant in time, ``values``
    of shape ``(len(times) - 1, n_modes)`` with row ``i`` the value on
    ``[times[i], times[i+1])``. All modes share the time grid.
    """

    kind: str
    domain: SpectralDomain
    tau: float
    values: np.ndarray | None = None
    times: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ParameterError(f"horizon tau must be positive, got {self.tau}")
        N = self.domain.n_modes
        if self.kind == "zero":
            object.__setattr__(self, "values", None)
        elif self.kind == "constant":
            v = np.asarray(self.values, dtype=float)
            if v.shape != (N,):
                raise ConfigurationError(f"constant source needs shape ({N},), got {v.shape}")
            object.__setattr__(self, "values", v)
        elif self.kind == "sampled":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or not np.isclose(t[-1], self.tau):
                raise ParameterError("sampled source needs a time grid from 0 to tau")
            if np.any(np.diff(t) <= 0):
                raise ParameterError("time grid must be strictly increasing")
            if v.shape != (t.size - 1, N):
                raise ConfigurationError(
                    f"sampled source needs shape ({t.size - 1}, {N}), got {v.shape}"
                )
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", v)
        else:
            raise ParameterError(f"unknown source kind {self.kind!r}")

    @classmethod
    def zero(cls, domain: SpectralDomain, tau: float) -> "TimeSource":
        return cls("zero", domain, tau)

    @classmethod
    def constant(cls, domain: SpectralDomain, tau: float, values: np.ndarray) -> "TimeSource":
        return cls("constant", domain, tau, values=values)

    @classmethod
    def sampled(
        cls, domain: SpectralDomain, times: np.ndarray, values: np.ndarray
    ) -> "TimeSource":
        times = np.asarray(times, dtype=float)
        return cls("sampled", domain, float(times[-1]), values=values, times=times)

    @property
    def sup_norm(self) -> float:
        """Grid maximum of the spatial L2 norm (exact for piecewise constants)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return float(np.linalg.norm(self.values))
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def shifted(self, delta: np.ndarray) -> "TimeSource":
        """Add the same coefficient vector at every time."""
        delta = np.asarray(delta, dtype=float)
        if self.kind == "zero":
            return TimeSource.constant(self.domain, self.tau, delta.copy())
        if self.kind == "constant":
            return TimeSource.constant(self.domain, self.tau, self.values + delta)
        return TimeSource.sampled(self.domain, self.times, self.values + delta[None, :])

    def difference_sup(self, other: "TimeSource") -> float:
        """``||self - other||_{L^inf(0,tau; L2)}`` on the union of time grids."""
        if not self.domain.same_as(other.domain):
            raise ConfigurationError("sources live on different domains")
        grid = np.union1d(self._grid(), other._grid())
        mids = 0.5 * (grid[:-1] + grid[1:])
        diff = self.at(mids) - other.at(mids)
        return float(np.max(np.linalg.norm(diff, axis=-1)))

    def _grid(self) -> np.ndarray:
        return self.times if self.kind == "sampled" else np.array([0.0, self.tau])

    def at(self, s: np.ndarray) -> np.ndarray:
        """Coefficient vectors at times ``s`` (shape ``s.shape + (n_modes,)``)."""
        s = np.asarray(s, dtype=float)
        N = self.domain.n_modes
        if self.kind == "zero":
            return np.zeros(s.shape + (N,))
        if self.kind == "constant":
            return np.broadcast_to(self.values, s.shape + (N,)).copy()
        i = np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, len(self.times) - 2)
        return self.values[i]


@dataclass(frozen=True, eq=False)
class NoisyData:
    """Perturbed final value and source with their noise level."""

    h_noisy: SpectralField
    f_noisy: TimeSource
    delta: float
    seed: int

    def budget(self, h: SpectralField, f: TimeSource) -> float:
        """``||h - h_noisy||^2 + theta ||f - f_noisy||_inf^2``."""
        theta = h.domain.theta
        return (h - self.h_noisy).norm() ** 2 + theta * f.difference_sup(self.f_noisy) ** 2

    def within_budget(self, h: SpectralField, f: TimeSource) -> bool:
        return self.budget(h, f) <= self.delta**2


def _signs(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=n)


def synthesize_source_member(
    domain: SpectralDomain,
    source_set: SourceSet,
    profile: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | float = 0.55,
    seed: int = 0,
) -> SpectralField:
    """A member of ``S_{rho,p}`` on (just inside) its boundary.

    The default profile is ``lambda_n^{-p} n^{-0.55}`` with seeded random
    signs; a float sets the ``n`` exponent, a callable
    ``profile(eigenvalues, n, p)`` gives arbitrary magnitudes. The result is
    rescaled to ``||g||_{H_p} = rho (1 - 1e-9)``.
    """
    lam = domain.eigenvalues
    n = np.arange(1, domain.n_modes + 1, dtype=float)
    if callable(profile):
        mag = np.asarray(profile(lam, n, source_set.p), dtype=float)
    else:
        mag = lam ** (-source_set.p) * n ** (-float(profile))
    rng = np.random.default_rng(seed)
    g = SpectralField(mag * _signs(rng, domain.n_modes), domain)
    scale = source_set.rho * (1.0 - 1e-9) / g.hp_norm(source_set.p)
    return g * scale


def inject_noise(
    h: SpectralField,
    f: TimeSource,
    delta: float,
    split: float = 0.5,
    seed: int = 0,
) -> NoisyData:
    """Seeded perturbation saturating the combined noise budget.

    ``||h - h^delta|| = sqrt(split) * delta * 0.999`` and
    ``theta ||f - f^delta||_inf^2 = (1 - split) * delta^2 * 0.998``. Both
    perturbations are flat in magnitude over the first 64 modes with random
    signs; the source perturbation is constant in time.
    """
    if not delta > 0:
        raise ParameterError(f"noise level must be positive, got {delta}")
    if not 0.0 <= split <= 1.0:
        raise ParameterError(f"split must lie in [0, 1], got {split}")
    if not h.domain.same_as(f.domain):
        raise ConfigurationError("h and f live on different domains")
    domain = h.domain
    N = domain.n_modes
    m = min(NOISE_MODES, N)
    rng = np.random.default_rng(seed)

    dh = np.zeros(N)
    dh[:m] = _signs(rng, m) / math.sqrt(m)
    df = np.zeros(N)
    df[:m] = _signs(rng, m) / math.sqrt(m)

    h_noisy = h + SpectralField(dh * math.sqrt(split) * delta * 0.999, domain)
    if split < 1.0:
        f_size = math.sqrt((1.0 - split) * 0.998 / domain.theta) * delta
        f_noisy = f.shifted(df * f_size)
    else:
        f_noisy = f
    return NoisyData(h_noisy=h_noisy, f_noisy=f_noisy, delta=float(delta), seed=int(seed))


# {{{ serialization


def field_to_json(g: SpectralField, metadata: dict | None = None) -> str:
    return json.dumps(
        {
            "domain": g.domain.spec(),
            "coeffs": g.coeffs.tolist(),
            "metadata": metadata or {},
        },
        sort_keys=True,
    )


def field_from_json(text: str, domain: SpectralDomain | None = None) -> tuple[SpectralField, dict]:
    rec = json.loads(text)
    if domain is None:
        s = rec["domain"]
        domain = build_domain(s["dim"], s["side_lengths"], s["n_modes"])
    elif domain.spec() != rec["domain"]:
        raise ConfigurationError("serialized field belongs to a different domain")
    return SpectralField(np.array(rec["coeffs"], dtype=float), domain), rec.get("metadata", {})


def source_to_json(f: TimeSource, metadata: dict | None = None) -> str:
    rec: dict[str, Any] = {
        "domain": f.domain.spec(),
        "kind": f.kind,
        "tau": f.tau,
        "metadata": metadata or {},
    }
    if f.kind != "zero":
        rec["values"] = f.values.tolist()
    if f.kind == "sampled":
        rec["times"] = f.times.tolist()
    return json.dumps(rec, sort_keys=True)


def source_from_json(text: str, domain: SpectralDomain | None = None) -> tuple[TimeSource, dict]:
    rec = json.loads(text)
    if domain is None:
        s = rec["domain"]
        domain = build_domain(s["dim"], s["side_lengths"], s["n_modes"])
    elif domain.spec() != rec["domain"]:
        raise ConfigurationError("serialized source belongs to a different domain")
    src = TimeSource(
        rec["kind"],
        domain,
        rec["tau"],
        values=None if rec.get("values") is None else np.array(rec["values"], dtype=float),
        times=None if rec.get("times") is None else np.array(rec["times"], dtype=float),
    )
    return src, rec.get("metadata", {})


def coefficients_to_csv(columns: dict[str, SpectralField | np.ndarray]) -> str:
    """CSV table ``n, lambda_n, <name>...`` of coefficient columns."""
    fields = list(columns.values())
    domain = next(c.domain for c in fields if isinstance(c, SpectralField))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "lambda_n", *columns])
    arrays = [c.coeffs if isinstance(c, SpectralField) else np.asarray(c) for c in fields]
    for i in range(domain.n_modes):
        w.writerow([i + 1, repr(float(domain.eigenvalues[i]))] + [repr(float(a[i])) for a in arrays])
    return buf.getvalue()


# }}}
