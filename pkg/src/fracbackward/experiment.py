"""Convergence-rate sweeps over a noise-level grid.

A sweep draws ground truths on the boundary of the source set, computes
the final value with a fixed source, perturbs both, reconstructs with every
requested method and parameter rule, and fits log-log slopes of the median
error against the noise level.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from .constants import DerivedConstants
from .exceptions import FracBackwardError, ParameterError
from .forward import EffectiveData, effective_data, forward_solve
from .inverse import BackwardOperator, build_operator
from .regularization import (
    DiscrepancyConfig,
    FtmConfig,
    QbvmConfig,
    aposteriori_beta,
    aposteriori_N,
    aposteriori_N_bound,
    apriori_beta,
    apriori_N,
    ftm_solve,
    qbvm_solve,
    theoretical_rate,
)
from .spectral import (
    SourceSet,
    SpectralDomain,
    SpectralField,
    TimeSource,
    build_domain,
    inject_noise,
    synthesize_source_member,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "RateRecord",
    "SlopeFit",
    "ExperimentResult",
    "default_delta_grid",
    "thread_count",
    "run_experiment",
    "fit_slopes",
    "records_to_csv",
    "records_from_csv",
    "fits_to_csv",
    "render_svg",
    "emit_outputs",
]

THREADS_ENV = "FRACBACKWARD_THREADS"
RECORD_COLUMNS = ["method", "rule", "q", "p", "delta", "seed", "param", "error", "residual", "wall_ms"]
FIT_COLUMNS = ["method", "rule", "q", "p", "slope", "intercept", "r2", "rate", "n_points"]


def default_delta_grid() -> list[float]:
    """Half-decade grid ``1e-2, 10^-2.5, ..., 1e-7``."""
    return [10.0 ** (-2.0 - k / 2.0) for k in range(11)]


def thread_count() -> int:
    """Worker threads from ``FRACBACKWARD_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(n, 1)


def _split_method(method: str) -> tuple[str, int]:
    if method == "ftm":
        return "ftm", 0
    if method == "qbvm":
        return "qbvm", 0
    if method.startswith("mqbvm:"):
        q = int(method.split(":", 1)[1])
        if q < 1:
            raise ParameterError(f"modified method needs q >= 1, got {method!r}")
        return method, q
    raise ParameterError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a sweep (and hence every output byte)."""

    dim: int = 1
    side_lengths: tuple[float, ...] = (math.pi,)
    n_modes: int = 256
    alpha: float = 0.5
    tau: float = 1.0
    p: tuple[float, ...] = (2.0,)
    rho: float = 1.0
    methods: tuple[str, ...] = ("ftm", "qbvm", "mqbvm:2")
    rules: tuple[str, ...] = ("apriori", "aposteriori")
    delta_grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_delta_grid()))
    trials: int = 5
    split: float = 0.5
    xi: float = 1.5
    mu: float = 1.5
    nu: float = 0.5
    source_scale: float = 0.1
    profile_exponent: float = 0.55
    discard: int = 1
    record_timing: bool = False
    records_csv: str | None = None
    fits_csv: str | None = None
    plot_svg: str | None = None

    def __post_init__(self) -> None:
        for name in ("side_lengths", "p", "methods", "rules", "delta_grid"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        object.__setattr__(self, "side_lengths", tuple(float(s) for s in self.side_lengths))
        if len(self.side_lengths) == 1 and self.dim > 1:
            object.__setattr__(self, "side_lengths", self.side_lengths * self.dim)
        grid = np.asarray(self.delta_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
            raise ParameterError("delta_grid must be positive and strictly decreasing")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        for m in self.methods:
            _split_method(m)
        for r in self.rules:
            if r not in ("apriori", "aposteriori"):
                raise ParameterError(f"unknown rule {r!r}")
        if any(not pv > 0 for pv in self.p):
            raise ParameterError("smoothness indices must be positive")
        DiscrepancyConfig(self.xi, self.mu, self.nu)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.trials))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class RateRecord:
    method: str
    rule: str
    q: int
    p: float
    delta: float
    seed: int
    param: float
    error: float
    residual: float
    wall_ms: float = 0.0

    @property
    def key(self) -> tuple[str, str, int, float]:
        return (self.method, self.rule, self.q, self.p)

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.error)


@dataclass(frozen=True)
class SlopeFit:
    method: str
    rule: str
    q: int
    p: float
    slope: float
    intercept: float
    r2: float
    rate: float
    n_points: int

    @property
    def key(self) -> tuple[str, str, int, float]:
        return (self.method, self.rule, self.q, self.p)


@dataclass
class ExperimentResult:
    """Records plus sweep-level diagnostics; iterates over the records."""

    records: list[RateRecord]
    constants: DerivedConstants | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __iter__(self) -> Iterator[RateRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _fixed_source(domain: SpectralDomain, tau: float, norm: float) -> TimeSource:
    n = np.arange(1, domain.n_modes + 1, dtype=float)
    c = 1.0 / n
    return TimeSource.constant(domain, tau, c * (norm / np.linalg.norm(c)))


def _noise_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


@dataclass
class _Context:
    spec: ExperimentSpec
    domain: SpectralDomain
    op: BackwardOperator
    constants: DerivedConstants
    source: TimeSource
    disc: DiscrepancyConfig


def _cell(
    ctx: _Context,
    method: str,
    rule: str,
    p: float,
    delta: float,
    seed: int,
    g: SpectralField,
    ups: EffectiveData,
    notes: list,
) -> RateRecord:
    spec = ctx.spec
    name, q = _split_method(method)
    start = time.perf_counter()
    try:
        if name == "ftm":
            if rule == "apriori":
                n = apriori_N(delta, spec.rho, p, ctx.domain, ctx.constants)
            else:
                n = aposteriori_N(ups, delta, spec.mu)
                bound = aposteriori_N_bound(
                    delta, spec.rho, p, spec.mu, ctx.domain, ctx.constants.c20
                )
                if n > bound:
                    notes.append(("n_bound_violation", method, p, delta, seed, n, bound))
            sol = ftm_solve(ctx.op, ups, FtmConfig(n), rule)
        else:
            if rule == "apriori":
                beta = apriori_beta(delta, spec.rho, p, q)
            else:
                beta = aposteriori_beta(ctx.op, ups, delta, q, ctx.disc)
            sol = qbvm_solve(ctx.op, ups, QbvmConfig(q, beta), rule)
    except FracBackwardError as exc:
        notes.append(("failed", method, rule, p, delta, seed, type(exc).__name__, str(exc)))
        nan = float("nan")
        return RateRecord(method, rule, q, p, delta, seed, nan, nan, nan, 0.0)
    elapsed = (time.perf_counter() - start) * 1e3 if spec.record_timing else 0.0
    error = (g - sol.g_rec).norm()
    return RateRecord(method, rule, q, p, delta, seed, sol.parameter, error, sol.residual, elapsed)


def _trial(ctx: _Context, p: float, seed: int) -> tuple[list[RateRecord], list]:
    spec = ctx.spec
    notes: list = []
    g = synthesize_source_member(
        ctx.domain, SourceSet(spec.rho, p), spec.profile_exponent, seed=seed
    )
    h = forward_solve(ctx.domain, spec.alpha, g, ctx.source, spec.tau).final_value()

    clean = effective_data(h, ctx.source, spec.alpha, spec.tau)
    exact = ftm_solve(ctx.op, clean, FtmConfig(ctx.domain.n_modes))
    notes.append(("clean_roundtrip", p, seed, (g - exact.g_rec).norm() / g.norm()))

    records = []
    for k, delta in enumerate(spec.delta_grid):
        noisy = inject_noise(h, ctx.source, delta, spec.split, seed=_noise_seed(seed, k))
        if not noisy.within_budget(h, ctx.source):
            notes.append(("budget_violation", p, delta, seed, noisy.budget(h, ctx.source)))
        ups = effective_data(noisy.h_noisy, noisy.f_noisy, spec.alpha, spec.tau, "noisy")
        for method in spec.methods:
            for rule in spec.rules:
                records.append(_cell(ctx, method, rule, p, delta, seed, g, ups, notes))
    return records, notes


def _truncation_bias(spec: ExperimentSpec, domain: SpectralDomain, p: float) -> float:
    """H_0 tail of the default profile beyond the stored modes, relative to rho.

    Uses the lower envelope ``lambda_n >= e1 n^(2/d)`` past ``N_max``.
    """
    N = domain.n_modes
    n = np.arange(1, N + 1, dtype=float)
    # the H_p norm of the unscaled profile is (sum n^{-2 b})^{1/2}
    head = math.sqrt(math.fsum(n ** (-2.0 * spec.profile_exponent)))
    s = 4.0 * p / domain.dim + 2.0 * spec.profile_exponent
    # sum_{n > N} n^{-s} <= N^{1-s}/(s-1)
    tail_sq = domain.e1 ** (-2.0 * p) * N ** (1.0 - s) / (s - 1.0)
    return spec.rho * math.sqrt(tail_sq) / head


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Run every ``(p, seed, delta, method, rule)`` cell of ``spec``.

    Parameter-choice failures are recorded as cells with ``nan`` error. The
    record order is fixed (sorted by key, then delta and seed) so the output
    does not depend on the number of worker threads.
    """
    domain = build_domain(spec.dim, spec.side_lengths, spec.n_modes)
    op = build_operator(domain, spec.alpha, spec.tau)
    constants = op.constants
    source = _fixed_source(domain, spec.tau, spec.rho * spec.source_scale)
    ctx = _Context(spec, domain, op, constants, source, DiscrepancyConfig(spec.xi, spec.mu, spec.nu))

    jobs = [(p, seed) for p in spec.p for seed in spec.seeds]
    workers = thread_count() if workers is None else max(int(workers), 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(lambda job: _trial(ctx, *job), jobs))
    else:
        outputs = [_trial(ctx, *job) for job in jobs]

    records = [r for recs, _ in outputs for r in recs]
    notes = [n for _, ns in outputs for n in ns]
    order = {m: i for i, m in enumerate(spec.methods)}
    rule_order = {r: i for i, r in enumerate(spec.rules)}
    records.sort(key=lambda r: (r.p, order[r.method], rule_order[r.rule], -r.delta, r.seed))

    diagnostics: dict[str, Any] = {
        "failed_cells": [n[1:] for n in notes if n[0] == "failed"],
        "budget_violations": [n[1:] for n in notes if n[0] == "budget_violation"],
        "n_bound_violations": [n[1:] for n in notes if n[0] == "n_bound_violation"],
        "clean_roundtrip_max": max(n[3] for n in notes if n[0] == "clean_roundtrip"),
        "amplification_max": float(1.0 / op.kappas[-1]),
    }
    bias = {p: _truncation_bias(spec, domain, p) for p in spec.p}
    smallest = {
        p: min((r.error for r in records if r.p == p and not r.failed), default=float("nan"))
        for p in spec.p
    }
    diagnostics["truncation_bias"] = bias
    diagnostics["smallest_error"] = smallest
    diagnostics["truncation_bias_ok"] = all(bias[p] < 0.01 * smallest[p] for p in spec.p)
    if not diagnostics["truncation_bias_ok"]:
        logger.warning("profile tail beyond N_max is not below 1%% of the smallest error")
    for n in diagnostics["failed_cells"]:
        logger.info("cell failed: %s", n)
    return ExperimentResult(records, constants, diagnostics)


# {{{ slope fitting


def _median_curves(
    records: Iterable[RateRecord],
) -> dict[tuple, list[tuple[float, float]]]:
    groups: dict[tuple, dict[float, list[float]]] = {}
    for r in records:
        groups.setdefault(r.key, {}).setdefault(r.delta, []).append(r.error)
    curves = {}
    for key, by_delta in groups.items():
        pts = []
        for delta in sorted(by_delta, reverse=True):
            errs = [e for e in by_delta[delta] if math.isfinite(e)]
            if errs:
                pts.append((delta, float(np.median(errs))))
        curves[key] = pts
    return curves


def fit_slopes(
    records: Iterable[RateRecord],
    discard: int = 1,
    nu: float = 0.5,
    min_points: int = 4,
    diagnostics: list | None = None,
) -> list[SlopeFit]:
    """Least-squares slope of log median error against log delta per key.

    The ``discard`` largest noise levels are dropped first. Keys with fewer
    than ``min_points`` usable points or with zero errors are skipped and
    reported in ``diagnostics``.
    """
    fits = []
    for key, pts in sorted(_median_curves(records).items()):
        method, rule, q, p = key
        pts = pts[discard:]
        if any(e <= 0 for _, e in pts):
            if diagnostics is not None:
                diagnostics.append((key, "zero error"))
            continue
        if len(pts) < min_points:
            if diagnostics is not None:
                diagnostics.append((key, f"only {len(pts)} points"))
            continue
        x = np.log([d for d, _ in pts])
        y = np.log([e for _, e in pts])
        A = np.vstack([x, np.ones_like(x)]).T
        (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
        ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        r2 = min(max(r2, 0.0), 1.0)
        rate = theoretical_rate(method, rule, p, q, nu)
        fits.append(SlopeFit(method, rule, q, p, float(slope), float(intercept), r2, rate, len(pts)))
    return fits


# }}}


# {{{ output


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[RateRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])
    return buf.getvalue()


def records_from_csv(text: str) -> list[RateRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != RECORD_COLUMNS:
        raise ParameterError("not a rate-record table")
    out = []
    for row in rows[1:]:
        d = dict(zip(RECORD_COLUMNS, row))
        out.append(
            RateRecord(
                method=d["method"],
                rule=d["rule"],
                q=int(d["q"]),
                p=float(d["p"]),
                delta=float(d["delta"]),
                seed=int(d["seed"]),
                param=float(d["param"]),
                error=float(d["error"]),
                residual=float(d["residual"]),
                wall_ms=float(d["wall_ms"]),
            )
        )
    return out


def fits_to_csv(fits: Iterable[SlopeFit]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    for f in fits:
        w.writerow([_fmt(getattr(f, c)) for c in FIT_COLUMNS])
    return buf.getvalue()


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def render_svg(records: Sequence[RateRecord], fits: Sequence[SlopeFit] = (), width: int = 640, height: int = 480) -> str:
    """Log-log error-vs-delta plot: one polyline per key, dashed rate guides."""
    curves = {k: v for k, v in sorted(_median_curves(records).items()) if v}
    pad = 60
    pts_all = [pt for pts in curves.values() for pt in pts if pt[1] > 0]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if pts_all:
        lx = np.log10([d for d, _ in pts_all])
        ly = np.log10([e for _, e in pts_all])
        x0, x1 = float(lx.min()), float(lx.max())
        y0, y1 = float(ly.min()), float(ly.max())
        x1 = x1 if x1 > x0 else x0 + 1.0
        y1 = y1 if y1 > y0 else y0 + 1.0

        def X(v: float) -> float:
            return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

        def Y(v: float) -> float:
            return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

        lines.append(
            f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
            'fill="none" stroke="black"/>'
        )
        lines.append(
            f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle" '
            'font-size="12">log10 delta</text>'
        )
        lines.append(
            f'<text x="15" y="{height / 2:.0f}" font-size="12" '
            f'transform="rotate(-90 15 {height / 2:.0f})" text-anchor="middle">log10 error</text>'
        )
        fit_by_key = {f.key: f for f in fits}
        for i, (key, pts) in enumerate(curves.items()):
            color = _PALETTE[i % len(_PALETTE)]
            label = "/".join(str(k) for k in key)
            coords = " ".join(
                f"{X(math.log10(d)):.2f},{Y(math.log10(e)):.2f}" for d, e in pts if e > 0
            )
            lines.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}">'
                f"<title>{label}</title></polyline>"
            )
            f = fit_by_key.get(key)
            if f is not None:
                # guide through the fitted centre with the theoretical slope
                xs = [math.log10(d) for d, _ in pts]
                xm = float(np.mean(xs))
                ym = (f.slope * xm * math.log(10) + f.intercept) / math.log(10)
                ya = ym + f.rate * (x0 - xm)
                yb = ym + f.rate * (x1 - xm)
                lines.append(
                    f'<line x1="{X(x0):.2f}" y1="{Y(ya):.2f}" x2="{X(x1):.2f}" y2="{Y(yb):.2f}" '
                    f'stroke="{color}" stroke-dasharray="4 3" stroke-width="0.8"/>'
                )
            lines.append(
                f'<text x="{width - pad + 4}" y="{pad + 12 * i + 10}" font-size="9" '
                f'fill="{color}">{label}</text>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _write(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(
    records: Sequence[RateRecord],
    fits: Sequence[SlopeFit],
    records_csv: str | Path | None = None,
    fits_csv: str | Path | None = None,
    plot_svg: str | Path | None = None,
) -> list[Path]:
    """Write whichever of the three artifacts have a path."""
    written = []
    if records_csv is not None:
        written.append(_write(records_csv, records_to_csv(records)))
    if fits_csv is not None:
        written.append(_write(fits_csv, fits_to_csv(fits)))
    if plot_svg is not None:
        written.append(_write(plot_svg, render_svg(records, fits)))
    return written


# }}}
