"""Command-line entry point: ``fracbackward <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import FracBackwardError
from .experiment import ExperimentSpec, emit_outputs, fit_slopes, run_experiment
from .forward import effective_data, forward_solve
from .inverse import build_operator
from .mittag_leffler import (
    MLOrder,
    calibrate,
    calibration_grid,
    ml_eval,
    save_calibration,
)
from .regularization import (
    DiscrepancyConfig,
    FtmConfig,
    QbvmConfig,
    aposteriori_beta,
    aposteriori_N,
    apriori_beta,
    apriori_N,
    ftm_solve,
    qbvm_solve,
)
from .spectral import (
    SourceSet,
    SpectralField,
    TimeSource,
    build_domain,
    coefficients_to_csv,
    field_from_json,
    field_to_json,
    inject_noise,
    source_from_json,
    synthesize_source_member,
)

logger = logging.getLogger("fracbackward")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2


def _add_domain_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--side", type=float, nargs="+", default=[math.pi], help="box side lengths")
    p.add_argument("--modes", type=int, default=256)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=1.0)


def _domain(args: argparse.Namespace):
    sides = args.side[0] if len(args.side) == 1 else args.side
    return build_domain(args.dim, sides, args.modes)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# {{{ subcommands


def cmd_ml_eval(args: argparse.Namespace) -> int:
    order = MLOrder(args.gamma, args.beta)
    xs = list(args.x)
    if args.x_file:
        xs += [float(tok) for tok in Path(args.x_file).read_text().split()]
    lines = ["x,value"]
    for x in xs:
        lines.append(f"{x!r},{ml_eval(order, x, args.rtol)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_forward(args: argparse.Namespace) -> int:
    domain = _domain(args)
    if args.g0:
        g0, _ = field_from_json(Path(args.g0).read_text(), domain)
    else:
        g0 = SpectralField.unit(domain, args.g0_mode)
    if args.source:
        src, _ = source_from_json(Path(args.source).read_text(), domain)
    else:
        src = TimeSource.zero(domain, args.tau)
    sol = forward_solve(domain, args.alpha, g0, src, args.tau)
    t = args.tau if args.t is None else args.t
    v = sol.at(t)
    if args.json:
        _emit(field_to_json(v, {"t": t, "alpha": args.alpha, "tau": args.tau}) + "\n", args.out)
    else:
        _emit(coefficients_to_csv({"g0": g0, f"v(t={t!r})": v}), args.out)
    return EXIT_OK


def cmd_invert(args: argparse.Namespace) -> int:
    domain = _domain(args)
    op = build_operator(domain, args.alpha, args.tau)
    src_set = SourceSet(args.rho, args.p)

    if args.h:
        h_noisy, _ = field_from_json(Path(args.h).read_text(), domain)
        f_noisy = (
            source_from_json(Path(args.f).read_text(), domain)[0]
            if args.f
            else TimeSource.zero(domain, args.tau)
        )
        g_true = None
    else:
        g_true = synthesize_source_member(domain, src_set, seed=args.seed)
        f = TimeSource.constant(domain, args.tau, np.zeros(domain.n_modes))
        h = forward_solve(domain, args.alpha, g_true, f, args.tau).final_value()
        noisy = inject_noise(h, f, args.delta, args.split, seed=args.seed)
        h_noisy, f_noisy = noisy.h_noisy, noisy.f_noisy
    ups = effective_data(h_noisy, f_noisy, args.alpha, args.tau, "noisy")

    diag: dict = {}
    if args.method == "ftm":
        if args.rule == "fixed":
            if args.n_cut is None:
                raise SystemExit("--n-cut is required with --rule fixed")
            n = args.n_cut
        elif args.rule == "apriori":
            n = apriori_N(args.delta, args.rho, args.p, domain, op.constants, diagnostics=diag)
        else:
            n = aposteriori_N(ups, args.delta, args.mu)
        sol = ftm_solve(op, ups, FtmConfig(n), args.rule, diag)
    else:
        q = 0 if args.method == "qbvm" else args.q
        if args.method == "mqbvm" and q < 1:
            raise SystemExit("--q must be >= 1 for mqbvm")
        if args.rule == "fixed":
            if args.beta is None:
                raise SystemExit("--beta is required with --rule fixed")
            beta = args.beta
        elif args.rule == "apriori":
            beta = apriori_beta(args.delta, args.rho, args.p, q)
        else:
            cfg = DiscrepancyConfig(args.xi, args.mu, args.nu)
            beta = aposteriori_beta(op, ups, args.delta, q, cfg, diag)
        sol = qbvm_solve(op, ups, QbvmConfig(q, beta), args.rule, diag)

    summary = {
        "method": sol.method,
        "rule": sol.choice_rule,
        "parameter": sol.parameter,
        "residual": sol.residual,
        "delta": args.delta,
        "diagnostics": {k: v for k, v in diag.items() if isinstance(v, (int, float, str, bool))},
    }
    if g_true is not None:
        summary["error"] = (g_true - sol.g_rec).norm()
        summary["relative_error"] = summary["error"] / g_true.norm()
    if args.out:
        Path(args.out).write_text(field_to_json(sol.g_rec, summary) + "\n")
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_rates(args: argparse.Namespace) -> int:
    spec = ExperimentSpec.from_file(args.spec) if args.spec else ExperimentSpec()
    result = run_experiment(spec)
    fits = fit_slopes(result.records, spec.discard, spec.nu)
    out_dir = Path(args.out_dir) if args.out_dir else None

    def path(name: str | None, default: str) -> Path | None:
        if out_dir is not None:
            return out_dir / (Path(name).name if name else default)
        return Path(name) if name else None

    emit_outputs(
        result.records,
        fits,
        path(spec.records_csv, "records.csv"),
        path(spec.fits_csv, "fits.csv"),
        path(spec.plot_svg, "rates.svg"),
    )
    failed = 0
    for f in fits:
        lo, hi = f.rate - args.below, f.rate + args.above
        ok = lo <= f.slope <= hi
        failed += not ok
        sys.stdout.write(
            f"{'PASS' if ok else 'FAIL'} {f.method:10s} {f.rule:12s} p={f.p:<4g} "
            f"slope={f.slope:.3f} rate={f.rate:.3f} band=[{lo:.3f}, {hi:.3f}] R2={f.r2:.3f}\n"
        )
    n_failed_cells = len(result.diagnostics["failed_cells"])
    sys.stdout.write(f"{len(result.records)} cells, {n_failed_cells} failed parameter choices\n")
    if args.check and failed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    entries = []
    for a in args.alpha:
        c = calibrate(a, args.x_min, args.n_points)
        grid = calibration_grid(args.x_min, args.n_points)
        entries.append((c, {"x_min": args.x_min, "n_points": args.n_points, "size": int(grid.size)}))
        sys.stdout.write(f"alpha={a:g} c1_lower={c.c1_lower!r} c1_upper={c.c1_upper!r} grid={c.grid_hash}\n")
    if args.out:
        save_calibration(args.out, entries)
    return EXIT_OK


# }}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracbackward",
        description="Backward problem for the time-fractional fourth-order parabolic equation.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ml-eval", help="evaluate E_{gamma,beta}(x) for x <= 0")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--x", type=float, nargs="*", default=[])
    p.add_argument("--x-file", help="whitespace-separated arguments")
    p.add_argument("--rtol", type=float, default=1e-12)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ml_eval)

    p = sub.add_parser("forward", help="solve the forward problem and dump coefficients")
    _add_domain_args(p)
    p.add_argument("--g0", help="initial value as a field JSON file")
    p.add_argument("--g0-mode", type=int, default=1, help="unit initial value on this mode")
    p.add_argument("--source", help="source as a source JSON file (default zero)")
    p.add_argument("--t", type=float, help="evaluation time (default tau)")
    p.add_argument("--json", action="store_true", help="write a field JSON record instead of CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("invert", help="one regularized backward solve")
    _add_domain_args(p)
    p.add_argument("--method", choices=["qbvm", "mqbvm", "ftm"], default="qbvm")
    p.add_argument("--rule", choices=["apriori", "aposteriori", "fixed"], default="apriori")
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--beta", type=float)
    p.add_argument("--n-cut", type=int)
    p.add_argument("--delta", type=float, default=1e-4)
    p.add_argument("--xi", type=float, default=1.5)
    p.add_argument("--mu", type=float, default=1.5)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--p", type=float, default=2.0, help="smoothness index of the source set")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", help="noisy final value (field JSON); synthesized if omitted")
    p.add_argument("--f", help="noisy source (source JSON)")
    p.add_argument("--out", help="write the reconstruction as field JSON")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("rates", help="convergence-rate sweep from a spec file")
    p.add_argument("--spec", help="experiment spec (JSON); defaults if omitted")
    p.add_argument("--out-dir", help="directory for records.csv, fits.csv, rates.svg")
    p.add_argument("--check", action="store_true", help="exit 2 if a slope leaves its band")
    p.add_argument("--below", type=float, default=0.10, help="band below the theoretical rate")
    p.add_argument("--above", type=float, default=0.15, help="band above the theoretical rate")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("calibrate", help="calibrate the two-sided Mittag-Leffler bound")
    p.add_argument("--alpha", type=float, nargs="+", required=True)
    p.add_argument("--x-min", type=float, default=-1e6)
    p.add_argument("--n-points", type=int, default=400)
    p.add_argument("--out", help="calibration fixture path (JSON)")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FracBackwardError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
