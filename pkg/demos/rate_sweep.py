"""Desk-scale convergence-rate sweep for all three methods.

Writes records.csv, fits.csv and rates.svg into ./rate_sweep_out.
"""

from pathlib import Path

from fracbackward import ExperimentSpec, emit_outputs, fit_slopes, run_experiment

spec = ExperimentSpec(p=(1.0, 2.0, 4.0, 6.0), methods=("ftm", "qbvm", "mqbvm:2"))
result = run_experiment(spec)
fits = fit_slopes(result.records, spec.discard, spec.nu)

out = Path("rate_sweep_out")
emit_outputs(result.records, fits, out / "records.csv", out / "fits.csv", out / "rates.svg")

print(f"{len(result.records)} cells, {len(result.diagnostics['failed_cells'])} failed")
print(f"{'method':10s} {'rule':12s} {'p':>3s} {'slope':>7s} {'theory':>7s} {'R2':>6s}")
for f in fits:
    print(f"{f.method:10s} {f.rule:12s} {f.p:3g} {f.slope:7.3f} {f.rate:7.3f} {f.r2:6.3f}")
