"""Mittag-Leffler evaluation: branch agreement and the two-sided bound."""

import math

import numpy as np
from scipy import special

from fracbackward.mittag_leffler import MLOrder, calibrate, ml_asymptotic, ml_eval, ml_kernel_l1

# E_{1/2,1}(-y) = exp(y^2) erfc(y), computed with scaled erfc to avoid overflow
print("E_{1/2,1}(-y) against erfcx(y)")
for y in [0.1, 1.0, 5.0, 20.0, 200.0]:
    v = ml_eval(MLOrder(0.5), -y)
    ref = float(special.erfcx(y))
    print(f"  y={y:7.1f}  E={v:.16e}  rel err={abs(v - ref) / ref:.1e}")

# far out the asymptotic series takes over
order = MLOrder(0.8, 0.8)
print("\nE_{0.8,0.8}(x) vs its asymptotic series")
for x in [-20.0, -100.0, -1e3, -1e4]:
    v, a = ml_eval(order, x), ml_asymptotic(order, x)
    print(f"  x={x:9.0f}  E={v: .12e}  asym={a: .12e}")

# kernel L1 norm never exceeds 1/lambda
print("\nlambda * ||t^(a-1) E_{a,a}(-lambda t^a)||_L1(0,tau)")
for lam in [1.0, 1e2, 1e4]:
    row = [lam * ml_kernel_l1(a, lam, 1.0) for a in (0.3, 0.5, 0.7)]
    print(f"  lambda={lam:8.0f}  " + "  ".join(f"{r:.10f}" for r in row))

# calibrated two-sided bound c1 <= E_{a,1}(x) Gamma(1-a)(1-x) <= c2
print("\ncalibrated bound constants")
for a in (0.3, 0.5, 0.8):
    c = calibrate(a, -1e6, 400)
    xs = -np.geomspace(1e-3, 1e6, 7)
    w = [ml_eval(MLOrder(a), x) * math.gamma(1 - a) * (1 - x) for x in xs]
    print(f"  alpha={a}: c1={c.c1_lower:.6f} c2={c.c1_upper:.6f}  samples in [{min(w):.4f}, {max(w):.4f}]")
