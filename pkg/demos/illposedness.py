"""Forward solve, exact inversion, and how noise blows up without regularization."""

import math

import numpy as np

from fracbackward import (
    SourceSet,
    TimeSource,
    build_domain,
    build_operator,
    effective_data,
    exact_backward,
    forward_solve,
    illposedness_demo,
    inject_noise,
    synthesize_source_member,
)

domain = build_domain(1, math.pi, 256)
op = build_operator(domain, 0.5, 1.0)
g = synthesize_source_member(domain, SourceSet(1.0, 2.0), seed=0)
f = TimeSource.constant(domain, 1.0, 0.1 / np.arange(1, 257))

h = forward_solve(domain, 0.5, g, f, 1.0).final_value()
print(f"||g|| = {g.norm():.4e}, ||h|| = {h.norm():.4e}")

clean = exact_backward(op, effective_data(h, f, 0.5, 1.0))
print(f"clean inversion: relative error {(clean - g).norm() / g.norm():.2e}")

for delta in [1e-8, 1e-6, 1e-4]:
    nd = inject_noise(h, f, delta, seed=1)
    rec = exact_backward(op, effective_data(nd.h_noisy, nd.f_noisy, 0.5, 1.0))
    print(f"delta={delta:.0e}: relative error {(rec - g).norm() / g.norm():.2e}")

print("\nsingle-mode perturbation of h by phi_n / lambda_n")
for n in [1, 4, 16, 32, 64, 256]:
    r = illposedness_demo(op, n)
    print(f"  n={n:3d}  |dh|={r.data_perturbation:.2e}  |du(0)|={r.solution_perturbation:.2e}  ratio={r.ratio:.2e}")
