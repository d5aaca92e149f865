"""
Two orthogonal halfplanes: feasibility is never certain
=======================================================

From (-1,-1) a chain lands in the quadrant only after both halfplanes have
been drawn, so P(X_n in C) = 1 - p^n - (1-p)^n stays below one for every n.
"""
import math

from rfi import Box, Dirac, FiniteDiscrete, HalfspaceProjector, Problem, run_ensemble
from rfi.diagnostics import classify_finite_infinite

H1 = HalfspaceProjector((-1.0, 0.0), 0.0)
H2 = HalfspaceProjector((0.0, -1.0), 0.0)

for p in (0.3, 1.0):
    C = Box([0.0, 0.0], [math.inf, math.inf]) if p < 1 else Box([0.0, -math.inf], [math.inf, math.inf])
    problem = Problem(FiniteDiscrete([H1, H2], [p, 1 - p]), C)
    ens = run_ensemble(problem, Dirac((-1.0, -1.0)), 10, 20000, base_seed=2)
    print(f"P(xi=1) = {p}: {classify_finite_infinite(ens).kind.value}")
    for n in (1, 2, 5, 10):
        law = 1 - p**n - (1 - p) ** n if p < 1 else 1.0
        print(f"  n={n:2d}  empirical {ens.feas_frac[n]:.4f}  law {law:.4f}")
