"""
Differentiation as a first-kind integral equation
=================================================

(Tx)(t) = int_0^t x(s) ds = t^2 / 2 has the solution x(s) = s.  Random row
projections (a randomized Kaczmarz sweep) recover it on a grid.
"""
import numpy as np

from rfi.integral_eq import build_problem, least_squares_solution, solve_random_sweep

problem = build_problem("indicator", "half_t_squared", 0.0, 1.0, 201)
mask = problem.grid >= 0.05

direct = least_squares_solution(problem)
print("direct solve, sup error:", np.abs(direct - problem.grid)[mask].max())

x = np.zeros(problem.n)
done = 0
for K in (10_000, 50_000, 200_000, 600_000):
    x, hist = solve_random_sweep(problem, x, K - done, seed=K)
    done = K
    err = np.abs(x - problem.grid)[mask].max()
    print(f"after {K:7d} projections: sup error {err:.4f}, L2 residual {hist.l2[-1]:.2e}")
