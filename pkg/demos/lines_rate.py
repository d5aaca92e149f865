"""
Random projections onto lines through the origin
================================================

Each step projects onto the line R e_a with a ~ unif[0, pi/2].  The only
common point is the origin, and the mean distance to it shrinks geometrically.
"""
import math

import numpy as np

from rfi import Dirac, LineProjector, Problem, SinglePoint, ContinuousUniform, run_ensemble
from rfi.merit import kappa_closed_lines, merit_closed_lines, rate_bound, regularity_constant

beta = math.pi / 2
problem = Problem(ContinuousUniform(0, beta, LineProjector), SinglePoint([0.0, 0.0]))

# regularity constant: sup of dist^2 / R over the unit circle (R is homogeneous)
t = np.linspace(0, 2 * math.pi, 2000, endpoint=False)
probes = np.stack([np.cos(t), np.sin(t)], axis=1)
reg = regularity_constant(problem, probes, lambda x: merit_closed_lines(beta, x))
print(f"kappa_hat = {reg.kappa_hat:.5f}, closed form {kappa_closed_lines(beta):.5f}")

r = rate_bound(reg.kappa_hat, 0.5)
print(f"rate bound r = {r:.5f}")

ens = run_ensemble(problem, Dirac((1.0, 1.0)), 40, 5000, base_seed=1)
md = ens.mean_dist
for k in range(0, 41, 5):
    print(f"k={k:2d}  mean_dist={md[k]:.3e}  bound r^k |x0| = {r**k * md[0]:.3e}")

# the empirical ratio settles well below r
ratios = md[1:] / md[:-1]
print("mean ratio over the run:", ratios.mean().round(4))
