"""
Disks on a circle: a point can be almost surely feasible without regularity
===========================================================================

Unit disks centred at rho e_t, t uniform, intersect in the ball of radius
1 - rho.  Just outside that ball most disks still contain the point, which is
how linear regularity fails.
"""
import math

import numpy as np

from rfi import ContinuousUniform, DiskOnCircle, RngStream
from rfi.diagnostics import feasibility_probability
from rfi.merit import disk_feasibility_closed

rho = 0.5
family = ContinuousUniform(0, 2 * math.pi, DiskOnCircle(rho))

print(" lambda   p_hat    closed   z")
for i, lam in enumerate(np.r_[0.501, 0.51, 0.6, 0.8, 1.0, 1.2, 1.45]):
    rep = feasibility_probability(family, [lam, 0.0], 50_000, RngStream(3, i), disk_feasibility_closed(rho, lam))
    print(f" {lam:5.3f}  {rep.p_hat:.4f}   {rep.closed_form:.4f}  {rep.z_score:+.2f}")
