"""
Operator classes at a glance
============================

Projectors are averaged, the Huber map only paracontracts, a rotation is
merely nonexpansive, and the prox of 1 - exp(-|x|^2) is not even that.
"""
import math

import numpy as np

from rfi import (
    ExpQuasiconvexProx,
    Huber,
    LineProjector,
    Rotation,
    SinglePoint,
    verify_averaged_sampled,
    verify_paracontraction_sampled,
)

rng = np.random.default_rng(4)
pairs = list(zip(rng.normal(size=(500, 2)), rng.normal(size=(500, 2))))

line = LineProjector(0.3)
print("line projector averaged(1/2):", verify_averaged_sampled(line, 0.5, pairs).all_passed)

huber = Huber(1.0)
print("Huber f(-2) =", huber.apply([-2.0])[0])
print("Huber averaged at (-2,-1):", verify_averaged_sampled(huber, 0.5, [([-2.0], [-1.0])]).all_passed)
print("Huber paracontracts:", verify_paracontraction_sampled(huber, SinglePoint([0.0]), rng.normal(size=(200, 1)) * 3).passed)

rot = Rotation(math.pi / 3)
print("rotation paracontracts:", verify_paracontraction_sampled(rot, SinglePoint([0.0, 0.0]), rng.normal(size=(50, 2))).passed)

prox = ExpQuasiconvexProx()
samples = rng.uniform(-2, 2, (200, 2))
rep = verify_paracontraction_sampled(prox, SinglePoint([0.0, 0.0]), samples)
print(f"exp prox paracontracts: {rep.passed} (smallest margin {rep.min_margin:.2e})")
