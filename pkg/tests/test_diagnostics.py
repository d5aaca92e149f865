import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import disk_feas_quad, w1_assignment, w1_bruteforce
from rfi.chain import Ensemble, Problem, run_ensemble
from rfi.diagnostics import (
    Convergence,
    classify_finite_infinite,
    empirical_rate,
    feasibility_probability,
    limit_distance_curve,
    wasserstein_1d,
    wasserstein_curve,
)
from rfi.errors import ConfigError, DegenerateError, ShapeError
from rfi.merit import disk_feasibility_closed, kappa_closed_lines, rate_bound
from rfi.operators import (
    AffineHyperplaneProjector,
    AffineSubspace,
    Ball,
    Box,
    DiskOnCircle,
    HalfspaceProjector,
    IntervalProjector,
    LineProjector,
    SinglePoint,
)
from rfi.sampling import ContinuousUniform, Dirac, FiniteDiscrete, RngStream, UniformBox

HALF_PI = math.pi / 2
H1 = HalfspaceProjector((-1.0, 0.0), 0.0)
H2 = HalfspaceProjector((0.0, -1.0), 0.0)


def lines():
    return Problem(ContinuousUniform(0, HALF_PI, LineProjector), SinglePoint([0.0, 0.0]))


def disk_family(rho=0.5):
    return ContinuousUniform(0, 2 * math.pi, DiskOnCircle(rho))


# -- rates -------------------------------------------------------------------------


def test_lines_rate_within_theory():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 60, 10_000, base_seed=1)
    curve = empirical_rate(ens, rate_bound(kappa_closed_lines(HALF_PI), 0.5))
    assert curve.passed and len(curve.checked) > 30
    assert np.all(curve.ratios >= 0)


def test_rate_flags_a_too_small_theory():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 20, 2000, base_seed=2)
    assert not empirical_rate(ens, 0.5).passed


def test_single_hyperplane_one_step():
    op = AffineHyperplaneProjector((1.0, 1.0), 1.0)
    pb = Problem(FiniteDiscrete([op], [1.0]), op.fixed_point_set())
    ens = run_ensemble(pb, UniformBox((-3.0, -3.0), (3.0, 3.0)), 3, 100, base_seed=3)
    curve = empirical_rate(ens)
    assert curve.steps.tolist() == [0]
    assert curve.ratios[0] == pytest.approx(0.0, abs=1e-15)


def test_intervals_first_step_ratio_tends_to_one():
    eps = 0.1
    pb = Problem(ContinuousUniform(eps - 0.5, 0.5 - eps, IntervalProjector), Box([-eps], [eps]))
    ratios = []
    for j in (2, 4, 6, 8):
        ens = run_ensemble(pb, Dirac((eps + 2.0**-j,)), 2, 20_000, base_seed=4)
        ratios.append(empirical_rate(ens).ratios[0])
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] > 0.98


def test_rate_degenerate():
    ens = run_ensemble(lines(), Dirac((0.0, 0.0)), 3, 10, base_seed=5)
    with pytest.raises(DegenerateError):
        empirical_rate(ens)


def test_rate_needs_two_steps():
    ens = run_ensemble(lines(), Dirac((1.0, 0.0)), 1, 10, base_seed=5)
    with pytest.raises(ConfigError):
        empirical_rate(ens)


def test_rate_floor_skips_converged_steps():
    dists = np.array([[1.0, 0.5, 0.0, 0.0]])
    curve = empirical_rate(Ensemble(dists, np.array([2])))
    assert curve.steps.tolist() == [0, 1]


# -- feasibility probability -------------------------------------------------------


def test_disks_closed_form_value():
    assert disk_feasibility_closed(0.5, 1.0) == pytest.approx(math.acos(0.25) / math.pi, abs=1e-15)
    assert disk_feasibility_closed(0.5, 1.0) == pytest.approx(0.41956, abs=1e-5)


@pytest.mark.parametrize("lam", [0.51, 0.6, 0.8, 1.0, 1.2, 1.45])
def test_disks_closed_vs_grid_oracle(lam):
    assert disk_feasibility_closed(0.5, lam) == pytest.approx(disk_feas_quad(0.5, lam), abs=1e-5)


def test_disks_feasibility_mc():
    rep = feasibility_probability(disk_family(), [1.0, 0.0], 10**5, RngStream(6), disk_feasibility_closed(0.5, 1.0))
    assert abs(rep.z_score) <= 3
    assert 0 <= rep.p_hat <= 1


def test_disks_feasibility_approaches_one():
    ps = [feasibility_probability(disk_family(), [lam, 0.0], 20000, RngStream(7)).p_hat for lam in (0.9, 0.7, 0.55, 0.501)]
    assert all(b > a for a, b in zip(ps, ps[1:]))
    assert ps[-1] > 0.97


def test_far_point_never_feasible():
    assert feasibility_probability(disk_family(), [10.0, 10.0], 1000, RngStream(8)).p_hat == 0.0


def test_feasibility_needs_samples():
    with pytest.raises(ConfigError):
        feasibility_probability(disk_family(), [1.0, 0.0], 50, RngStream(8))


def test_feasibility_below_rate_for_regular_problem():
    # lines: a point off the origin lies on a random line with probability 0
    r = rate_bound(kappa_closed_lines(HALF_PI), 0.5)
    fam = ContinuousUniform(0, HALF_PI, LineProjector)
    for x in np.random.default_rng(9).normal(size=(10, 2)):
        rep = feasibility_probability(fam, x, 2000, RngStream(9))
        assert rep.p_hat <= r + 3 * rep.std_error


# -- classification -----------------------------------------------------------------


def _halfspace_problem(p):
    C = Box([0.0, 0.0], [math.inf, math.inf]) if p < 1 else Box([0.0, -math.inf], [math.inf, math.inf])
    return Problem(FiniteDiscrete([H1, H2], [p, 1 - p]), C)


def test_classify_one_step():
    ens = run_ensemble(_halfspace_problem(1.0), Dirac((-1.0, -1.0)), 5, 1000, base_seed=10)
    cl = classify_finite_infinite(ens)
    assert cl.kind is Convergence.ONE_STEP and cl.kind.value == "OneStep" and not cl.contradiction


def test_classify_never_certain():
    ens = run_ensemble(_halfspace_problem(0.3), Dirac((-1.0, -1.0)), 10, 10_000, base_seed=11)
    cl = classify_finite_infinite(ens)
    assert cl.kind is Convergence.NEVER_CERTAIN and not cl.contradiction
    assert np.all(ens.feas_frac[1:] < 1)


def test_classify_start_in_c():
    ens = run_ensemble(_halfspace_problem(0.3), UniformBox((0.0, 0.0), (1.0, 1.0)), 3, 1000, base_seed=12)
    assert classify_finite_infinite(ens).kind is Convergence.ONE_STEP


def test_classify_reports_contradiction():
    # synthetic: one trajectory hits at step 2, but every trajectory is feasible at step 2
    dists = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    cl = classify_finite_infinite(Ensemble(dists, np.array([1, 2])))
    assert cl.kind is Convergence.NEVER_CERTAIN and cl.contradiction and cl.first_full_step == 2


@settings(max_examples=40)
@given(st.lists(st.integers(-1, 6), min_size=1, max_size=30))
def test_classify_never_one_step_with_late_hits(hits):
    hits = np.array(hits)
    dists = np.ones((len(hits), 7))
    for m, h in enumerate(hits):
        if h >= 0:
            dists[m, h:] = 0.0
    cl = classify_finite_infinite(Ensemble(dists, hits))
    if np.any((hits > 1) | (hits < 0)):
        assert cl.kind is Convergence.NEVER_CERTAIN


# -- Wasserstein ---------------------------------------------------------------------


def test_w1_examples():
    a = np.random.default_rng(13).normal(size=10)
    assert wasserstein_1d(a, a) == 0.0
    assert wasserstein_1d([0, 0, 0], [1, 1, 1]) == 1.0


def test_w1_unsorted_input():
    assert wasserstein_1d([3.0, 1.0, 2.0], [0.0, 2.0, 1.0]) == pytest.approx(1.0)


def test_w1_brute_force():
    rng = np.random.default_rng(14)
    for m in range(1, 9):
        a, b = rng.normal(size=m), rng.normal(size=m) * 2
        assert wasserstein_1d(a, b) == pytest.approx(w1_bruteforce(a, b), abs=1e-12)


def test_w1_assignment_oracle():
    rng = np.random.default_rng(15)
    a, b = rng.exponential(size=300), rng.normal(size=300)
    assert wasserstein_1d(a, b) == pytest.approx(w1_assignment(a, b), abs=1e-12)


def test_w1_shape_errors():
    with pytest.raises(ShapeError):
        wasserstein_1d([1.0, 2.0], [1.0])
    with pytest.raises(ShapeError):
        wasserstein_1d([], [])


@settings(max_examples=60)
@given(st.lists(st.floats(-100, 100), min_size=5, max_size=5), st.lists(st.floats(-100, 100), min_size=5, max_size=5), st.lists(st.floats(-100, 100), min_size=5, max_size=5))
def test_w1_metric_axioms(a, b, c):
    ab, ba = wasserstein_1d(a, b), wasserstein_1d(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-12


def test_wasserstein_curve_bounded_by_coupling():
    eps = 0.1
    pb = Problem(ContinuousUniform(eps - 0.5, 0.5 - eps, IntervalProjector), Box([-eps], [eps]))
    ens = run_ensemble(pb, UniformBox((-2.0,), (2.0,)), 30, 2000, base_seed=16, keep_points=True)
    w = wasserstein_curve(ens)
    lc = limit_distance_curve(ens)
    assert w[-1] == 0.0
    assert np.all(w <= lc + 1e-12)


def test_wasserstein_curve_one_dimensional_only():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 3, 10, base_seed=17, keep_points=True)
    with pytest.raises(ShapeError):
        wasserstein_curve(ens)


# -- limit proxy ------------------------------------------------------------------------


def test_limit_curve_lines():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 200, 2000, base_seed=18, keep_points=True)
    lc = limit_distance_curve(ens, 200)
    md = ens.mean_dist
    assert np.all(lc[:151] <= 2 * md[:151] + 1e-6)


def test_limit_curve_zero_when_started_in_c():
    ens = run_ensemble(lines(), Dirac((0.0, 0.0)), 5, 10, base_seed=19, keep_points=True)
    assert np.all(limit_distance_curve(ens) == 0)


def test_limit_curve_affine_tracks_projection():
    U = np.array([[1.0, 2.0, 2.0], [2.0, -1.0, 1.0]])
    fam = FiniteDiscrete([AffineHyperplaneProjector(tuple(U[0]), 3.0), AffineHyperplaneProjector(tuple(U[1]), 1.0)], [0.5, 0.5])
    C = AffineSubspace([1.0, 1.0, 0.0], [[4.0, 3.0, -5.0]])
    ens = run_ensemble(Problem(fam, C), UniformBox((-3.0,) * 3, (3.0,) * 3), 300, 200, base_seed=20, keep_points=True)
    lc = limit_distance_curve(ens)
    # X_K is P_C X_0, so |X_0 - X_K| = dist(X_0, C)
    assert lc[0] == pytest.approx(ens.mean_dist[0], rel=1e-9)
    assert np.all(np.diff(lc) <= 1e-12)


def test_limit_curve_needs_points():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 3, 10, base_seed=21)
    with pytest.raises(ConfigError):
        limit_distance_curve(ens)


@pytest.mark.parametrize("seed", range(5))
def test_projector_mean_dist_nonincreasing(seed):
    pb = Problem(disk_family(), Ball((0.0, 0.0), 0.5))
    ens = run_ensemble(pb, UniformBox((-3.0, -3.0), (3.0, 3.0)), 30, 500, base_seed=seed)
    assert np.all(np.diff(ens.mean_dist) <= 1e-9)
