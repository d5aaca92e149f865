import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import halfspace_feas_law, projection_onto_intersection
from rfi.chain import Problem, hitting_stats, rfi_step, run_ensemble, run_trajectory
from rfi.errors import ConfigError
from rfi.operators import (
    AffineHyperplaneProjector,
    AffineSubspace,
    Ball,
    Box,
    DiskOnCircle,
    HalfspaceProjector,
    LineProjector,
    PointProjector,
    Rotation,
    SinglePoint,
)
from rfi.sampling import ContinuousUniform, Dirac, FiniteDiscrete, Gaussian, RngStream, UniformBox

H1 = HalfspaceProjector((-1.0, 0.0), 0.0)  # R_+ x R
H2 = HalfspaceProjector((0.0, -1.0), 0.0)  # R x R_+
QUADRANT = Box([0.0, 0.0], [math.inf, math.inf])


def halfspaces(p=0.3):
    return Problem(FiniteDiscrete([H1, H2], [p, 1 - p], ids=[1, 2]), QUADRANT)


def lines(beta=math.pi / 2):
    return Problem(ContinuousUniform(0, beta, LineProjector), SinglePoint([0.0, 0.0]))


def rotation(phi=math.pi / 2):
    return Problem(FiniteDiscrete([Rotation(phi)], [1.0]), SinglePoint([0.0, 0.0]))


def disks():
    return Problem(ContinuousUniform(0, 2 * math.pi, DiskOnCircle(0.5)), Ball((0.0, 0.0), 0.5))


def two_planes():
    U = np.array([[1.0, 2.0, 2.0], [2.0, -1.0, 1.0]])
    b = np.array([3.0, 1.0])
    fam = FiniteDiscrete([AffineHyperplaneProjector(tuple(U[0]), b[0]), AffineHyperplaneProjector(tuple(U[1]), b[1])], [0.5, 0.5])
    return Problem(fam, AffineSubspace([1.0, 1.0, 0.0], [[4.0, 3.0, -5.0]])), U, b


# -- problem ---------------------------------------------------------------------


def test_alpha_bar_range():
    with pytest.raises(ConfigError):
        Problem(FiniteDiscrete([H1], [1.0]), QUADRANT, alpha_bar=1.0)


def test_alpha_bar_below_operator_constant():
    with pytest.raises(ConfigError):
        Problem(FiniteDiscrete([H1], [1.0]), QUADRANT, alpha_bar=0.3)


def test_all_projectors_flag():
    assert halfspaces().all_projectors
    assert not rotation().all_projectors


# -- single steps ------------------------------------------------------------------


def test_step_halfspace_first_index():
    # u < 0.3 selects xi = 1
    pb = halfspaces()
    x = pb.step_many(np.array([[-1.0, -1.0]]), np.array([0.1]))[0]
    assert x.tolist() == [0.0, -1.0]


def test_step_from_feasible_point_is_fixed():
    x = np.array([2.0, 3.0])
    rng = RngStream(1)
    for _ in range(10):
        assert np.array_equal(rfi_step(halfspaces(), x, rng), x)


def test_two_family_step_lands_on_s():
    pb = Problem(
        ContinuousUniform(0, 2 * math.pi, DiskOnCircle(0.5)),
        SinglePoint([0.0, 10.0]),
        second_family=FiniteDiscrete([PointProjector((0.0, 10.0))], [1.0]),
    )
    rng = RngStream(2)
    for x in np.random.default_rng(0).normal(size=(20, 2)) * 5:
        assert rfi_step(pb, x, rng).tolist() == [0.0, 10.0]


def test_one_draw_per_step():
    pb = halfspaces()
    a, b = RngStream(3), RngStream(3)
    x = np.array([-1.0, -1.0])
    for _ in range(4):
        x = rfi_step(pb, x, a)
    b.uniform(4)
    assert a.uniform() == b.uniform()


# -- trajectories --------------------------------------------------------------------


def test_rotation_cycle():
    tr = run_trajectory(rotation(), [1.0, 0.0], 4, RngStream(4))
    want = [[1, 0], [0, 1], [-1, 0], [0, -1], [1, 0]]
    np.testing.assert_allclose(tr.points, want, atol=1e-15)
    np.testing.assert_allclose(tr.dists, 1.0, atol=1e-15)
    assert tr.hit is None


def test_start_in_c_constant():
    tr = run_trajectory(halfspaces(), [1.0, 2.0], 5, RngStream(5))
    assert np.all(tr.points == [1.0, 2.0])
    assert tr.hit == 0


def test_affine_limit_is_projection():
    pb, U, b = two_planes()
    x0 = np.array([3.0, -2.0, 5.0])
    tr = run_trajectory(pb, x0, 500, RngStream(6))
    assert np.linalg.norm(tr.points[-1] - projection_onto_intersection(U, b, x0)) <= 1e-6


def test_affine_projection_invariant_along_path():
    pb, U, b = two_planes()
    x0 = np.array([-1.0, 4.0, 2.0])
    tr = run_trajectory(pb, x0, 30, RngStream(7))
    p0 = projection_onto_intersection(U, b, x0)
    for x in tr.points:
        np.testing.assert_allclose(projection_onto_intersection(U, b, x), p0, atol=1e-12)


def test_dists_recomputed_exactly():
    pb = disks()
    tr = run_trajectory(pb, [2.0, 1.0], 20, RngStream(8))
    assert tr.dists.tolist() == [pb.feasible_set.dist(p) for p in tr.points]


def test_k_must_be_positive():
    with pytest.raises(ConfigError):
        run_trajectory(halfspaces(), [0.0, 0.0], 0, RngStream(0))


# -- ensembles -----------------------------------------------------------------------


def test_halfspace_feasibility_law():
    M = 100_000
    ens = run_ensemble(halfspaces(), Dirac((-1.0, -1.0)), 10, M, base_seed=11)
    for n in range(1, 11):
        p = 1 - 0.3**n - 0.7**n
        assert abs(ens.feas_frac[n] - p) <= 3 * math.sqrt(p * (1 - p) / M) + (1e-12 if p == 0 else 0)
    assert 1 - 0.3**2 - 0.7**2 == pytest.approx(0.42)


def test_halfspace_law_enumeration_oracle():
    for n in range(1, 9):
        assert halfspace_feas_law(0.3, n) == pytest.approx(1 - 0.3**n - 0.7**n, abs=1e-14)


def test_deterministic_family_identical_trajectories():
    ens = run_ensemble(rotation(1.0), Dirac((1.0, 2.0)), 6, 50, base_seed=0, keep_points=True)
    assert np.all(ens.points == ens.points[0])


def test_lines_ratio_bound():
    ens = run_ensemble(lines(), Dirac((1.0, 1.0)), 30, 10_000, base_seed=12)
    md = ens.mean_dist
    ok = md[:-1] > 1e-8
    assert np.all(md[1:][ok] / md[:-1][ok] <= 0.9535 + 0.01)


def test_mean_and_feas_frac_definitions():
    ens = run_ensemble(disks(), UniformBox((-3.0, -3.0), (3.0, 3.0)), 8, 300, base_seed=13)
    np.testing.assert_array_equal(ens.mean_dist, ens.dists.mean(axis=0))
    assert np.all((ens.feas_frac >= 0) & (ens.feas_frac <= 1))


def test_ensemble_matches_single_trajectories():
    pb = halfspaces()
    ens = run_ensemble(pb, Dirac((-1.0, -1.0)), 7, 5, base_seed=14, keep_points=True)
    for m in range(5):
        tr = run_trajectory(pb, [-1.0, -1.0], 7, RngStream(14, m))
        assert tr.points.tobytes() == ens.points[m].tobytes()


def test_two_family_ensemble_matches_single_trajectories():
    pb = Problem(
        ContinuousUniform(0, 2 * math.pi, DiskOnCircle(0.5)),
        SinglePoint([0.0, 10.0]),
        second_family=FiniteDiscrete([PointProjector((0.0, 10.0))], [1.0]),
    )
    ens = run_ensemble(pb, Dirac((1.0, 1.0)), 3, 4, base_seed=15, keep_points=True)
    for m in range(4):
        tr = run_trajectory(pb, [1.0, 1.0], 3, RngStream(15, m))
        assert tr.points.tobytes() == ens.points[m].tobytes()


def test_ensemble_reproducible_across_workers():
    pb = disks()
    mu = Gaussian((0.0, 0.0), 3.0)
    a = run_ensemble(pb, mu, 12, 5000, base_seed=16, keep_points=True, workers=1)
    b = run_ensemble(pb, mu, 12, 5000, base_seed=16, keep_points=True, workers=8)
    c = run_ensemble(pb, mu, 12, 5000, base_seed=16, keep_points=True, workers=3)
    assert a.points.tobytes() == b.points.tobytes() == c.points.tobytes()
    assert a.dists.tobytes() == b.dists.tobytes()


def test_ensemble_prefix_stable():
    # trajectory m depends only on (seed, m): a larger ensemble extends a smaller one
    pb = disks()
    mu = UniformBox((-2.0, -2.0), (2.0, 2.0))
    small = run_ensemble(pb, mu, 5, 100, base_seed=17)
    big = run_ensemble(pb, mu, 5, 3000, base_seed=17)
    assert small.dists.tobytes() == big.dists[:100].tobytes()


def test_trajectory_records():
    ens = run_ensemble(halfspaces(), Dirac((-1.0, -1.0)), 4, 3, base_seed=18)
    trs = ens.trajectories
    assert len(trs) == 3 and trs[1].stream_id == 1 and trs[1].points is None


# -- hitting ------------------------------------------------------------------------


def test_hitting_degenerate_law():
    # with P(xi=1) = 1 the feasible set is C_1
    ens = run_ensemble(
        Problem(FiniteDiscrete([H1, H2], [1.0, 0.0]), Box([0.0, -math.inf], [math.inf, math.inf])),
        Dirac((-1.0, -1.0)),
        5,
        1000,
        base_seed=19,
    )
    assert hitting_stats(ens).fraction_hit[1] == 1.0


def test_hitting_rotation_never():
    hs = hitting_stats(run_ensemble(rotation(), Dirac((1.0, 0.0)), 10, 100, base_seed=20))
    assert np.all(hs.fraction_hit == 0) and hs.n_hit == 0 and math.isnan(hs.mean_hitting_time)


def test_hitting_halfspaces_first_step_zero():
    hs = hitting_stats(run_ensemble(halfspaces(), Dirac((-1.0, -1.0)), 10, 10_000, base_seed=21))
    assert hs.fraction_hit[1] == 0.0
    assert hs.fraction_hit[10] > 0.95


# -- properties -----------------------------------------------------------------------


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.lists(st.floats(-20, 20), min_size=2, max_size=2))
def test_fejer_monotone(seed, x0):
    for pb in (disks(), lines(1.0), halfspaces()):
        tr = run_trajectory(pb, x0, 25, RngStream(seed))
        assert np.all(np.diff(tr.dists) <= 1e-9)


@settings(max_examples=25)
@given(st.integers(0, 2**32))
def test_once_hit_stays_hit(seed):
    ens = run_ensemble(disks(), UniformBox((-2.0, -2.0), (2.0, 2.0)), 15, 200, base_seed=seed)
    for m in range(ens.M):
        h = ens.hits[m]
        if h >= 0:
            assert np.all(ens.dists[m, h:] <= ens.tau)


@pytest.mark.parametrize("p", [0.3, 1.0])
def test_zero_one_step_law(p):
    fam = FiniteDiscrete([H1, H2], [p, 1 - p])
    C = QUADRANT if p < 1 else Box([0.0, -math.inf], [math.inf, math.inf])
    ff = run_ensemble(Problem(fam, C), Dirac((-1.0, -1.0)), 12, 5000, base_seed=22).feas_frac
    if ff[1] == 1.0:
        assert np.all(ff[1:] == 1.0)
    else:
        assert np.all(ff[1:] < 1.0)


def test_overflowing_distances_raise():
    from rfi.errors import NumericError

    with pytest.raises(NumericError):
        run_ensemble(rotation(), Dirac((1e308, 1e308)), 3, 2, base_seed=23)
