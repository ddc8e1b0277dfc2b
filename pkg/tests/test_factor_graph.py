import numpy as np
import pytest

from oracle import nls_oracle, pose_gap, random_cov, random_graph, random_pose
from vtslam.factor_graph import (
    BetweenFactor,
    FactorGraph,
    GraphError,
    PriorFactor,
    between_jacobians,
    between_residual,
    incremental_extend,
    solve,
)
from vtslam.geometry import Pose, compose, exp, pose_error
from vtslam.odometry import tactile_covariance, vision_covariance

I6 = np.eye(6)


def chain(measurements, anchor=Pose.identity()):
    out = [anchor]
    for m in measurements:
        out.append(out[-1] @ m)
    return out


def test_add_variable_indices_and_values():
    g = FactorGraph()
    p = Pose.from_translation([1, 2, 3])
    assert g.add_variable(p) == 0 and g.add_variable(Pose.identity()) == 1
    assert g.initial[0] is p


def test_add_factor_validation():
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_variable(Pose.identity())
    g.add_factor(BetweenFactor(0, 1, Pose.identity(), I6))
    with pytest.raises(GraphError):
        g.add_factor(BetweenFactor(0, 5, Pose.identity(), I6))
    with pytest.raises(GraphError):
        g.add_factor(BetweenFactor(1, 1, Pose.identity(), I6))
    bad = np.diag([1, 1, 1, 1, 1, -1.0])
    with pytest.raises(GraphError, match="positive semi-definite"):
        g.add_factor(BetweenFactor(0, 1, Pose.identity(), bad))
    with pytest.raises(GraphError, match="singular"):
        g.add_factor(BetweenFactor(0, 1, Pose.identity(), np.zeros((6, 6))))
    with pytest.raises(GraphError):
        g.add_factor(BetweenFactor(0, 1, Pose.identity(), np.eye(5)))
    g.add_factor(PriorFactor(0, Pose.identity()))
    with pytest.raises(GraphError, match="pinned"):
        g.add_factor(PriorFactor(0, Pose.from_translation([1, 0, 0])))


def test_prior_only_is_exact():
    X = Pose.from_rotvec([0.1, 0.2, 0.3], [4, 5, 6])
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, X))
    res = solve(g)
    assert res.final_cost == 0.0 and res.converged
    assert np.array_equal(res.poses[0].q, X.q) and np.array_equal(res.poses[0].t, X.t)


def test_consistent_between_is_reproduced():
    m = Pose.from_rotvec([0.0, 0.3, -0.2], [2, -1, 0.5])
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_variable(Pose.from_translation([5, 5, 5]))
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, m, I6))
    res = solve(g)
    assert res.final_cost < 1e-20
    assert res.poses[1].isclose(m, 1e-10)


def test_under_constrained_graph_is_rejected():
    g = FactorGraph()
    for _ in range(3):
        g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, Pose.identity(), I6))
    with pytest.raises(GraphError, match=r"variables \[2\]"):
        solve(g)
    with pytest.raises(GraphError):
        solve(FactorGraph())


def test_jacobians_by_finite_differences():
    rng = np.random.default_rng(4)
    pi, pj = random_pose(rng), random_pose(rng)
    f = BetweenFactor(0, 1, random_pose(rng), I6)
    r = between_residual(f, pi, pj)
    Ji, Jj = between_jacobians(r, pi, pj)
    eps = 1e-6
    for k in range(6):
        d = np.zeros(6)
        d[k] = eps
        fi = (between_residual(f, pi @ exp(d), pj) - between_residual(f, pi @ exp(-d), pj)) / (2 * eps)
        fj = (between_residual(f, pi, pj @ exp(d)) - between_residual(f, pi, pj @ exp(-d))) / (2 * eps)
        np.testing.assert_allclose(Ji[:, k], fi, atol=1e-6)
        np.testing.assert_allclose(Jj[:, k], fj, atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_matches_generic_least_squares(seed):
    g, _ = random_graph(np.random.default_rng(seed))
    res = solve(g)
    assert res.converged and res.final_cost <= res.initial_cost
    for p, ref in zip(res.poses, nls_oracle(g)):
        dt, dr = pose_gap(p, ref)
        assert dt < 1e-6 and dr < 1e-6


def test_three_pose_loop_with_conflict():
    # chain says 0 -> 1 -> 2 is two unit steps, the loop closure says 2.3
    step = Pose.from_translation([1.0, 0, 0])
    g = FactorGraph()
    for _ in range(3):
        g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, step, I6))
    g.add_factor(BetweenFactor(1, 2, step, I6))
    g.add_factor(BetweenFactor(0, 2, Pose.from_translation([2.3, 0, 0]), I6))
    res = solve(g)
    # linear problem: the 0.3 mm conflict is split evenly over three equal edges
    assert res.poses[1].t[0] == pytest.approx(1.1, abs=1e-9)
    assert res.poses[2].t[0] == pytest.approx(2.2, abs=1e-9)
    for p, ref in zip(res.poses, nls_oracle(g)):
        assert max(pose_gap(p, ref)) < 1e-6


def test_gauge_equivariance():
    rng = np.random.default_rng(11)
    g, _ = random_graph(rng, 4, 6)
    G = random_pose(rng, 20.0, 2.0)
    moved = FactorGraph()
    for p in g.initial:
        moved.add_variable(G @ p)
    for f in g.factors:
        if isinstance(f, PriorFactor):
            moved.add_factor(PriorFactor(f.index, G @ f.target, f.covariance))
        else:
            moved.add_factor(f)
    a, b = solve(g), solve(moved)
    for p, q in zip(a.poses, b.poses):
        dt, dr = pose_error(G @ p, q)
        assert dt < 1e-9 and dr < 1e-9


def test_noise_free_chain_reaches_zero_cost():
    rng = np.random.default_rng(2)
    ms = [random_pose(rng, 6.0, 0.3) for _ in range(6)]
    truth = chain(ms)
    g = FactorGraph()
    for p in truth:
        g.add_variable(p @ random_pose(rng, 2.0, 0.2))
    g.add_factor(PriorFactor(0, truth[0]))
    for k, m in enumerate(ms):
        g.add_factor(BetweenFactor(k, k + 1, m, random_cov(rng)))
    g.add_factor(BetweenFactor(0, 6, truth[0].inverse() @ truth[6], random_cov(rng)))
    res = solve(g)
    assert res.final_cost < 1e-12
    for p, q in zip(res.poses, truth):
        assert p.isclose(q, 1e-8)


def test_iteration_limit_is_reported():
    g, _ = random_graph(np.random.default_rng(3), 4, 6)
    res = solve(g, max_iterations=1)
    assert not res.converged and res.iterations == 1 and res.reason == "iteration limit"


def test_inverse_variance_fusion():
    # two measurements of the same edge, small-angle regime
    m1 = Pose.from_rotvec([0, 0, 0.001], [1.0, 0.2, 0.0])
    m2 = Pose.from_rotvec([0, 0, 0.002], [1.1, 0.1, 0.05])
    s1, s2 = np.full(6, 0.04), np.full(6, 0.01)
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, m1, np.diag(s1)))
    g.add_factor(BetweenFactor(0, 1, m2, np.diag(s2)))
    p = solve(g).poses[1]
    w1, w2 = 1 / s1[0], 1 / s2[0]
    expected = (w1 * m1.t + w2 * m2.t) / (w1 + w2)
    np.testing.assert_allclose(p.t, expected, rtol=1e-3)
    assert p.rotvec()[2] == pytest.approx((w1 * 0.001 + w2 * 0.002) / (w1 + w2), rel=1e-3)


def test_inflated_axes_follow_vision():
    vis = Pose.from_rotvec([0.05, -0.04, 0.1], [3.0, 1.0, 0.8])
    tac = Pose.from_rotvec([0, 0, 0.12], [3.3, 0.8, 0.0])
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, vis, vision_covariance(1.5, 1.2)))
    g.add_factor(BetweenFactor(0, 1, tac, tactile_covariance(0.3, 0.5)))
    p = solve(g).poses[1]
    assert p.t[2] == pytest.approx(vis.t[2], rel=1e-3)
    np.testing.assert_allclose(p.rotvec()[:2], vis.rotvec()[:2], rtol=1e-3)


def test_incremental_matches_cold_solve():
    rng = np.random.default_rng(8)
    truth = chain([random_pose(rng, 5.0, 0.2) for _ in range(9)])
    g = FactorGraph()
    g.add_variable(truth[0])
    g.add_factor(PriorFactor(0, truth[0]))
    res = solve(g)
    for k in range(1, 10):
        m = truth[k - 1].inverse() @ truth[k] @ random_pose(rng, 0.3, 0.02)
        odo = [BetweenFactor(k - 1, k, m, random_cov(rng))]
        loops = []
        if k >= 3:
            meas = truth[k - 3].inverse() @ truth[k] @ random_pose(rng, 0.3, 0.02)
            loops = [BetweenFactor(k - 3, k, meas, random_cov(rng))]
        res = incremental_extend(g, res, odo, loops)
    cold = solve(g, initial=chain([f.measurement for f in g.factors if isinstance(f, BetweenFactor) and f.j == f.i + 1], truth[0]))
    for p, q in zip(res.poses, cold.poses):
        dt, dr = pose_error(p, q)
        assert dt < 1e-9 and dr < 1e-9


def test_incremental_on_consistent_chain_keeps_old_poses():
    m = Pose.from_translation([1, 0, 0])
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    r0 = solve(g)
    r1 = incremental_extend(g, r0, [BetweenFactor(0, 1, m, I6)])
    assert r1.poses[0].isclose(Pose.identity(), 0) and r1.poses[1].isclose(m, 1e-12)
    with pytest.raises(GraphError):
        incremental_extend(g, r1, [BetweenFactor(0, 5, m, I6)])


def test_dump_format():
    g = FactorGraph()
    g.add_variable(Pose.identity())
    g.add_variable(Pose.identity())
    g.add_factor(PriorFactor(0, Pose.identity()))
    g.add_factor(BetweenFactor(0, 1, Pose.from_translation([1, 0, 0]), np.diag([4.0] * 6)))
    lines = g.dump().splitlines()
    assert lines[0].split()[:2] == ["PRIOR", "0"] and lines[0].split()[-6:] == ["0.0"] * 6
    assert lines[1].split()[:3] == ["BETWEEN", "0", "1"] and lines[1].split()[-1] == "2.0"
