import math

import numpy as np
import pytest

from vtslam.geometry import pose_error
from vtslam.simulator import (
    Box,
    ContactError,
    Cylinder,
    Plane,
    SensorConfig,
    Sphere,
    SyntheticObject,
    Texture,
    TrajectoryConfig,
    bin_by_step_size,
    contact_pose,
    generate_trajectory,
    load_episode,
    parse_shape,
    render_depth,
    render_tactile,
    save_episode,
    step_bin,
)

SMALL = SensorConfig(40, 50, 0.1, 2.0)


def bare(shape):
    return SyntheticObject(shape, Texture(amplitude=0.0))


def test_plane_press_gives_uniform_depth():
    pose = contact_pose(Plane(), np.zeros(3), np.array([1.0, 0, 0]), 0.7, SMALL)
    np.testing.assert_allclose(render_depth(bare(Plane()), pose, SMALL), 0.7, atol=1e-12)


def test_sphere_press_matches_spherical_cap():
    R, ind = 20.0, 1.0
    shape = Sphere(R)
    pose = contact_pose(shape, shape.start_point(), np.array([1.0, 0, 0]), ind, SMALL)
    depth = render_depth(bare(shape), pose, SMALL)
    rows, cols = np.mgrid[0 : SMALL.height, 0 : SMALL.width]
    r2 = (cols * 0.1 - SMALL.center[0]) ** 2 + (rows * 0.1 - SMALL.center[1]) ** 2
    expected = np.clip(ind - (R - np.sqrt(R * R - r2)), 0.0, SMALL.max_indent)
    np.testing.assert_allclose(depth, expected, atol=1e-9)


def test_depth_is_clamped_to_max_indent():
    pose = contact_pose(Plane(), np.zeros(3), np.array([1.0, 0, 0]), 5.0, SMALL)
    assert render_depth(bare(Plane()), pose, SMALL).max() == pytest.approx(2.0)


def test_no_contact_raises():
    pose = contact_pose(Plane(), np.zeros(3), np.array([1.0, 0, 0]), -1.0, SMALL)
    with pytest.raises(ContactError):
        render_tactile(bare(Plane()), pose, SMALL)


def test_texture_is_bounded_and_seeded():
    pts = np.random.default_rng(0).uniform(-50, 50, size=(5000, 3))
    tex = Texture(0.3, 2.0, 3, seed=4)
    v = tex(pts)
    assert np.abs(v).max() <= 0.3
    assert v.std() > 0.03
    np.testing.assert_array_equal(v, Texture(0.3, 2.0, 3, seed=4)(pts))
    assert not np.array_equal(v, Texture(0.3, 2.0, 3, seed=5)(pts))


@pytest.mark.parametrize("spec", ["plane", "sphere:30", "box:40,40,40", "cylinder:25,80"])
def test_shapes_project_onto_their_surface(spec):
    shape = parse_shape(spec)
    rng = np.random.default_rng(1)
    for p in rng.uniform(-20, 20, size=(20, 3)):
        q = shape.project(p)
        assert abs(float(shape.sdf(q[None])[0])) < 1e-9
        n = shape.normal(q[None])[0] if np.ndim(shape.normal(q[None])) == 2 else shape.normal(q)
        assert np.linalg.norm(n) == pytest.approx(1.0)


def test_parse_shape_round_trip_and_errors():
    for s in (Plane(), Sphere(12.5), Box((10.0, 20.0, 30.0)), Cylinder(8.0, 40.0)):
        assert parse_shape(s.spec()) == s
    with pytest.raises(ValueError):
        parse_shape("torus:3,1")


def test_raycast_against_plane_and_sphere():
    obj = bare(Sphere(10.0))
    o = np.array([[0.0, 0.0, 20.0], [0.0, 0.0, -20.0], [50.0, 0.0, 20.0]])
    s = obj.raycast(o, np.array([0.0, 0.0, -1.0]))
    assert s[0] == pytest.approx(10.0) and np.isinf(s[2])
    # a ray starting below the sphere, pointing away from it
    assert np.isinf(s[1])


def test_trajectory_is_deterministic_and_in_contact():
    cfg = TrajectoryConfig(n_steps=14, episode_len=7, seed=3)
    obj = SyntheticObject(Sphere(40.0), Texture(0.3, 2.0, 3, seed=3))
    a = generate_trajectory(cfg, obj, SMALL)
    b = generate_trajectory(cfg, obj, SMALL)
    assert len(a) == 14 and [r for r in a.segments()] == [range(0, 7), range(7, 14)]
    for p, q in zip(a.poses, b.poses):
        assert np.array_equal(p.q, q.q) and np.array_equal(p.t, q.t)
    for d in a.depths:
        assert d.contact_mask.mean() > 0.2


def test_revisits_stay_within_radius_of_an_earlier_press():
    cfg = TrajectoryConfig(n_steps=21, episode_len=7, revisit_fraction=1.0, seed=2)
    ep = generate_trajectory(cfg, bare(Sphere(60.0)), SMALL, render=False)
    revisits = [(t, j) for t, j in enumerate(ep.revisit_of) if j is not None]
    assert revisits
    for t, j in revisits:
        assert t - j >= cfg.revisit_gap and j // 7 == t // 7
        assert pose_error(ep.poses[t], ep.poses[j])[0] < 1.0 + 2 * math.hypot(*SMALL.center[:2]) * math.radians(2)


def test_no_revisits_means_steps_are_spread_out():
    cfg = TrajectoryConfig(n_steps=7, episode_len=7, revisit_fraction=0.0, seed=5)
    ep = generate_trajectory(cfg, bare(Sphere(60.0)), SMALL, render=False)
    assert all(r is None for r in ep.revisit_of)
    for t in range(len(ep)):
        for j in range(t - 1):
            assert pose_error(ep.poses[t], ep.poses[j])[0] > 2.0


def test_too_small_object_is_rejected():
    with pytest.raises(ContactError):
        generate_trajectory(TrajectoryConfig(n_steps=3, episode_len=3), bare(Box((2.0, 2.0, 2.0))), SMALL)


@pytest.mark.parametrize("kw", [dict(n_steps=10, episode_len=7), dict(revisit_fraction=1.5), dict(step_min=0.0)])
def test_trajectory_config_validation(kw):
    with pytest.raises(ValueError):
        TrajectoryConfig(**kw)


def test_step_bins_edges():
    assert [step_bin(x) for x in (0.0, 4.999, 5.0, 9.999, 10.0, 30.0)] == [0, 0, 1, 1, 2, 2]


def test_bin_by_step_size_partitions_pairs():
    ep = generate_trajectory(TrajectoryConfig(n_steps=14, seed=1), bare(Sphere(60.0)), SMALL, render=False)
    groups = bin_by_step_size(ep)
    assert sorted(sum(groups, [])) == list(range(1, 14))


def test_episode_round_trip(tmp_path):
    cfg = TrajectoryConfig(n_steps=7, seed=9, revisit_fraction=0.5)
    ep = generate_trajectory(cfg, SyntheticObject(Sphere(40.0), Texture(seed=9)), SMALL)
    save_episode(ep, tmp_path / "ep")
    back = load_episode(tmp_path / "ep")
    assert back.episode_id == ep.episode_id and back.config == ep.config and back.sensor == ep.sensor
    assert back.revisit_of == ep.revisit_of
    assert back.obj.shape == ep.obj.shape and back.obj.texture.seed == 9
    for a, b in zip(ep.poses, back.poses):
        assert np.array_equal(a.q, b.q) and np.array_equal(a.t, b.t)
    for a, b in zip(ep.depths, back.depths):
        np.testing.assert_allclose(a.depth, b.depth, atol=1e-6)
    np.testing.assert_array_equal(ep.frames[3].descriptor, back.frames[3].descriptor)
