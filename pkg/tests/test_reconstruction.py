import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vtslam.geometry import PointCloud, Pose
from vtslam.reconstruction import (
    VoxelGridConfig,
    cloud_to_surface_error,
    read_ply,
    stitch,
    voxel_downsample,
    write_ply,
)
from vtslam.simulator import SensorConfig, Sphere, SyntheticObject, Texture, contact_pose, render_tactile
from vtslam.tactile_map import DepthMap, to_point_cloud

SMOOTH = SyntheticObject(Sphere(30.0), Texture(0.0))
SENSOR = SensorConfig(40, 50, 0.1, 2.0)


def voxel_oracle(points, size):
    """Dictionary grouping by floor cell, centroids in sorted key order."""
    cells = {}
    for p in points:
        cells.setdefault(tuple(math.floor(c / size) for c in p), []).append(p)
    return np.array([np.mean(cells[k], axis=0) for k in sorted(cells)]).reshape(-1, 3)


def presses(n=4):
    out = []
    for k in range(n):
        a = 0.15 * k
        point = 30.0 * np.array([math.sin(a), 0.0, math.cos(a)])
        pose = contact_pose(Sphere(30.0), point, np.array([0.0, 1.0, 0.0]), 1.0, SENSOR)
        out.append((render_tactile(SMOOTH, pose, SENSOR)[1], pose))
    return out


def test_voxel_centroid_example():
    out = voxel_downsample(PointCloud([[0.1, 0, 0], [0.2, 0, 0]]), VoxelGridConfig(0.5))
    np.testing.assert_allclose(out.points, [[0.15, 0, 0]])


def test_sparse_grid_keeps_every_point():
    g = np.stack(np.meshgrid(*[np.arange(4) * 0.9] * 3, indexing="ij"), -1).reshape(-1, 3)
    assert len(voxel_downsample(PointCloud(g + 0.01), VoxelGridConfig(0.5))) == len(g)


def test_empty_cloud():
    assert len(voxel_downsample(PointCloud.empty())) == 0
    assert len(stitch([], [])) == 0


def test_voxel_config_validation():
    with pytest.raises(ValueError):
        VoxelGridConfig(0.0)


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-5, 5)), st.sampled_from([0.3, 0.5, 1.0]))
def test_voxel_matches_oracle(pts, size):
    out = voxel_downsample(PointCloud(pts), VoxelGridConfig(size))
    np.testing.assert_allclose(out.points, voxel_oracle(pts, size), atol=1e-12)
    assert len(out) <= len(pts)
    # every centroid stays inside the bounds of its voxel
    cells = np.floor(out.points / size)
    assert np.all(out.points >= cells * size - 1e-9) and np.all(out.points <= (cells + 1) * size + 1e-9)


def test_stitch_length_mismatch():
    d, p = presses(1)[0]
    with pytest.raises(ValueError, match="poses"):
        stitch([d], [p, p])


def test_stitch_single_map_is_downsampled_cloud():
    d, p = presses(1)[0]
    expected = voxel_downsample(to_point_cloud(d, p))
    np.testing.assert_array_equal(stitch([d], [p]).points, expected.points)


def test_stitch_duplicate_patch_is_idempotent():
    d, p = presses(1)[0]
    np.testing.assert_allclose(stitch([d, d], [p, p]).points, stitch([d], [p]).points, atol=1e-12)


def test_surface_error_on_and_off_surface():
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((500, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rms, med = cloud_to_surface_error(PointCloud(30.0 * dirs), SMOOTH)
    assert rms < 1e-12 and med < 1e-12
    rms, med = cloud_to_surface_error(PointCloud(31.0 * dirs), SMOOTH)
    assert med == pytest.approx(1.0) and rms == pytest.approx(1.0)
    assert all(math.isnan(x) for x in cloud_to_surface_error(PointCloud.empty(), SMOOTH))


def test_ground_truth_poses_reconstruct_within_a_voxel():
    pairs = presses()
    cloud = stitch([d for d, _ in pairs], [p for _, p in pairs])
    assert cloud_to_surface_error(cloud, SMOOTH)[1] < 0.5


def test_rigid_equivariance():
    pairs = presses()
    G = Pose.from_rotvec([0.3, -0.2, 0.5], [10.0, -4.0, 7.0])
    moved = stitch([d for d, _ in pairs], [G @ p for _, p in pairs])

    class Moved:
        def surface_distance(self, pts):
            return SMOOTH.surface_distance(G.inverse().act(pts))

    a = cloud_to_surface_error(stitch([d for d, _ in pairs], [p for _, p in pairs]), SMOOTH)
    b = cloud_to_surface_error(moved, Moved())
    assert b[1] == pytest.approx(a[1], abs=0.05)


def test_scale_applies_before_the_anchor():
    d = DepthMap(np.full((3, 3), 1.0), 1.0)
    pts = stitch([d], [Pose.from_translation([100, 0, 0])], VoxelGridConfig(0.01), scale=2.0).points
    assert pts[:, 0].min() == pytest.approx(100.0) and pts[:, 0].max() == pytest.approx(104.0)
    assert np.allclose(pts[:, 2], 2.0)


def test_ply_round_trip(tmp_path):
    pts = np.random.default_rng(1).uniform(-50, 50, (20, 3))
    write_ply(tmp_path / "c.ply", PointCloud(pts))
    text = (tmp_path / "c.ply").read_text().splitlines()
    assert text[:3] == ["ply", "format ascii 1.0", "element vertex 20"]
    np.testing.assert_allclose(read_ply(tmp_path / "c.ply").points, pts, atol=1e-6)
    write_ply(tmp_path / "e.ply", PointCloud.empty())
    assert len(read_ply(tmp_path / "e.ply")) == 0


def test_ply_rejects_bad_files(tmp_path):
    (tmp_path / "x.ply").write_text("hello\n")
    with pytest.raises(ValueError):
        read_ply(tmp_path / "x.ply")
    (tmp_path / "y.ply").write_text("ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n")
    with pytest.raises(ValueError, match="ASCII"):
        read_ply(tmp_path / "y.ply")
    (tmp_path / "z.ply").write_text("ply\nformat ascii 1.0\nelement vertex 3\nend_header\n1 2 3\n")
    with pytest.raises(ValueError, match="expected 3"):
        read_ply(tmp_path / "z.ply")
