"""Shape reconstruction: anchor tactile point clouds at poses, merge, voxel down-sample."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PointCloud, Pose
from .tactile_map import DepthMap, to_point_cloud

__all__ = [
    "PointCloud",
    "VoxelGridConfig",
    "cloud_to_surface_error",
    "read_ply",
    "stitch",
    "voxel_downsample",
    "write_ply",
]


@dataclass(frozen=True)
class VoxelGridConfig:
    voxel_size: float = 0.5  # mm

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")


def voxel_downsample(cloud: PointCloud, cfg: VoxelGridConfig = VoxelGridConfig()) -> PointCloud:
    """Replace the points of each occupied voxel by their centroid.

    Voxels are ``floor(coord / voxel_size)`` cells anchored at the origin;
    output order follows the sorted voxel keys.
    """
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / cfg.voxel_size).astype(np.int64)
    keys -= keys.min(axis=0)
    # row-major packing keeps the lexicographic order of the voxel keys
    packed = np.ravel_multi_index(keys.T, tuple(keys.max(axis=0) + 1))
    _, inv, counts = np.unique(packed, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    sums = np.stack([np.bincount(inv, cloud.points[:, k], len(counts)) for k in range(3)], axis=1)
    return PointCloud(sums / counts[:, None])


def stitch(
    depth_maps: list[DepthMap],
    poses: list[Pose],
    cfg: VoxelGridConfig = VoxelGridConfig(),
    scale: float = 1.0,
) -> PointCloud:
    """Merge every map's contact points, placed at its pose, then down-sample."""
    if len(depth_maps) != len(poses):
        raise ValueError(f"{len(depth_maps)} depth maps but {len(poses)} poses")
    parts = [to_point_cloud(d, p, scale).points for d, p in zip(depth_maps, poses)]
    parts = [p for p in parts if len(p)]
    if not parts:
        return PointCloud.empty()
    return voxel_downsample(PointCloud(np.concatenate(parts)), cfg)


def cloud_to_surface_error(cloud: PointCloud, truth) -> tuple[float, float]:
    """(rms, median) distance in mm from each point to the object's surface.

    ``truth`` is anything with a ``surface_distance(points)`` method, such as
    a simulator object.  Returns ``(nan, nan)`` for an empty cloud.
    """
    if len(cloud) == 0:
        return float("nan"), float("nan")
    d = np.asarray(truth.surface_distance(cloud.points), dtype=float)
    return float(np.sqrt(np.mean(d**2))), float(np.median(d))


# --------------------------------------------------------------------------
# ASCII PLY


def write_ply(path, cloud: PointCloud) -> None:
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in cloud.points]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply(path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    for k, line in enumerate(lines):
        parts = line.split()
        if parts[:1] == ["format"] and parts[1:2] != ["ascii"]:
            raise ValueError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        if line.strip() == "end_header":
            start = k + 1
            break
    else:
        raise ValueError(f"{path}: missing end_header")
    if n is None:
        raise ValueError(f"{path}: no vertex element")
    rows = [ln.split()[:3] for ln in lines[start : start + n]]
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} vertices, found {len(rows)}")
    return PointCloud(np.array(rows, dtype=float).reshape(-1, 3))
