"""Tactile depth maps: gradient integration, planar warping, point clouds.

Pixel ``(row, col)`` sits at sensor-frame coordinates
``(col * pitch, row * pitch)``; depth is the height of the contact surface
above the sensor plane, in millimeters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import fft, ndimage
from scipy.sparse.linalg import splu

from .geometry import PlanarPose, PointCloud, Pose

CONTACT_THRESHOLD = 0.05  # mm


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GradientMap:
    """Surface slopes ``gx = d depth / dx`` (along columns) and ``gy`` (along rows)."""

    gx: np.ndarray
    gy: np.ndarray
    pitch: float

    def __post_init__(self):
        gx = np.array(self.gx, dtype=float)
        gy = np.array(self.gy, dtype=float)
        if gx.ndim != 2 or gx.shape != gy.shape:
            raise ValueError(f"gradient planes must be equal 2-D grids, got {gx.shape} and {gy.shape}")
        if not self.pitch > 0:
            raise ValueError("pixel pitch must be positive")
        object.__setattr__(self, "gx", _readonly(gx))
        object.__setattr__(self, "gy", _readonly(gy))
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def shape(self):
        return self.gx.shape


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Contact depth in mm.  Pixels at or below the contact threshold are stored as 0."""

    depth: np.ndarray
    pitch: float

    def __post_init__(self):
        d = np.array(self.depth, dtype=float)
        if d.ndim != 2:
            raise ValueError("depth must be a 2-D grid")
        if not np.all(np.isfinite(d)):
            raise ValueError("depth contains non-finite values")
        if not self.pitch > 0:
            raise ValueError("pixel pitch must be positive")
        d[d <= CONTACT_THRESHOLD] = 0.0
        object.__setattr__(self, "depth", _readonly(d))
        object.__setattr__(self, "pitch", float(self.pitch))

    @classmethod
    def zeros(cls, shape, pitch: float) -> "DepthMap":
        return cls(np.zeros(shape), pitch)

    @property
    def shape(self):
        return self.depth.shape

    @property
    def contact_mask(self) -> np.ndarray:
        return self.depth > CONTACT_THRESHOLD

    @property
    def extent(self) -> tuple[float, float]:
        """Physical (width, height) in mm."""
        h, w = self.shape
        return w * self.pitch, h * self.pitch

    def pixel_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Sensor-frame x and y of every pixel."""
        h, w = self.shape
        rows, cols = np.mgrid[0:h, 0:w]
        return cols * self.pitch, rows * self.pitch


def finite_difference(depth: np.ndarray, pitch: float) -> GradientMap:
    """Central-difference slopes of a height field."""
    gy, gx = np.gradient(np.asarray(depth, dtype=float), pitch)
    return GradientMap(gx, gy, pitch)


# --------------------------------------------------------------------------
# Poisson integration


@lru_cache(maxsize=8)
def _laplacian_factor(h: int, w: int):
    n_r, n_c = h - 2, w - 2
    lap_r = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n_r, n_r))
    lap_c = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n_c, n_c))
    L = sp.kronsum(lap_c, lap_r, format="csc")
    return splu(L)


@lru_cache(maxsize=8)
def _dst_eigenvalues(h: int, w: int) -> np.ndarray:
    n_r, n_c = h - 2, w - 2
    er = 2 - 2 * np.cos(np.pi * np.arange(1, n_r + 1) / (n_r + 1))
    ec = 2 - 2 * np.cos(np.pi * np.arange(1, n_c + 1) / (n_c + 1))
    return er[:, None] + ec[None, :]


def _poisson_rhs(g: GradientMap) -> np.ndarray:
    # target height differences on grid edges, slopes averaged onto the edge
    bx = 0.5 * g.pitch * (g.gx[:, :-1] + g.gx[:, 1:])
    by = 0.5 * g.pitch * (g.gy[:-1, :] + g.gy[1:, :])
    # normal equations at interior pixels: -div of the edge field
    return (bx[1:-1, :-1] - bx[1:-1, 1:]) + (by[:-1, 1:-1] - by[1:, 1:-1])


def poisson_heights(g: GradientMap, method: str = "sparse") -> np.ndarray:
    """Least-squares height field for ``g`` with a zero outer ring (raw, unclipped)."""
    h, w = g.shape
    if h < 4 or w < 4:
        raise ValueError(f"gradient map must be at least 4x4, got {h}x{w}")
    if not (np.all(np.isfinite(g.gx)) and np.all(np.isfinite(g.gy))):
        bad = int(np.sum(~np.isfinite(g.gx)) + np.sum(~np.isfinite(g.gy)))
        raise ValueError(f"gradient map has {bad} non-finite values")
    f = _poisson_rhs(g)
    if method == "sparse":
        # row-major interior ordering matches kronsum(lap_c, lap_r)
        inner = _laplacian_factor(h, w).solve(f.ravel()).reshape(f.shape)
    elif method == "dst":
        inner = fft.idstn(fft.dstn(f, type=1) / _dst_eigenvalues(h, w), type=1)
    else:
        raise ValueError(f"unknown Poisson method {method!r}")
    out = np.zeros((h, w))
    out[1:-1, 1:-1] = inner
    return out


def poisson_reconstruct(g: GradientMap, method: str = "sparse") -> DepthMap:
    """Integrate a gradient map into a depth map.

    Minimizes the squared mismatch between neighbouring-pixel height
    differences and the edge-averaged slopes, with the outermost pixel ring
    held at zero depth.  ``method="sparse"`` uses a cached sparse LU
    factorization of the 5-point Laplacian; ``method="dst"`` diagonalizes the
    same operator with a type-I sine transform.
    """
    heights = poisson_heights(g, method)
    return DepthMap(np.maximum(heights, 0.0), g.pitch)


# --------------------------------------------------------------------------
# warping and conversion


def warp_array(a: np.ndarray, p: PlanarPose, pitch: float, stride: int = 1) -> np.ndarray:
    """Move a plain grid with pixel ``pitch`` by ``p``; see ``warp``.

    With ``stride`` > 1 only every ``stride``-th output row and column is
    computed, matching ``warp_array(a, p, pitch)[::stride, ::stride]`` up to
    rounding.
    """
    q = p.inverse()
    R = q.rotation()
    # same mapping in (row, col) index space
    matrix = np.array([[R[1, 1], R[1, 0]], [R[0, 1], R[0, 0]]])
    offset = np.array([q.y, q.x]) / pitch
    shape = tuple(-(-n // stride) for n in a.shape)
    return ndimage.affine_transform(a, matrix * stride, offset, shape, order=1, mode="constant", cval=0.0)


def warp(d: DepthMap, p: PlanarPose) -> DepthMap:
    """Move the map content by ``p`` (bilinear inverse mapping).

    Output pixel ``u`` samples the source at ``p^-1 u``; samples falling
    outside the source are zero.
    """
    if p.x == 0.0 and p.y == 0.0 and p.yaw == 0.0:
        return d
    return DepthMap(warp_array(d.depth, p, d.pitch), d.pitch)


def to_point_cloud(d: DepthMap, anchor: Pose, scale: float = 1.0) -> PointCloud:
    """One point per contact pixel at ``(x, y, depth) * scale``, mapped through ``anchor``.

    ``scale`` converts sensor units to millimeters for uncalibrated maps.
    """
    mask = d.contact_mask
    rows, cols = np.nonzero(mask)
    pts = np.stack([cols * d.pitch, rows * d.pitch, d.depth[rows, cols]], axis=1) * scale
    if len(pts) == 0:
        return PointCloud.empty()
    return PointCloud(anchor.act(pts))


def ncc_similarity(a: DepthMap, b: DepthMap) -> float:
    """Zero-normalized cross-correlation over the union contact mask, mapped to [0, 1].

    Returns 0 when the union mask is empty or either map is constant on it.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mask = a.contact_mask | b.contact_mask
    if not mask.any():
        return 0.0
    va = a.depth[mask] - a.depth[mask].mean()
    vb = b.depth[mask] - b.depth[mask].mean()
    denom = np.sqrt(np.dot(va, va) * np.dot(vb, vb))
    if denom == 0.0:
        return 0.0
    r = float(np.dot(va, vb) / denom)
    return min(1.0, max(0.0, 0.5 * (r + 1.0)))


# --------------------------------------------------------------------------
# binary formats: TDM1 / TGM1


_HEADER = struct.Struct("<4sIIf")


def write_depth_map(path, d: DepthMap) -> None:
    h, w = d.shape
    data = _HEADER.pack(b"TDM1", h, w, d.pitch) + d.depth.astype("<f4").tobytes()
    Path(path).write_bytes(data)


def read_depth_map(path) -> DepthMap:
    raw = Path(path).read_bytes()
    magic, h, w, pitch = _HEADER.unpack_from(raw)
    if magic != b"TDM1":
        raise ValueError(f"{path}: bad magic {magic!r}")
    arr = np.frombuffer(raw, dtype="<f4", count=h * w, offset=_HEADER.size)
    return DepthMap(arr.reshape(h, w).astype(float), pitch)


def write_gradient_map(path, g: GradientMap) -> None:
    h, w = g.shape
    data = (
        _HEADER.pack(b"TGM1", h, w, g.pitch)
        + g.gx.astype("<f4").tobytes()
        + g.gy.astype("<f4").tobytes()
    )
    Path(path).write_bytes(data)


def read_gradient_map(path) -> GradientMap:
    raw = Path(path).read_bytes()
    magic, h, w, pitch = _HEADER.unpack_from(raw)
    if magic != b"TGM1":
        raise ValueError(f"{path}: bad magic {magic!r}")
    planes = np.frombuffer(raw, dtype="<f4", count=2 * h * w, offset=_HEADER.size)
    planes = planes.reshape(2, h, w).astype(float)
    return GradientMap(planes[0], planes[1], pitch)
