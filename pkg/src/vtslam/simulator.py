"""Synthetic ground truth: textured objects, tactile rendering, press trajectories.

Frames
------
A pose ``P_t`` maps sensor-frame points into the object frame.  The sensor
frame has its origin at pixel (0, 0) of the gel, x along columns, y along
rows and z along the outward surface normal, so the object lies on the -z
side and pushes up into the gel.  Depth is the height of the object surface
above the sensor plane, clamped to ``[0, max_indent]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import Pose, pose_error, read_trajectory, write_trajectory
from .tactile_map import (
    DepthMap,
    GradientMap,
    finite_difference,
    read_depth_map,
    read_gradient_map,
    write_depth_map,
    write_gradient_map,
)


class ContactError(ValueError):
    """The sensor is not (or cannot be kept) in contact with the object."""


# --------------------------------------------------------------------------
# texture


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


_TABLE_SIZE = 4096


class Texture:
    """Seeded multi-octave value noise, bounded by ``amplitude`` (mm).

    Evaluated at 3-D object-frame points; ``wavelength`` is the lattice
    spacing of the coarsest octave, each further octave halves it.
    """

    def __init__(self, amplitude=0.3, wavelength=2.0, octaves=3, seed=0):
        self.amplitude = float(amplitude)
        self.wavelength = float(wavelength)
        self.octaves = int(octaves)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self._values = rng.uniform(-1.0, 1.0, size=(self.octaves, _TABLE_SIZE))
        weights = 0.5 ** np.arange(self.octaves)
        self._weights = weights / weights.sum()

    def _octave(self, k, p):
        i0 = np.floor(p)
        u = _fade(p - i0)
        i0 = i0.astype(np.int64)
        # spatial hash of the 8 lattice corners, trilinear blend with quintic fade
        hx = (i0[:, 0] * 73856093, (i0[:, 0] + 1) * 73856093)
        hy = (i0[:, 1] * 19349663, (i0[:, 1] + 1) * 19349663)
        hz = (i0[:, 2] * 83492791, (i0[:, 2] + 1) * 83492791)
        wx = (1.0 - u[:, 0], u[:, 0])
        wy = (1.0 - u[:, 1], u[:, 1])
        wz = (1.0 - u[:, 2], u[:, 2])
        table = self._values[k]
        acc = np.zeros(len(p))
        for a in (0, 1):
            for b in (0, 1):
                hab = hx[a] ^ hy[b]
                wab = wx[a] * wy[b]
                for c in (0, 1):
                    acc += wab * wz[c] * table[(hab ^ hz[c]) & (_TABLE_SIZE - 1)]
        return acc

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        if self.amplitude == 0.0:
            return np.zeros(shape)
        flat = pts.reshape(-1, 3)
        out = np.zeros(len(flat))
        for k in range(self.octaves):
            scale = (2.0**k) / self.wavelength
            out += self._weights[k] * self._octave(k, flat * scale + 17.0 * k)
        return self.amplitude * out.reshape(shape)


# --------------------------------------------------------------------------
# base shapes (object frame, centered at the origin)


def _slab(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    inside = (o >= lo) & (o <= hi)
    near = np.where(d == 0, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    far = np.where(d == 0, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return near, far


def _first_hit(near, far):
    hit = (near <= far) & (far >= 0)
    return np.where(hit, np.maximum(near, 0.0), np.inf)


@dataclass(frozen=True)
class Plane:
    """The half-space z <= 0."""

    def sdf(self, p):
        return p[..., 2]

    def normal(self, p):
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]), np.shape(p)).copy()

    def project(self, p):
        return np.array([p[0], p[1], 0.0])

    def raycast(self, o, d):
        near, far = _slab(o[:, 2], d[:, 2], -np.inf, 0.0)
        return _first_hit(near, far)

    def start_point(self):
        return np.zeros(3)

    def contains_contact(self, c, margin):
        return True

    def spec(self):
        return "plane"


@dataclass(frozen=True)
class Sphere:
    radius: float = 30.0

    def sdf(self, p):
        return np.linalg.norm(p, axis=-1) - self.radius

    def normal(self, p):
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def project(self, p):
        return self.radius * p / np.linalg.norm(p)

    def raycast(self, o, d):
        b = np.sum(o * d, axis=1)
        c = np.sum(o * o, axis=1) - self.radius**2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near, far = -b - root, -b + root
        return np.where(disc >= 0, _first_hit(near, far), np.inf)

    def start_point(self):
        return np.array([0.0, 0.0, self.radius])

    def contains_contact(self, c, margin):
        return True

    def spec(self):
        return f"sphere:{self.radius!r}"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with full edge lengths ``extents``; presses stay on the +z face."""

    extents: tuple = (40.0, 40.0, 40.0)

    def sdf(self, p):
        half = np.asarray(self.extents) / 2
        q = np.abs(p) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        return outside + np.minimum(np.max(q, axis=-1), 0.0)

    def normal(self, p):
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]), np.shape(p)).copy()

    def project(self, p):
        hx, hy, hz = np.asarray(self.extents) / 2
        return np.array([np.clip(p[0], -hx, hx), np.clip(p[1], -hy, hy), hz])

    def raycast(self, o, d):
        half = np.asarray(self.extents) / 2
        near = np.full(len(o), -np.inf)
        far = np.full(len(o), np.inf)
        for k in range(3):
            n_k, f_k = _slab(o[:, k], d[:, k], -half[k], half[k])
            near, far = np.maximum(near, n_k), np.minimum(far, f_k)
        return _first_hit(near, far)

    def start_point(self):
        return np.array([0.0, 0.0, self.extents[2] / 2])

    def contains_contact(self, c, margin):
        hx, hy, _ = np.asarray(self.extents) / 2
        return abs(c[0]) <= hx - margin and abs(c[1]) <= hy - margin

    def spec(self):
        return "box:" + ",".join(repr(float(e)) for e in self.extents)


@dataclass(frozen=True)
class Cylinder:
    """Axis along z; presses stay on the curved side."""

    radius: float = 30.0
    height: float = 80.0

    def sdf(self, p):
        radial = np.linalg.norm(p[..., :2], axis=-1) - self.radius
        axial = np.abs(p[..., 2]) - self.height / 2
        q = np.stack([radial, axial], axis=-1)
        return np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(np.max(q, axis=-1), 0.0)

    def normal(self, p):
        n = np.array(p, dtype=float)
        n[..., 2] = 0.0
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def project(self, p):
        xy = p[:2] / np.linalg.norm(p[:2]) * self.radius
        return np.array([xy[0], xy[1], np.clip(p[2], -self.height / 2, self.height / 2)])

    def raycast(self, o, d):
        a = d[:, 0] ** 2 + d[:, 1] ** 2
        b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
        c = o[:, 0] ** 2 + o[:, 1] ** 2 - self.radius**2
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = b * b - a * c
            root = np.sqrt(np.maximum(disc, 0.0))
            s1 = (-b - root) / a
            s2 = (-b + root) / a
        parallel = a < 1e-15
        near = np.where(parallel, np.where(c <= 0, -np.inf, np.inf), np.where(disc >= 0, s1, np.inf))
        far = np.where(parallel, np.where(c <= 0, np.inf, -np.inf), np.where(disc >= 0, s2, -np.inf))
        zn, zf = _slab(o[:, 2], d[:, 2], -self.height / 2, self.height / 2)
        return _first_hit(np.maximum(near, zn), np.minimum(far, zf))

    def start_point(self):
        return np.array([self.radius, 0.0, 0.0])

    def contains_contact(self, c, margin):
        return abs(c[2]) <= self.height / 2 - margin

    def spec(self):
        return f"cylinder:{self.radius!r},{self.height!r}"


def parse_shape(spec: str):
    name, _, args = spec.partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    name = name.strip().lower()
    if name == "plane":
        return Plane()
    if name == "sphere":
        return Sphere(*vals)
    if name == "box":
        return Box(tuple(vals) if vals else (40.0, 40.0, 40.0))
    if name == "cylinder":
        return Cylinder(*vals)
    raise ValueError(f"unknown shape {spec!r}")


@dataclass
class SyntheticObject:
    """A base shape with a texture heightfield added along its normal."""

    shape: object = field(default_factory=lambda: Sphere(30.0))
    texture: Texture = field(default_factory=Texture)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.shape.sdf(p) - self.texture(p)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_distance(points))

    def raycast(self, origins: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """Distance along ``direction`` to the first textured-surface hit (inf on miss)."""
        d = np.broadcast_to(direction, origins.shape)
        s = self.shape.raycast(origins, d)
        hit = np.isfinite(s)
        if self.texture.amplitude == 0.0 or not hit.any():
            return s
        o, dh = origins[hit], d[hit]
        sh = s[hit]
        # fixed-point iterations on sdf - texture, slope taken from the bare shape
        slope = np.sum(self.shape.normal(o + sh[:, None] * dh) * dh, axis=1)
        slope = np.where(slope > -0.2, -0.2, slope)
        for _ in range(3):
            sh = sh - self.signed_distance(o + sh[:, None] * dh) / slope
        s = s.copy()
        s[hit] = sh
        return s


# --------------------------------------------------------------------------
# tactile rendering


@dataclass(frozen=True)
class SensorConfig:
    height: int = 120
    width: int = 160
    pitch: float = 0.1  # mm / px
    max_indent: float = 2.0  # mm

    @property
    def center(self) -> np.ndarray:
        """Sensor-frame coordinates of the image center."""
        return np.array([(self.width - 1) / 2 * self.pitch, (self.height - 1) / 2 * self.pitch, 0.0])


def render_depth(obj: SyntheticObject, pose: Pose, sensor: SensorConfig = SensorConfig()) -> np.ndarray:
    rows, cols = np.mgrid[0 : sensor.height, 0 : sensor.width]
    z0 = sensor.max_indent + 2 * obj.texture.amplitude + 1.0
    local = np.stack(
        [cols.ravel() * sensor.pitch, rows.ravel() * sensor.pitch, np.full(rows.size, z0)], axis=1
    )
    origins = pose.act(local)
    direction = -pose.rotation[:, 2]
    s = obj.raycast(origins, direction)
    height = np.where(np.isfinite(s), z0 - s, 0.0)
    return np.clip(height, 0.0, sensor.max_indent).reshape(sensor.height, sensor.width)


def render_tactile(
    obj: SyntheticObject, pose: Pose, sensor: SensorConfig = SensorConfig()
) -> tuple[GradientMap, DepthMap]:
    """Depth and finite-difference gradient maps of the object seen through the gel.

    Raises :class:`ContactError` if nothing touches the gel.
    """
    depth = render_depth(obj, pose, sensor)
    d = DepthMap(depth, sensor.pitch)
    if not d.contact_mask.any():
        raise ContactError("no contact: the object does not reach the gel at this pose")
    return finite_difference(d.depth, sensor.pitch), d


def contact_pose(
    shape, point: np.ndarray, heading: np.ndarray, indentation: float, sensor: SensorConfig
) -> Pose:
    """Sensor pose centered over surface ``point`` pressed ``indentation`` mm deep."""
    n = shape.normal(point)
    e1 = heading - np.dot(heading, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    R = np.stack([e1, e2, n], axis=1)
    origin = point - indentation * n - R @ sensor.center
    return Pose.from_rotation(R, origin)


# --------------------------------------------------------------------------
# vision abstraction


@dataclass(frozen=True, eq=False)
class VisionFrame:
    """Global-view stand-in: identity metadata plus a pose-dependent descriptor."""

    step: int
    episode_id: str
    true_pose: Pose
    descriptor: np.ndarray


def vision_descriptor(pose: Pose, seed: int, dim: int = 32) -> np.ndarray:
    rng = np.random.default_rng([int(seed), 0x5EED])
    W = rng.normal(size=(dim, 6))
    b = rng.uniform(0.0, 2 * np.pi, size=dim)
    f = np.concatenate([pose.t / 20.0, pose.rotvec()])
    return np.cos(W @ f + b)


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectoryConfig:
    n_steps: int = 21
    episode_len: int = 7
    step_min: float = 2.0  # mm, contact-point travel per step
    step_max: float = 12.0
    rot_min_deg: float = 2.0  # in-plane heading change per step
    rot_max_deg: float = 10.0
    revisit_fraction: float = 0.3
    revisit_radius: float = 1.0  # mm
    revisit_yaw_deg: float = 2.0
    revisit_gap: int = 2  # minimum step gap to the revisited press
    indentation: float = 1.0  # mm at the contact center
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1 or self.episode_len < 1:
            raise ValueError("n_steps and episode_len must be positive")
        if self.n_steps % self.episode_len:
            raise ValueError(f"episode_len {self.episode_len} must divide n_steps {self.n_steps}")
        if not 0.0 <= self.revisit_fraction <= 1.0:
            raise ValueError("revisit_fraction must lie in [0, 1]")
        if not 0 < self.step_min <= self.step_max:
            raise ValueError("need 0 < step_min <= step_max")


@dataclass
class Episode:
    poses: list
    gradients: list
    depths: list
    frames: list
    episode_len: int
    obj: SyntheticObject
    sensor: SensorConfig
    config: TrajectoryConfig
    episode_id: str
    revisit_of: list = field(default_factory=list)

    def __len__(self):
        return len(self.poses)

    def segments(self) -> list[range]:
        """Step ranges of the graph-reset episodes."""
        n, k = len(self.poses), self.episode_len
        return [range(s, min(s + k, n)) for s in range(0, n, k)]


def _rotate_about(v, axis, angle):
    axis = axis / np.linalg.norm(axis)
    return (
        v * math.cos(angle)
        + np.cross(axis, v) * math.sin(angle)
        + axis * np.dot(axis, v) * (1 - math.cos(angle))
    )


def _walk(shape, point, heading, direction, distance, substeps=16):
    # march along the surface, re-projecting and transporting the heading
    p, h, dvec = point.copy(), heading.copy(), direction.copy()
    ds = distance / substeps
    for _ in range(substeps):
        p_new = shape.project(p + ds * dvec)
        n = shape.normal(p_new)
        h = h - np.dot(h, n) * n
        h /= np.linalg.norm(h)
        dvec = dvec - np.dot(dvec, n) * n
        nd = np.linalg.norm(dvec)
        if nd < 1e-12:
            break
        dvec /= nd
        p = p_new
    return p, h


def _contact_margin(sensor: SensorConfig) -> float:
    return 0.5 * math.hypot(sensor.width * sensor.pitch, sensor.height * sensor.pitch)


def generate_trajectory(
    cfg: TrajectoryConfig = TrajectoryConfig(),
    obj: SyntheticObject | None = None,
    sensor: SensorConfig = SensorConfig(),
    *,
    render: bool = True,
    max_attempts: int = 200,
) -> Episode:
    """Simulate a sequence of presses of ``obj`` against the gel.

    Each step travels ``U(step_min, step_max)`` mm along the surface in a
    random direction and turns the sensor by ``U(rot_min, rot_max)`` degrees
    about the surface normal.  With probability ``revisit_fraction`` a step
    instead returns to within ``revisit_radius`` of a press at least
    ``revisit_gap`` steps earlier in the same episode.  Ordinary steps are
    resampled until they keep contact and stay more than 2 mm away from every
    earlier non-consecutive press.
    """
    obj = obj if obj is not None else SyntheticObject()
    shape = obj.shape
    rng = np.random.default_rng(cfg.seed)
    margin = _contact_margin(sensor)

    point = shape.start_point()
    if not shape.contains_contact(point, margin):
        raise ContactError(f"{shape.spec()} is too small for a {sensor.width}x{sensor.height} sensor")
    n0 = shape.normal(point)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    heading = _rotate_about(ref - np.dot(ref, n0) * n0, n0, rng.uniform(-np.pi, np.pi))
    heading /= np.linalg.norm(heading)

    points, headings, poses, revisit_of = [point], [heading], [], [None]
    poses.append(contact_pose(shape, point, heading, cfg.indentation, sensor))

    for t in range(1, cfg.n_steps):
        local = t % cfg.episode_len
        start = t - local
        earlier = list(range(start, t - cfg.revisit_gap + 1)) if local >= cfg.revisit_gap else []
        if earlier and rng.random() < cfg.revisit_fraction:
            j = int(rng.choice(earlier))
            n = shape.normal(points[j])
            e1 = headings[j]
            e2 = np.cross(n, e1)
            r = cfg.revisit_radius * math.sqrt(rng.random())
            phi = rng.uniform(0, 2 * np.pi)
            p_new = shape.project(points[j] + r * (math.cos(phi) * e1 + math.sin(phi) * e2))
            yaw = math.radians(rng.uniform(-cfg.revisit_yaw_deg, cfg.revisit_yaw_deg))
            n_new = shape.normal(p_new)
            h_new = e1 - np.dot(e1, n_new) * n_new
            h_new = _rotate_about(h_new / np.linalg.norm(h_new), n_new, yaw)
            pose = contact_pose(shape, p_new, h_new, cfg.indentation, sensor)
            points.append(p_new)
            headings.append(h_new)
            poses.append(pose)
            revisit_of.append(j)
            continue

        for _ in range(max_attempts):
            s = rng.uniform(cfg.step_min, cfg.step_max)
            phi = rng.uniform(0, 2 * np.pi)
            dpsi = math.radians(rng.uniform(cfg.rot_min_deg, cfg.rot_max_deg)) * rng.choice([-1.0, 1.0])
            n = shape.normal(point)
            e1 = heading
            e2 = np.cross(n, e1)
            direction = math.cos(phi) * e1 + math.sin(phi) * e2
            p_new, h_new = _walk(shape, point, heading, direction, s)
            if not shape.contains_contact(p_new, margin):
                continue
            h_new = _rotate_about(h_new, shape.normal(p_new), dpsi)
            pose = contact_pose(shape, p_new, h_new, cfg.indentation, sensor)
            too_close = any(pose_error(pose, q)[0] <= 2.0 for q in poses[:-1])
            if too_close:
                continue
            break
        else:
            raise ContactError(
                f"step {t}: no valid press found on {shape.spec()} after {max_attempts} attempts"
            )
        point, heading = p_new, h_new
        points.append(p_new)
        headings.append(h_new)
        poses.append(pose)
        revisit_of.append(None)

    episode_id = f"sim-{cfg.seed}"
    gradients, depths = [], []
    if render:
        for t, pose in enumerate(poses):
            try:
                g, d = render_tactile(obj, pose, sensor)
            except ContactError as exc:
                raise ContactError(f"step {t}: {exc}") from None
            gradients.append(g)
            depths.append(d)
    frames = [
        VisionFrame(t, episode_id, pose, vision_descriptor(pose, cfg.seed)) for t, pose in enumerate(poses)
    ]
    return Episode(
        poses=poses,
        gradients=gradients,
        depths=depths,
        frames=frames,
        episode_len=cfg.episode_len,
        obj=obj,
        sensor=sensor,
        config=cfg,
        episode_id=episode_id,
        revisit_of=revisit_of,
    )


# --------------------------------------------------------------------------
# step-size bins

BIN_LABELS = ("<5mm", "5-10mm", ">10mm")


def step_bin(step_mm: float) -> int:
    """0 for < 5 mm, 1 for [5, 10) mm, 2 for >= 10 mm."""
    if step_mm < 5.0:
        return 0
    if step_mm < 10.0:
        return 1
    return 2


def step_sizes(poses) -> np.ndarray:
    """True translation (mm) of each consecutive pair; entry t is for (t-1, t)."""
    out = np.zeros(len(poses))
    for t in range(1, len(poses)):
        out[t] = pose_error(poses[t - 1], poses[t])[0]
    return out


def bin_by_step_size(episode) -> tuple[list[int], list[int], list[int]]:
    """Partition the pairs (t-1, t), identified by t, into the three step-size bins."""
    poses = episode.poses if hasattr(episode, "poses") else episode
    sizes = step_sizes(poses)
    groups = ([], [], [])
    for t in range(1, len(poses)):
        groups[step_bin(sizes[t])].append(t)
    return groups


# --------------------------------------------------------------------------
# episode directories


def object_to_fields(obj: SyntheticObject) -> dict:
    tex = obj.texture
    return {
        "shape": obj.shape.spec(),
        "texture_amplitude": tex.amplitude,
        "texture_wavelength": tex.wavelength,
        "texture_octaves": tex.octaves,
        "texture_seed": tex.seed,
    }


def object_from_fields(f: dict) -> SyntheticObject:
    tex = Texture(
        float(f.get("texture_amplitude", 0.3)),
        float(f.get("texture_wavelength", 2.0)),
        int(f.get("texture_octaves", 3)),
        int(f.get("texture_seed", 0)),
    )
    return SyntheticObject(parse_shape(f.get("shape", "sphere:30")), tex)


def _kv_text(fields: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in fields.items())


def _parse_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed config line: {line!r}")
        out[key.strip()] = value.strip()
    return out


def save_episode(episode: Episode, directory) -> Path:
    root = Path(directory)
    for sub in ("tactile", "gradients", "vision"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    cfg = episode.config
    fields = {"episode_id": episode.episode_id}
    fields.update(object_to_fields(episode.obj))
    fields.update(
        sensor_height=episode.sensor.height,
        sensor_width=episode.sensor.width,
        sensor_pitch=repr(episode.sensor.pitch),
        sensor_max_indent=repr(episode.sensor.max_indent),
    )
    fields.update({k: v for k, v in cfg.__dict__.items()})
    fields["revisit_of"] = ",".join("-" if r is None else str(r) for r in episode.revisit_of)
    (root / "episode.cfg").write_text(_kv_text(fields))
    write_trajectory(root / "gt_trajectory.txt", episode.poses)
    for t in range(len(episode)):
        if episode.depths:
            write_depth_map(root / "tactile" / f"{t:03d}.tdm", episode.depths[t])
        if episode.gradients:
            write_gradient_map(root / "gradients" / f"{t:03d}.tgm", episode.gradients[t])
        desc = " ".join(repr(float(v)) for v in episode.frames[t].descriptor)
        (root / "vision" / f"{t:03d}.txt").write_text(desc + "\n")
    return root


def load_episode(directory) -> Episode:
    root = Path(directory)
    f = _parse_kv((root / "episode.cfg").read_text())
    sensor = SensorConfig(
        int(f["sensor_height"]), int(f["sensor_width"]), float(f["sensor_pitch"]), float(f["sensor_max_indent"])
    )
    defaults = TrajectoryConfig()
    kwargs = {}
    for name, default in defaults.__dict__.items():
        if name in f:
            kwargs[name] = type(default)(float(f[name])) if isinstance(default, int) else float(f[name])
    cfg = replace(defaults, **kwargs)
    _, poses = read_trajectory(root / "gt_trajectory.txt")
    n = len(poses)
    depths = [read_depth_map(root / "tactile" / f"{t:03d}.tdm") for t in range(n)]
    gradients = [read_gradient_map(root / "gradients" / f"{t:03d}.tgm") for t in range(n)]
    episode_id = f["episode_id"]
    frames = []
    for t in range(n):
        desc = np.array([float(v) for v in (root / "vision" / f"{t:03d}.txt").read_text().split()])
        frames.append(VisionFrame(t, episode_id, poses[t], desc))
    revisit = [None if r == "-" else int(r) for r in f.get("revisit_of", "").split(",") if r]
    return Episode(
        poses=poses,
        gradients=gradients,
        depths=depths,
        frames=frames,
        episode_len=cfg.episode_len,
        obj=object_from_fields(f),
        sensor=sensor,
        config=cfg,
        episode_id=episode_id,
        revisit_of=revisit or [None] * n,
    )
