"""End-to-end evaluation: simulate or load an episode, estimate poses with every
method, score them against ground truth, reconstruct, and write artifacts.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .factor_graph import BetweenFactor, FactorGraph, PriorFactor, incremental_extend, solve
from .geometry import Pose, compose, inverse, pose_error, write_trajectory
from .loop_closure import LoopClosureConfig, candidates, confirm
from .odometry import (
    TACTILE_ESTIMATORS,
    RefinementConfig,
    TactileNoise,
    VisionNoise,
    tactile_covariance,
    tactile_refined,
    vision_covariance,
    vision_odometry,
)
from .reconstruction import VoxelGridConfig, cloud_to_surface_error, stitch, write_ply
from .simulator import (
    BIN_LABELS,
    SensorConfig,
    SyntheticObject,
    Texture,
    TrajectoryConfig,
    generate_trajectory,
    load_episode,
    parse_shape,
    step_bin,
)

METHODS = ("TactileOnly", "VisionOnly", "Combined", "CombinedWithLC")
REFERENCES = ("TactileChained", "VisionChained")
ALL_METHODS = METHODS + REFERENCES
ROW_LABELS = BIN_LABELS + ("all",)

# covariance floor used when a noise level of zero would make a factor singular
_MIN_STD = 1e-3


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run; serialized as ``key = value`` lines."""

    seed: int = 0
    episode: str = ""  # load this episode directory instead of simulating
    output: str = ""
    # object
    shape: str = "sphere:60"
    texture_amplitude: float = 0.3
    texture_wavelength: float = 2.0
    texture_octaves: int = 3
    # sensor
    sensor_height: int = 100
    sensor_width: int = 100
    pixel_pitch: float = 0.24
    max_indent: float = 2.0
    # trajectory
    n_steps: int = 21
    episode_len: int = 7
    step_min: float = 2.0
    step_max: float = 12.0
    rot_min_deg: float = 2.0
    rot_max_deg: float = 10.0
    revisit_fraction: float = 0.3
    revisit_radius: float = 1.0
    indentation: float = 1.0
    # estimators
    tactile_estimator: str = "phase_correlation"
    max_passes: int = 10
    sigma: float = 0.15
    vision_trans_std: float = 1.5
    vision_rot_std_deg: float = 1.2
    vision_normal_std: float = 0.7  # along the sensor normal; negative: same as vision_trans_std
    tactile_noise_frac: float = 0.2  # in-plane error std per mm of estimated motion
    tactile_noise_floor: float = 0.3  # mm
    # factor covariances (standard deviations)
    tactile_cov_trans: float = 0.3
    tactile_cov_yaw_deg: float = 0.5
    vision_cov_trans: float = -1.0  # negative: follow the vision noise level
    vision_cov_rot_deg: float = -1.0
    # loop closure
    lc_a: float = 0.3
    lc_b: float = 0.7
    lc_c: float = 0.9
    lc_min_gap: int = 2
    lc_lambda_t: float = 13.0
    lc_lambda_r: float = 60.0
    # reconstruction
    voxel_size: float = 0.5
    incremental: bool = True

    def __post_init__(self):
        parse_shape(self.shape)
        if self.tactile_estimator not in TACTILE_ESTIMATORS:
            raise ValueError(f"unknown tactile estimator {self.tactile_estimator!r}")
        # constructing the component configs runs their own validation
        self.trajectory_config()
        self.loop_closure_config()
        self.refinement_config()
        VoxelGridConfig(self.voxel_size)
        self.vision_noise()
        self.tactile_noise()

    # ---- component views

    def object(self) -> SyntheticObject:
        tex = Texture(self.texture_amplitude, self.texture_wavelength, self.texture_octaves, self.seed)
        return SyntheticObject(parse_shape(self.shape), tex)

    def sensor(self) -> SensorConfig:
        return SensorConfig(self.sensor_height, self.sensor_width, self.pixel_pitch, self.max_indent)

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(
            n_steps=self.n_steps,
            episode_len=self.episode_len,
            step_min=self.step_min,
            step_max=self.step_max,
            rot_min_deg=self.rot_min_deg,
            rot_max_deg=self.rot_max_deg,
            revisit_fraction=self.revisit_fraction,
            revisit_radius=self.revisit_radius,
            revisit_gap=self.lc_min_gap,
            indentation=self.indentation,
            seed=self.seed,
        )

    def loop_closure_config(self) -> LoopClosureConfig:
        return LoopClosureConfig(
            self.lc_a, self.lc_b, self.lc_c, self.lc_min_gap, self.lc_lambda_t, self.lc_lambda_r, seed=self.seed
        )

    def refinement_config(self) -> RefinementConfig:
        return RefinementConfig(self.max_passes, self.sigma)

    def vision_trans_axes(self) -> tuple:
        n = self.vision_normal_std if self.vision_normal_std >= 0 else self.vision_trans_std
        return (self.vision_trans_std, self.vision_trans_std, n)

    def vision_noise(self) -> VisionNoise:
        return VisionNoise(self.vision_trans_axes(), self.vision_rot_std_deg, self.seed)

    def tactile_noise(self) -> TactileNoise:
        return TactileNoise(self.tactile_noise_frac, self.tactile_noise_floor, self.seed)

    def tactile_cov(self) -> np.ndarray:
        return tactile_covariance(max(self.tactile_cov_trans, _MIN_STD), max(self.tactile_cov_yaw_deg, _MIN_STD))

    def vision_cov(self) -> np.ndarray:
        t = self.vision_cov_trans if self.vision_cov_trans >= 0 else self.vision_trans_axes()
        r = self.vision_cov_rot_deg if self.vision_cov_rot_deg >= 0 else self.vision_rot_std_deg
        return vision_covariance(np.maximum(t, _MIN_STD), max(r, _MIN_STD))

    # ---- text form

    def to_text(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line {n}: expected 'key = value', got {line!r}")
            values[key.strip()] = value.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, type(getattr(cls, key)))
        return cls(**kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(value, kind):
    if not isinstance(value, str):
        return kind(value)
    if kind is bool:
        low = value.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return value


# --------------------------------------------------------------------------
# error bookkeeping


def median(values) -> float:
    """Median with the mean-of-middle-two convention; nan when empty."""
    v = np.asarray(values, dtype=float)
    return float(np.median(v)) if v.size else float("nan")


@dataclass
class ErrorReport:
    """Per-step error traces and their medians.

    ``absolute`` errors compare each estimated pose with the truth (steps that
    start an episode are anchored and excluded from medians).  ``relative``
    errors compare the estimated motion of each within-episode pair
    ``(t-1, t)`` with the true motion.  Both are grouped by the true step
    size of the pair ending at ``t``.
    """

    raw_trans: np.ndarray
    raw_rot: np.ndarray
    anchor: np.ndarray  # True where a step starts an episode
    absolute: dict = field(default_factory=dict)  # method -> (n, 2) array, mm and deg
    relative: dict = field(default_factory=dict)  # method -> (n, 2) array, nan for anchors

    @property
    def bins(self) -> np.ndarray:
        return np.array([step_bin(s) if not a else -1 for s, a in zip(self.raw_trans, self.anchor)])

    def samples(self, method: str, kind: str = "absolute", row: str = "all") -> np.ndarray:
        errs = (self.absolute if kind == "absolute" else self.relative)[method]
        keep = ~self.anchor
        if row != "all":
            keep &= self.bins == ROW_LABELS.index(row)
        return errs[keep]

    def cell(self, method: str, kind: str = "absolute", row: str = "all"):
        """(trans median, rot median) or None when the cell has no samples."""
        s = self.samples(method, kind, row)
        if len(s) == 0:
            return None
        return median(s[:, 0]), median(s[:, 1])

    def raw_cell(self, row: str = "all"):
        keep = ~self.anchor
        if row != "all":
            keep &= self.bins == ROW_LABELS.index(row)
        if not keep.any():
            return None
        return median(self.raw_trans[keep]), median(self.raw_rot[keep])

    # ---- CSV traces

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["method", "step", "anchor", "bin", "raw_trans_mm", "raw_rot_deg", "abs_trans_mm", "abs_rot_deg", "rel_trans_mm", "rel_rot_deg"])
        bins = self.bins
        for m in self.absolute:
            for t in range(len(self.anchor)):
                a, r = self.absolute[m][t], self.relative[m][t]
                w.writerow(
                    [m, t, int(self.anchor[t]), "" if bins[t] < 0 else BIN_LABELS[bins[t]]]
                    + [_num(x) for x in (self.raw_trans[t], self.raw_rot[t], a[0], a[1], r[0], r[1])]
                )
        return out.getvalue()

    @classmethod
    def from_csv(cls, texts) -> "ErrorReport":
        """Concatenate one or more trace CSVs into a single report."""
        if isinstance(texts, str):
            texts = [texts]
        raw_t, raw_r, anchor = [], [], []
        absolute, relative = {}, {}
        for text in texts:
            rows = list(csv.DictReader(io.StringIO(text)))
            if not rows:
                continue
            methods = list(dict.fromkeys(r["method"] for r in rows))
            n = sum(1 for r in rows if r["method"] == methods[0])
            first = [r for r in rows if r["method"] == methods[0]]
            raw_t += [float(r["raw_trans_mm"]) for r in first]
            raw_r += [float(r["raw_rot_deg"]) for r in first]
            anchor += [r["anchor"] == "1" for r in first]
            for m in methods:
                mine = [r for r in rows if r["method"] == m]
                if len(mine) != n:
                    raise ValueError(f"method {m} has {len(mine)} rows, expected {n}")
                a = np.array([[float(r["abs_trans_mm"]), float(r["abs_rot_deg"])] for r in mine])
                b = np.array([[_parse_num(r["rel_trans_mm"]), _parse_num(r["rel_rot_deg"])] for r in mine])
                absolute.setdefault(m, []).append(a)
                relative.setdefault(m, []).append(b)
        if not anchor:
            raise ValueError("no error traces to report")
        counts = {m: sum(len(x) for x in v) for m, v in absolute.items()}
        missing = [m for m, c in counts.items() if c != len(anchor)]
        if missing:
            raise ValueError(f"methods {missing} are missing from some traces")
        return cls(
            np.array(raw_t),
            np.array(raw_r),
            np.array(anchor, dtype=bool),
            {m: np.concatenate(v) for m, v in absolute.items()},
            {m: np.concatenate(v) for m, v in relative.items()},
        )


def _num(x) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def _parse_num(s: str) -> float:
    return float(s) if s else float("nan")


# --------------------------------------------------------------------------
# report tables


def format_cell(cell) -> str:
    if cell is None:
        return "-"
    return f"{cell[0]:.1f} : {cell[1]:.1f}"


def report_rows(rep: ErrorReport, kind: str, methods=METHODS) -> list[list[str]]:
    rows = [["group", "Raw", *methods]]
    for label in ROW_LABELS:
        rows.append([label, format_cell(rep.raw_cell(label))] + [format_cell(rep.cell(m, kind, label)) for m in methods])
    return rows


def report_text(rep: ErrorReport, methods=None) -> str:
    """Aligned-text tables of per-bin medians ("mm : deg")."""
    methods = tuple(methods or [m for m in ALL_METHODS if m in rep.absolute])
    parts = []
    for kind, title in (
        ("absolute", "Pose error vs ground truth, median mm : deg"),
        ("relative", "Per-step motion error, median mm : deg"),
    ):
        rows = report_rows(rep, kind, methods)
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = [title]
        for n, r in enumerate(rows):
            lines.append("  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(r, widths))))
            if n == 0:
                lines.append("-" * len(lines[-1]))
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"


def report_csv(rep: ErrorReport, methods=None) -> str:
    """One row per (table, group, method) with sample count and medians; absent cells stay empty."""
    methods = tuple(methods or [m for m in ALL_METHODS if m in rep.absolute])
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["table", "group", "method", "n", "trans_mm", "rot_deg"])
    for kind in ("absolute", "relative"):
        for label in ROW_LABELS:
            raw = rep.raw_cell(label)
            n_raw = int(len(rep.samples(methods[0], kind, label))) if methods else 0
            w.writerow([kind, label, "Raw", n_raw, *(("", "") if raw is None else (repr(raw[0]), repr(raw[1])))])
            for m in methods:
                c = rep.cell(m, kind, label)
                n = len(rep.samples(m, kind, label))
                w.writerow([kind, label, m, n, *(("", "") if c is None else (repr(c[0]), repr(c[1])))])
    return out.getvalue()


# --------------------------------------------------------------------------
# pipeline


class PipelineError(RuntimeError):
    pass


@dataclass
class RunResult:
    config: RunConfig
    episode: object
    trajectories: dict  # method -> list of Pose
    report: ErrorReport
    clouds: dict  # method (plus "GroundTruth") -> PointCloud
    surface_error: dict  # method -> (rms, median) mm
    matches: list
    graphs: dict  # method -> list of per-episode factor-graph dumps


def _chain(anchor: Pose, measurements) -> list:
    poses = [anchor]
    for m in measurements:
        poses.append(compose(poses[-1], m.relative))
    return poses


def _solve_segment(anchor: Pose, steps, loops, incremental: bool):
    """Solve one reset-to-reset episode.

    ``steps[k]`` lists the odometry factors into local variable ``k + 1``;
    ``loops[k]`` lists the loop-closure factors added with it.
    """
    g = FactorGraph()
    g.add_variable(anchor)
    g.add_factor(PriorFactor(0, anchor))
    if incremental:
        res = solve(g)
        for k, odo in enumerate(steps):
            res = incremental_extend(g, res, odo, loops[k])
        return res, g
    for k, odo in enumerate(steps):
        g.add_variable(compose(g.initial[odo[0].i], odo[0].measurement))
        for f in [*odo, *loops[k]]:
            g.add_factor(f)
    return solve(g), g


def run_pipeline(cfg: RunConfig, episode=None) -> RunResult:
    """Run every method on one episode and score it (see module docstring)."""
    if episode is None:
        if cfg.episode:
            episode = load_episode(cfg.episode)
        else:
            episode = generate_trajectory(cfg.trajectory_config(), cfg.object(), cfg.sensor())
    n = len(episode)
    if not episode.depths:
        raise PipelineError("episode has no tactile maps")
    estimator = TACTILE_ESTIMATORS[cfg.tactile_estimator]()
    refinement = cfg.refinement_config()
    noise = cfg.vision_noise()
    tnoise = cfg.tactile_noise()
    lc_cfg = cfg.loop_closure_config()
    cov_t, cov_v = cfg.tactile_cov(), cfg.vision_cov()
    truth = episode.poses

    tactile, vision = {}, {}
    # boundary steps are measured too: the chained references run open-loop
    # across episode resets
    for t in range(1, n):
        try:
            tactile[t] = tactile_refined(
                episode.depths[t - 1], episode.depths[t], refinement, estimator, cov_t,
                noise=tnoise, key=(t - 1, t),
            )
            vision[t] = vision_odometry(episode.frames[t - 1], episode.frames[t], noise, cov_v)
        except Exception as exc:
            raise PipelineError(f"step {t}: odometry failed: {exc}") from exc

    matches = []
    for seg in episode.segments():
        start = seg.start
        for t in seg:
            for _, j in candidates(t - start, lc_cfg.min_gap, first=0):
                try:
                    m = confirm(t, start + j, episode, lc_cfg, refinement, estimator, noise, tnoise, cov_t, cov_v)
                except Exception as exc:
                    raise PipelineError(f"step {t}: loop closure with {start + j} failed: {exc}") from exc
                if m is not None:
                    matches.append(m)

    trajectories = {m: [None] * n for m in ALL_METHODS}
    graphs = {m: [] for m in METHODS}
    for seg in episode.segments():
        start, ts = seg.start, list(seg)
        anchor = truth[start]
        for method in METHODS:
            steps, loops = [], []
            for t in ts[1:]:
                k = t - start
                odo = []
                if method != "VisionOnly":
                    odo.append(BetweenFactor(k - 1, k, tactile[t].relative, tactile[t].covariance, "tactile"))
                if method != "TactileOnly":
                    odo.append(BetweenFactor(k - 1, k, vision[t].relative, vision[t].covariance, "vision"))
                lc = []
                if method == "CombinedWithLC":
                    for m in matches:
                        if m.i == t:
                            cov_l = m.tactile_meas.covariance
                            lc.append(BetweenFactor(m.j - start, k, m.tactile_meas.relative, cov_l, "loop-tactile"))
                            lc.append(BetweenFactor(m.j - start, k, m.vision_meas.relative, m.vision_meas.covariance, "loop-vision"))
                steps.append(odo)
                loops.append(lc)
            try:
                res, g = _solve_segment(anchor, steps, loops, cfg.incremental)
            except Exception as exc:
                raise PipelineError(f"{method}, episode starting at step {start}: {exc}") from exc
            trajectories[method][start : seg.stop] = res.poses
            graphs[method].append(g.dump())

    trajectories["TactileChained"] = _chain(truth[0], [tactile[t] for t in range(1, n)])
    trajectories["VisionChained"] = _chain(truth[0], [vision[t] for t in range(1, n)])

    anchor_mask = np.zeros(n, dtype=bool)
    for seg in episode.segments():
        anchor_mask[seg.start] = True
    raw = np.zeros((n, 2))
    for t in range(1, n):
        raw[t] = pose_error(truth[t - 1], truth[t])
    absolute, relative = {}, {}
    for m, est in trajectories.items():
        a = np.array([pose_error(truth[t], est[t]) for t in range(n)])
        r = np.full((n, 2), np.nan)
        for t in range(n):
            if not anchor_mask[t]:
                r[t] = pose_error(compose(inverse(truth[t - 1]), truth[t]), compose(inverse(est[t - 1]), est[t]))
        absolute[m], relative[m] = a, r
    report = ErrorReport(raw[:, 0], raw[:, 1], anchor_mask, absolute, relative)

    voxel = VoxelGridConfig(cfg.voxel_size)
    clouds = {"GroundTruth": stitch(episode.depths, truth, voxel)}
    for m in ALL_METHODS:
        clouds[m] = stitch(episode.depths, trajectories[m], voxel)
    surface_error = {m: cloud_to_surface_error(c, episode.obj) for m, c in clouds.items()}
    return RunResult(cfg, episode, trajectories, report, clouds, surface_error, matches, graphs)


def write_artifacts(result: RunResult, directory) -> Path:
    """Write config, trajectories, traces, tables, clouds and graph dumps."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.txt").write_text(result.config.to_text())
    write_trajectory(root / "gt_trajectory.txt", result.episode.poses)
    for m, poses in result.trajectories.items():
        write_trajectory(root / f"trajectory_{m}.txt", poses)
    (root / "errors.csv").write_text(result.report.to_csv())
    (root / "report.txt").write_text(report_text(result.report) + "\n" + surface_text(result.surface_error))
    (root / "report.csv").write_text(report_csv(result.report))
    for m, cloud in result.clouds.items():
        write_ply(root / f"cloud_{m}.ply", cloud)
    lines = [f"{m.i} {m.j} {m.score!r}" for m in result.matches]
    (root / "loop_closures.txt").write_text("".join(line + "\n" for line in lines))
    for m, dumps in result.graphs.items():
        text = "".join(f"# episode {k}\n{d}" for k, d in enumerate(dumps))
        (root / f"graph_{m}.txt").write_text(text)
    return root


def surface_text(surface_error: dict) -> str:
    lines = ["Reconstruction error vs true surface, mm (rms / median)"]
    for m, (rms, med) in surface_error.items():
        lines.append(f"{m:<16} {rms:.3f} / {med:.3f}")
    return "\n".join(lines) + "\n"


def seeds_summary(results) -> dict:
    """Median over runs of each method's overall absolute translation median."""
    out = {}
    for m in ALL_METHODS:
        vals = [r.report.cell(m)[0] for r in results if r.report.cell(m) is not None]
        out[m] = median(vals)
    return out


__all__ = [
    "ALL_METHODS",
    "METHODS",
    "ErrorReport",
    "PipelineError",
    "RunConfig",
    "RunResult",
    "format_cell",
    "median",
    "report_csv",
    "report_text",
    "run_pipeline",
    "seeds_summary",
    "write_artifacts",
]
