"""Loop-closure candidates, the weighted two-channel gate, and match confirmation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import pose_error
from .odometry import (
    OdometryMeasurement,
    RefinementConfig,
    TactileEstimator,
    TactileNoise,
    VisionNoise,
    tactile_refined,
    vision_odometry,
)
from .tactile_map import ncc_similarity


@dataclass(frozen=True)
class LoopClosureConfig:
    a: float = 0.3  # tactile weight
    b: float = 0.7  # vision weight
    c: float = 0.9  # threshold
    min_gap: int = 2
    lambda_t: float = 13.0  # mm, decay length of the vision similarity
    lambda_r: float = 60.0  # deg
    vision_score_noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("gate weights must be non-negative")
        if not 0 < self.c <= self.a + self.b:
            raise ValueError("threshold must satisfy 0 < c <= a + b")
        if self.min_gap < 1:
            raise ValueError("min_gap must be at least 1")
        if not (self.lambda_t > 0 and self.lambda_r > 0):
            raise ValueError("decay lengths must be positive")


@dataclass(frozen=True, eq=False)
class LoopClosureMatch:
    """Confirmed revisit of step ``j`` at step ``i``; measurements are ``P_j^-1 P_i``."""

    i: int
    j: int
    score: float
    tactile_meas: OdometryMeasurement
    vision_meas: OdometryMeasurement


def candidates(t: int, min_gap: int = 2, first: int = 1) -> list[tuple[int, int]]:
    """Pairs ``(t, j)`` with ``first <= j <= t - min_gap``."""
    return [(t, j) for j in range(first, t - min_gap + 1)]


def gate(g_tac: float, g_vis: float, cfg: LoopClosureConfig = LoopClosureConfig()) -> bool:
    return cfg.a * g_tac + cfg.b * g_vis > cfg.c


def vision_similarity(pose_i, pose_j, cfg: LoopClosureConfig = LoopClosureConfig(), key=None) -> float:
    """Oracle place-recognition score decaying with the true relative motion."""
    dt, dr = pose_error(pose_i, pose_j)
    s = math.exp(-dt / cfg.lambda_t - dr / cfg.lambda_r)
    if cfg.vision_score_noise and key is not None:
        rng = np.random.default_rng([cfg.seed, *key])
        s += cfg.vision_score_noise * rng.standard_normal()
    return min(1.0, max(0.0, s))


def score_pair(i: int, j: int, episode, cfg: LoopClosureConfig = LoopClosureConfig()) -> tuple[float, float]:
    """(tactile, vision) similarity of steps ``i`` and ``j``, each in [0, 1]; symmetric."""
    g_tac = ncc_similarity(episode.depths[i], episode.depths[j])
    lo, hi = min(i, j), max(i, j)
    g_vis = vision_similarity(episode.frames[lo].true_pose, episode.frames[hi].true_pose, cfg, key=(lo, hi, 7))
    return g_tac, g_vis


def confirm(
    i: int,
    j: int,
    episode,
    cfg: LoopClosureConfig = LoopClosureConfig(),
    refinement: RefinementConfig = RefinementConfig(),
    estimator: TactileEstimator | None = None,
    vision_noise: VisionNoise = VisionNoise(),
    tactile_noise: TactileNoise | None = None,
    tactile_cov: np.ndarray | None = None,
    vision_cov: np.ndarray | None = None,
) -> LoopClosureMatch | None:
    """Gate the pair and, only if it passes, measure ``P_j^-1 P_i`` with both channels."""
    if i - j < cfg.min_gap:
        raise ValueError(f"pair ({i}, {j}) is closer than min_gap={cfg.min_gap}")
    g_tac, g_vis = score_pair(i, j, episode, cfg)
    if not gate(g_tac, g_vis, cfg):
        return None
    score = cfg.a * g_tac + cfg.b * g_vis
    tac = tactile_refined(
        episode.depths[j], episode.depths[i], refinement, estimator, tactile_cov, noise=tactile_noise, key=(j, i)
    )
    vis = vision_odometry(episode.frames[j], episode.frames[i], vision_noise, vision_cov)
    return LoopClosureMatch(i, j, score, tac, vis)
