"""Relative-pose estimators for the tactile and vision channels.

The tactile channel registers two depth maps in the sensor plane and
refines the estimate over several passes, warping the previous map toward
the current one each time.  The vision channel is an oracle: the true
relative pose corrupted by seeded Gaussian noise.
"""

from __future__ import annotations

import abc
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from skimage.registration import phase_cross_correlation

from .geometry import PlanarPose, Pose, compose, exp, inverse, lift_to_se3
from .simulator import VisionFrame
from .tactile_map import DepthMap, warp, warp_array

INFLATED = 1e6  # variance on axes a measurement does not observe
LOW_OVERLAP = 0.10


class Source(enum.Enum):
    TACTILE = "tactile"
    VISION = "vision"


def _check_covariance(cov: np.ndarray) -> np.ndarray:
    cov = np.array(cov, dtype=float)
    if cov.shape != (6, 6):
        raise ValueError(f"covariance must be 6x6, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
        raise ValueError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    lo = np.linalg.eigvalsh(cov)[0]
    if lo < -1e-9 * max(1.0, np.abs(cov).max()):
        raise ValueError(f"covariance is not positive semi-definite (eigenvalue {lo:.3g})")
    cov.setflags(write=False)
    return cov


@dataclass(frozen=True, eq=False)
class OdometryMeasurement:
    """Relative pose ``P_{t-1}^{-1} P_t`` with a (rot, trans) covariance in rad^2 / mm^2."""

    relative: Pose
    covariance: np.ndarray
    source: Source
    low_confidence: bool = False
    passes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "covariance", _check_covariance(self.covariance))
        if self.source is Source.TACTILE:
            R, t = self.relative.rotation, self.relative.t
            if t[2] != 0.0 or R[2, 0] != 0.0 or R[2, 1] != 0.0:
                raise ValueError("tactile measurements must be planar (zero z, roll and pitch)")
            if min(self.covariance[0, 0], self.covariance[1, 1], self.covariance[5, 5]) < INFLATED:
                raise ValueError("tactile measurements need inflated z/roll/pitch variance")


def tactile_covariance(trans_std=0.3, yaw_std_deg=0.5, inflated=INFLATED) -> np.ndarray:
    """Diagonal tactile covariance: observed x, y, yaw and inflated z, roll, pitch."""
    return np.diag([inflated, inflated, math.radians(yaw_std_deg) ** 2, trans_std**2, trans_std**2, inflated])


def _per_axis(std) -> np.ndarray:
    a = np.broadcast_to(np.asarray(std, dtype=float), (3,)).copy()
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError(f"standard deviations must be finite and non-negative, got {std}")
    return a


def vision_covariance(trans_std=1.5, rot_std_deg=1.2) -> np.ndarray:
    """Diagonal 6-DoF covariance; each std is a scalar or one value per axis."""
    r = np.radians(_per_axis(rot_std_deg)) ** 2
    t = _per_axis(trans_std) ** 2
    return np.diag(np.concatenate([r, t]))


@dataclass(frozen=True)
class RefinementConfig:
    max_passes: int = 10
    sigma: float = 0.15  # on PlanarPose.norm(): 0.05 mm + 0.1 deg

    def __post_init__(self):
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


# --------------------------------------------------------------------------
# tactile registration


@dataclass(frozen=True)
class PassResult:
    delta: PlanarPose
    low_confidence: bool


class TactileEstimator(abc.ABC):
    """Single-pass registration: the planar motion ``W`` with ``warp(prev, W) ~ curr``."""

    @abc.abstractmethod
    def estimate(self, prev: DepthMap, curr: DepthMap) -> PassResult: ...


def texture_agreement(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized correlation of two prepared texture maps (0 when either is blank)."""
    den = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    return float((a * b).sum()) / den if den > 0 else 0.0


def contact_overlap(a: DepthMap, b: DepthMap) -> float:
    """Shared contact area as a fraction of the smaller contact mask."""
    ma, mb = a.contact_mask, b.contact_mask
    small = min(ma.sum(), mb.sum())
    if small == 0:
        return 0.0
    return float((ma & mb).sum() / small)


_N_ANGLE = 360  # samples over half a turn; the spectrum repeats every 180 degrees


@lru_cache(maxsize=4)
def _spectrum_geometry(shape):
    """Radial ramp and log-polar sample coordinates for a centered spectrum."""
    h, w = shape
    radius = min(h, w) // 2
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - h // 2, xx - w // 2) / radius
    ramp = np.where(r <= 1.0, r**2, 0.0)
    theta = np.arange(_N_ANGLE) * np.pi / _N_ANGLE
    rho = np.exp(np.arange(radius) * np.log(radius) / radius)
    rows = h // 2 + rho[None, :] * np.sin(theta)[:, None]
    cols = w // 2 + rho[None, :] * np.cos(theta)[:, None]
    return ramp, np.stack([rows.ravel(), cols.ravel()])


@dataclass(frozen=True)
class PhaseCorrelationEstimator(TactileEstimator):
    """Log-polar rotation search followed by translation phase correlation.

    Both maps are high-passed to keep only surface texture and tapered by a
    smoothed contact mask, so the outline of the contact patch does not
    dominate the correlation.  A pass is low-confidence when the aligned
    contact masks share less than 10% of their area or when the aligned
    textures correlate below ``min_agreement``.
    """

    highpass_mm: float = 1.0
    taper_mm: float = 0.6
    upsample: int = 20
    max_yaw_deg: float = 30.0
    n_peaks: int = 2
    min_agreement: float = 0.44

    def _prepare(self, d: DepthMap) -> np.ndarray:
        s = self.highpass_mm / d.pitch
        detail = d.depth - ndimage.gaussian_filter(d.depth, s)
        k = max(1, int(round(self.taper_mm / d.pitch)))
        mask = ndimage.binary_erosion(d.contact_mask, iterations=k)
        weight = ndimage.gaussian_filter(mask.astype(float), k)
        return detail * weight

    def _rotations(self, a: np.ndarray, b: np.ndarray) -> list:
        """Strongest admissible rotations of ``a`` onto ``b``, best first."""
        # rotating an image rotates its magnitude spectrum by the same angle;
        # a radial ramp suppresses the low frequencies left by the taper
        ramp, coords = _spectrum_geometry(a.shape)
        fa = np.log1p(np.abs(np.fft.fftshift(np.fft.fft2(a)))) * ramp
        fb = np.log1p(np.abs(np.fft.fftshift(np.fft.fft2(b)))) * ramp
        pa = ndimage.map_coordinates(fa, coords, order=1).reshape(_N_ANGLE, -1)
        pb = ndimage.map_coordinates(fb, coords, order=1).reshape(_N_ANGLE, -1)
        pa = pa - pa.mean(axis=0)
        pb = pb - pb.mean(axis=0)
        # circular correlation along the angle axis, summed over radius; the
        # spectrum repeats every half turn, so only rotations within
        # max_yaw_deg of 0 (mod 180) are admissible
        corr = np.fft.ifft(np.fft.fft(pb, axis=0) * np.conj(np.fft.fft(pa, axis=0)), axis=0).real.sum(axis=1)
        left, right = np.roll(corr, 1), np.roll(corr, -1)
        step = 180.0 / _N_ANGLE
        reach = int(self.max_yaw_deg / step)
        window = np.r_[0 : reach + 1, _N_ANGLE - reach : _N_ANGLE]
        peaks = [int(k) for k in window if corr[k] >= left[k] and corr[k] > right[k]]
        peaks.sort(key=lambda k: -corr[k])
        out = []
        for k in peaks[: self.n_peaks]:
            # parabolic sub-sample peak
            den = left[k] - 2 * corr[k] + right[k]
            frac = 0.5 * (left[k] - right[k]) / den if den < 0 else 0.0
            k = k - _N_ANGLE if k > _N_ANGLE // 2 else k
            out.append(math.radians((k + frac) * step))
        return out

    def estimate(self, prev: DepthMap, curr: DepthMap) -> PassResult:
        if prev.shape != curr.shape:
            raise ValueError(f"depth maps differ in shape: {prev.shape} vs {curr.shape}")
        a, b = self._prepare(prev), self._prepare(curr)
        if not a.any() or not b.any():
            return PassResult(PlanarPose.identity(), True)
        h, w = prev.shape
        c = np.array([(w - 1) / 2, (h - 1) / 2]) * prev.pitch

        # the spectral peaks are unreliable on small overlaps, so let the
        # translation correlation choose between them and no rotation
        cands = [0.0] + [y for y in self._rotations(a, b) if y != 0.0]
        best = None
        for cand in cands:
            R = PlanarPose(0.0, 0.0, cand)
            rc = R.act(c)
            about_center = PlanarPose(float(c[0] - rc[0]), float(c[1] - rc[1]), cand)
            # the texture filter commutes with rigid motion away from the
            # contact border, so the prepared map is moved directly
            a_rot = warp_array(a, about_center, prev.pitch) if cand else a
            shift, _, _ = phase_cross_correlation(b, a_rot, upsample_factor=self.upsample, normalization=None)
            W = PlanarPose(
                about_center.x + float(shift[1]) * prev.pitch,
                about_center.y + float(shift[0]) * prev.pitch,
                about_center.yaw,
            )
            # small rotations barely change the correlation peak, so rank the
            # candidates by how well the fully moved texture matches; every
            # second pixel is plenty for texture this smooth
            score = texture_agreement(warp_array(a, W, prev.pitch, 2), b[::2, ::2])
            if best is None or score > best[0]:
                best = (score, W)
        score, W = best
        moved = warp(prev, W)
        low = contact_overlap(moved, curr) < LOW_OVERLAP or score < self.min_agreement
        return PassResult(W, low)


_DEFAULT_ESTIMATOR = PhaseCorrelationEstimator()

TACTILE_ESTIMATORS = {"phase_correlation": PhaseCorrelationEstimator}


def tactile_single_pass(prev: DepthMap, curr: DepthMap, estimator: TactileEstimator | None = None) -> PlanarPose:
    """Planar motion that carries ``prev`` onto ``curr`` (``warp(prev, W) ~ curr``)."""
    return (estimator or _DEFAULT_ESTIMATOR).estimate(prev, curr).delta


@dataclass
class RefinementTrace:
    """Per-pass record of the refinement loop."""

    deltas: list = field(default_factory=list)
    accumulated: list = field(default_factory=list)
    low_confidence: list = field(default_factory=list)
    intermediates: list = field(default_factory=list)


def refine(
    prev: DepthMap,
    curr: DepthMap,
    cfg: RefinementConfig = RefinementConfig(),
    estimator: TactileEstimator | None = None,
    trace: RefinementTrace | None = None,
) -> tuple[PlanarPose, bool, int]:
    """Multi-pass registration.

    Starting from the identity, each pass estimates the remaining motion
    between the current intermediate map and ``curr``, left-composes it
    into the running estimate and moves the intermediate by it.
    Stops once a pass moves less than ``cfg.sigma`` or after
    ``cfg.max_passes`` passes.  Returns the accumulated motion, whether every
    pass was low-confidence, and the number of passes.
    """
    estimator = estimator or _DEFAULT_ESTIMATOR
    P = PlanarPose.identity()
    inter = prev
    all_low = True
    i = 0
    while i < cfg.max_passes:
        i += 1
        res = estimator.estimate(inter, curr)
        P = res.delta @ P
        # warp(warp(prev, P_old), delta) == warp(prev, delta P_old); resampling
        # the original once keeps interpolation blur from compounding
        inter = warp(prev, P)
        all_low = all_low and res.low_confidence
        if trace is not None:
            trace.deltas.append(res.delta)
            trace.accumulated.append(P)
            trace.low_confidence.append(res.low_confidence)
            trace.intermediates.append(inter)
        if res.delta.norm() < cfg.sigma:
            break
    return P, all_low, i


def tactile_refined(
    prev: DepthMap,
    curr: DepthMap,
    cfg: RefinementConfig = RefinementConfig(),
    estimator: TactileEstimator | None = None,
    covariance: np.ndarray | None = None,
    trace: RefinementTrace | None = None,
    noise: "TactileNoise | None" = None,
    key: tuple = (),
) -> OdometryMeasurement:
    """Tactile odometry measurement ``P_{t-1}^{-1} P_t`` lifted to SE(3).

    The content of ``prev`` moves by ``W`` to become ``curr``, so the sensor
    itself moved by ``W^-1``.  ``noise`` (keyed by ``key``) perturbs the
    in-plane estimate.
    """
    W, all_low, passes = refine(prev, curr, cfg, estimator, trace)
    step = W.inverse()
    if noise is not None and not noise.is_zero:
        step = noise.perturb(step, *key)
    rel = lift_to_se3(step)
    cov = tactile_covariance() if covariance is None else np.array(covariance, dtype=float)
    if all_low:
        cov = np.diag(np.full(6, INFLATED))
    return OdometryMeasurement(rel, cov, Source.TACTILE, low_confidence=all_low, passes=passes)


@dataclass(frozen=True)
class TactileNoise:
    """Seeded in-plane error whose spread grows with the estimated motion.

    The translation error per axis has std ``floor + frac * |t|`` mm and the
    yaw error the same number in degrees.  Used to give the otherwise very
    accurate registration the error profile of a learned estimator.
    """

    frac: float = 0.0
    floor: float = 0.0  # mm
    seed: int = 0

    def __post_init__(self):
        if self.frac < 0 or self.floor < 0:
            raise ValueError("tactile noise parameters must be non-negative")

    @property
    def is_zero(self) -> bool:
        return not (self.frac or self.floor)

    def std(self, step: PlanarPose) -> float:
        return self.floor + self.frac * math.hypot(step.x, step.y)

    def perturb(self, step: PlanarPose, *key: int) -> PlanarPose:
        rng = np.random.default_rng([self.seed, 11, *(int(k) for k in key)])
        z = rng.standard_normal(3)
        s = self.std(step)
        return PlanarPose(step.x + s * z[0], step.y + s * z[1], step.yaw + math.radians(s * z[2]))


# --------------------------------------------------------------------------
# vision oracle


@dataclass(frozen=True)
class VisionNoise:
    """Per-axis Gaussian noise of the vision oracle; each std is a scalar or an (x, y, z) triple."""

    trans_std: float | tuple = 1.5  # mm
    rot_std_deg: float | tuple = 1.2  # deg
    seed: int = 0

    def __post_init__(self):
        _per_axis(self.trans_std)
        _per_axis(self.rot_std_deg)

    @property
    def is_zero(self) -> bool:
        return not (np.any(_per_axis(self.trans_std)) or np.any(_per_axis(self.rot_std_deg)))

    def covariance(self) -> np.ndarray:
        return vision_covariance(self.trans_std, self.rot_std_deg)

    def sample(self, *key: int) -> np.ndarray:
        """Tangent-space perturbation (rot, trans) for the pair identified by ``key``."""
        rng = np.random.default_rng([self.seed, *(int(k) for k in key)])
        z = rng.standard_normal(6)
        return np.concatenate([z[:3] * np.radians(_per_axis(self.rot_std_deg)), z[3:] * _per_axis(self.trans_std)])


def vision_odometry(
    prev: VisionFrame,
    curr: VisionFrame,
    noise: VisionNoise = VisionNoise(),
    covariance: np.ndarray | None = None,
) -> OdometryMeasurement:
    """Noisy relative pose between two frames, ``rel * exp(eps)``."""
    if prev.episode_id != curr.episode_id:
        raise ValueError(f"frames come from different episodes: {prev.episode_id!r} vs {curr.episode_id!r}")
    rel = compose(inverse(prev.true_pose), curr.true_pose)
    if not noise.is_zero:
        rel = compose(rel, exp(noise.sample(prev.step, curr.step)))
    cov = noise.covariance() if covariance is None else covariance
    return OdometryMeasurement(rel, cov, Source.VISION)
