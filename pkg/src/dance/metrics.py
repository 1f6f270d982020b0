# ==============================================================================
# GROOVESYNTH - EVALUATION METRICS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: FID (kinetic/geometric), diversity, beat alignment, foot contact,
#          latent dispersion diagnostics
# ==============================================================================

import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import argrelextrema
from scipy.spatial.distance import pdist

from src.core.errors import DegenerateCorpus, MissingRoot, NoKinematicBeats, ShapeMismatch
from src.dance.losses import SegmentPlan
from src.dance.skeleton import (PoseSequence, SkeletonTopology, forward_difference,
                                kinetic_velocity, linevecs_to_positions)

logger = logging.getLogger(__name__)

REPORT_NOTE = ("Kinetic and geometric features are fixed in-house extractors; "
               "absolute values are only comparable between runs of this tool.")

FOOT_RAISE_METERS = 0.10
HAND_FORWARD_METERS = 0.10

GEOMETRIC_FEATURES = tuple(
    [f"{side}_{name}" for side in ("left", "right") for name in (
        "hand_above_head", "hand_above_shoulder", "knee_bent_past_90", "elbow_bent_past_90",
        "foot_raised", "hand_crosses_midline", "hand_forward_of_chest")]
    + ["hands_within_shoulder_width", "feet_crossed"]
)


def _positions(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    if pose.root is None:
        raise MissingRoot("Metrics need a root trajectory")
    return linevecs_to_positions(pose, topo)


# =============================================================================
# FEATURES
# =============================================================================

def kinetic_features(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """ Per joint and axis, mean squared velocity x fps^2 over the clip (width 3J). """
    velocity = forward_difference(_positions(pose, topo)) * pose.fps
    return np.mean(velocity ** 2, axis=0).reshape(-1)


def _angle_past_90(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """ Bend between consecutive segments ``a`` then ``b`` exceeds 90 degrees. """
    return np.sum(a * b, axis=-1) < 0


def geometric_features(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """
    Time-averaged boolean relations, one column per GEOMETRIC_FEATURES entry.

    The lateral axis runs from the right hip to the left hip in the
    horizontal plane; forward is lateral x up.
    """
    p = _positions(pose, topo)
    j = topo.joint
    up_axis = topo.up_axis
    up = np.zeros(3)
    up[up_axis] = 1.0

    lateral = p[:, j("left_hip")] - p[:, j("right_hip")]
    lateral[:, up_axis] = 0.0
    lateral /= np.maximum(np.linalg.norm(lateral, axis=-1, keepdims=True), 1e-12)
    forward = np.cross(lateral, up)
    height = p[..., up_axis]

    def along(vectors, axis):
        return np.sum(vectors * axis, axis=-1)

    pelvis, chest = p[:, j("pelvis")], p[:, j("spine3")]
    columns = []
    for side, other in (("left", "right"), ("right", "left")):
        sign = 1.0 if side == "left" else -1.0
        wrist, elbow, shoulder = (p[:, j(f"{side}_{name}")] for name in ("wrist", "elbow", "shoulder"))
        hip, knee, ankle = (p[:, j(f"{side}_{name}")] for name in ("hip", "knee", "ankle"))
        other_ankle = p[:, j(f"{other}_ankle")]
        columns += [
            height[:, j(f"{side}_wrist")] > height[:, j("head")],
            height[:, j(f"{side}_wrist")] > height[:, j(f"{side}_shoulder")],
            _angle_past_90(knee - hip, ankle - knee),
            _angle_past_90(elbow - shoulder, wrist - elbow),
            ankle[:, up_axis] - other_ankle[:, up_axis] > FOOT_RAISE_METERS,
            sign * along(wrist - pelvis, lateral) < 0,
            along(wrist - chest, forward) > HAND_FORWARD_METERS,
        ]
    hand_gap = np.abs(along(p[:, j("left_wrist")] - p[:, j("right_wrist")], lateral))
    shoulder_gap = np.abs(along(p[:, j("left_shoulder")] - p[:, j("right_shoulder")], lateral))
    columns += [
        hand_gap < shoulder_gap,
        along(p[:, j("left_ankle")] - p[:, j("right_ankle")], lateral) < 0,
    ]
    return np.stack(columns, axis=-1).astype(np.float64).mean(axis=0)


# =============================================================================
# CORPUS STATISTICS
# =============================================================================

def _stack(features: Sequence[np.ndarray], what: str) -> np.ndarray:
    if len(features) < 2:
        raise DegenerateCorpus(f"{what} needs at least 2 feature vectors, got {len(features)}")
    widths = {np.asarray(f).shape for f in features}
    if len(widths) != 1:
        raise ShapeMismatch(f"{what}: feature widths differ {sorted(widths)}")
    return np.asarray(features, dtype=np.float64).reshape(len(features), -1)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fid(ref: Sequence[np.ndarray], gen: Sequence[np.ndarray], eps: float = 1e-6) -> float:
    """
    Frechet distance between Gaussian fits of two feature corpora.

    Covariances get ``eps * I``; the trace of (S1 S2)^(1/2) is taken as the
    trace of the square root of S1^(1/2) S2 S1^(1/2), whose negative
    eigenvalues are clipped to zero.
    """
    x, y = _stack(ref, "FID reference"), _stack(gen, "FID generated")
    if x.shape[1] != y.shape[1]:
        raise ShapeMismatch(f"FID corpora have widths {x.shape[1]} and {y.shape[1]}")

    identity = np.eye(x.shape[1]) * eps
    mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
    sigma_x = np.atleast_2d(np.cov(x, rowvar=False)) + identity
    sigma_y = np.atleast_2d(np.cov(y, rowvar=False)) + identity

    root_x = _psd_sqrt(sigma_x)
    cross = np.linalg.eigvalsh(root_x @ sigma_y @ root_x)
    trace_cross = float(np.sum(np.sqrt(np.clip(cross, 0.0, None))))
    value = float(np.sum((mu_x - mu_y) ** 2) + np.trace(sigma_x) + np.trace(sigma_y) - 2.0 * trace_cross)
    return max(value, 0.0)


def motion_diversity(gen: Sequence[np.ndarray]) -> float:
    """ Mean Euclidean distance over all unordered pairs. """
    return float(np.mean(pdist(_stack(gen, "Motion diversity"))))


# =============================================================================
# BEAT ALIGNMENT
# =============================================================================

def kinematic_beats(velocity: np.ndarray, smoothing: float = 0.0) -> np.ndarray:
    """ Strict local minima of a kinetic-velocity curve; NoKinematicBeats when there is none. """
    velocity = np.asarray(velocity, dtype=np.float64)
    if smoothing > 0:
        velocity = gaussian_filter1d(velocity, smoothing)
    minima = argrelextrema(velocity, np.less)[0]
    if not minima.size:
        raise NoKinematicBeats(f"Kinetic velocity over {velocity.size} frames has no interior minimum")
    return minima


def kinematic_beats_or_fallback(velocity: np.ndarray, smoothing: float = 0.0) -> tuple[np.ndarray, bool]:
    """
    Returns (frames, fallback); a curve without kinematic beats yields its
    single global-minimum frame with ``fallback=True``.
    """
    try:
        return kinematic_beats(velocity, smoothing), False
    except NoKinematicBeats as e:
        logger.warning(f"{e}; using the velocity minimum")
        return np.array([int(np.argmin(velocity))]), True


def bas_from_beats(music_beats: Sequence[int], motion_beats: Sequence[int], sigma: float = 3.0) -> float:
    """ Mean over music beats of exp(-d^2 / 2 sigma^2), d = distance to the nearest motion beat. """
    music = np.asarray(music_beats, dtype=np.float64)
    motion = np.asarray(motion_beats, dtype=np.float64)
    if music.size == 0:
        raise DegenerateCorpus("Beat alignment needs at least one music beat")
    if motion.size == 0:
        raise DegenerateCorpus("Beat alignment needs at least one motion beat")
    nearest = np.min((music[:, None] - motion[None, :]) ** 2, axis=1)
    return float(np.mean(np.exp(-nearest / (2.0 * sigma ** 2))))


def beat_alignment_score(pose: PoseSequence, topo: SkeletonTopology, music_beats: Sequence[int],
                         sigma: float = 3.0, smoothing: float = 0.0) -> tuple[float, bool]:
    """
    Returns
    -------
    (score in (0, 1], fallback flag); the flag is set when the motion had no
    kinematic beat and the global velocity minimum stood in for one.
    """
    if pose.n_frames < 3:
        raise ShapeMismatch(f"Beat alignment needs at least 3 frames, got {pose.n_frames}")
    if pose.root is None:
        raise MissingRoot("Beat alignment needs a root trajectory")
    beats, fallback = kinematic_beats_or_fallback(kinetic_velocity(pose, topo), smoothing)
    return bas_from_beats(music_beats, beats, sigma), fallback


# =============================================================================
# FOOT CONTACT
# =============================================================================

def pfc(pose: PoseSequence, topo: SkeletonTopology, eps: float = 1e-8) -> float:
    """
    Foot-sliding score: mean over frames of |a_com| * |v_left| * |v_right|,
    with |a_com| divided by its clip maximum.

    The COM is the unweighted joint mean; its downward acceleration is
    ignored (only horizontal and upward components count).
    """
    positions = _positions(pose, topo)
    if pose.n_frames < 3:
        return 0.0
    com = positions.mean(axis=1)
    velocity = np.diff(com, axis=0) * pose.fps
    accel = np.diff(velocity, axis=0) * pose.fps
    accel[:, topo.up_axis] = np.maximum(accel[:, topo.up_axis], 0.0)
    accel_norm = np.linalg.norm(accel, axis=-1)
    accel_norm = accel_norm / max(float(accel_norm.max()), eps)

    left, right = topo.foot_joints
    foot_speed = np.linalg.norm(np.diff(positions[:, [left, right]], axis=0), axis=-1) * pose.fps
    foot_speed = foot_speed[1:]
    return float(np.mean(accel_norm * foot_speed[:, 0] * foot_speed[:, 1]))


# =============================================================================
# LATENT DIAGNOSTICS
# =============================================================================

def _mean_abs_cossim(vectors: list[np.ndarray]) -> Optional[float]:
    if len(vectors) < 2:
        return None
    scores = []
    for a, b in combinations(vectors, 2):
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        scores.append(0.0 if denom <= 0 else abs(float(a @ b) / denom))
    return float(np.mean(scores))


def latent_dispersion_export(latents: dict, plan: SegmentPlan) -> dict:
    """
    Flattened latent segments per clip plus the mean intra-clip |cossim|.

    ``latents`` maps clip id -> (L x D_Z) latent sequence with L equal to the
    plan's sequence length. Clips with fewer than two segments report a
    null dispersion.
    """
    rows = []
    dispersion = {}
    for clip_id, z in latents.items():
        z = np.asarray(z, dtype=np.float64)
        if z.shape[0] != plan.sequence_length:
            raise ShapeMismatch(f"Clip {clip_id}: {z.shape[0]} latent frames, plan expects {plan.sequence_length}")
        vectors = []
        for index in range(max(plan.n_segments, 1)):
            start, stop = plan.span(index)
            vector = z[start:stop].reshape(-1)
            vectors.append(vector)
            rows.append({"clip": str(clip_id), "segment": index, "vector": vector.tolist()})
        dispersion[str(clip_id)] = _mean_abs_cossim(vectors)

    defined = [v for v in dispersion.values() if v is not None]
    return {
        "segment_length": plan.length,
        "slide": plan.slide,
        "clips": list(dispersion.keys()),
        "segments": rows,
        "dispersion": dispersion,
        "mean_dispersion": float(np.mean(defined)) if defined else None,
    }


# =============================================================================
# REPORT
# =============================================================================

@dataclass
class MetricsReport:
    fid_k: float
    fid_g: float
    md_k: float
    md_g: float
    bas: Optional[float]
    pfc: float
    n_ref: int
    n_gen: int
    bas_fallback_clips: int = 0
    note: str = field(default=REPORT_NOTE)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_corpus(ref: Sequence[PoseSequence], gen: Sequence[PoseSequence], topo: SkeletonTopology,
                    music_beats: Sequence[Optional[Sequence[int]]] = (), sigma: float = 3.0,
                    fid_eps: float = 1e-6, pfc_eps: float = 1e-8, smoothing: float = 0.0) -> MetricsReport:
    """
    Full report over a reference and a generated corpus.

    ``music_beats[i]`` belongs to ``gen[i]``; clips without beats are left
    out of the BAS average.
    """
    ref_k = [kinetic_features(p, topo) for p in ref]
    gen_k = [kinetic_features(p, topo) for p in gen]
    ref_g = [geometric_features(p, topo) for p in ref]
    gen_g = [geometric_features(p, topo) for p in gen]

    scores, fallbacks = [], 0
    for pose, beats in zip(gen, music_beats):
        if not beats:
            continue
        score, fallback = beat_alignment_score(pose, topo, beats, sigma, smoothing)
        scores.append(score)
        fallbacks += int(fallback)

    report = MetricsReport(
        fid_k=fid(ref_k, gen_k, fid_eps),
        fid_g=fid(ref_g, gen_g, fid_eps),
        md_k=motion_diversity(gen_k),
        md_g=motion_diversity(gen_g),
        bas=float(np.mean(scores)) if scores else None,
        pfc=float(np.mean([pfc(p, topo, pfc_eps) for p in gen])),
        n_ref=len(ref),
        n_gen=len(gen),
        bas_fallback_clips=fallbacks,
    )
    logger.info(f"Evaluation: FIDk={report.fid_k:.3f} FIDg={report.fid_g:.3f} "
                f"MDk={report.md_k:.3f} MDg={report.md_g:.3f} BAS={report.bas} PFC={report.pfc:.4f}")
    return report
