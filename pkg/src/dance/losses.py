# ==============================================================================
# GROOVESYNTH - TRAINING OBJECTIVES
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Pose/leg/root/adversarial losses and the temporal contrastive loss
# ==============================================================================

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from src.core.errors import (ConfigError, IndexOutOfRange, NonFiniteLoss, ShapeMismatch,
                             TooFewSegments)
from src.dance.skeleton import SkeletonTopology

logger = logging.getLogger(__name__)

MSE = "mse"
SMOOTH_L1 = "smooth_l1"
ARCCOS_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    pm: float = 5.0
    lm: float = 3e-3
    gen: float = 5e-2
    rtc: float = 0.1
    pose: float = 1.0
    vel: float = 1.0
    leg_pose: float = 0.3
    leg_vel: float = 0.7
    smooth_l1_beta: float = 1.0
    log_clamp: float = 1e-7

    def __post_init__(self):
        negative = [k for k, v in self.__dict__.items() if v < 0]
        if negative:
            raise ConfigError(f"Loss weights must be non-negative: {negative}")

    @classmethod
    def from_settings(cls, settings: dict) -> "LossWeights":
        losses = settings.get("losses", {})
        return cls(**{k: float(losses[k]) for k in cls.__dataclass_fields__ if k in losses})


@dataclass
class LossComponents:
    """ Unweighted loss terms of one step (tensors or floats). """

    pm: object = 0.0
    lm: object = 0.0
    gen: object = 0.0
    rtc: object = 0.0


def forward_difference(x: torch.Tensor, dim: int) -> torch.Tensor:
    """ Torch twin of ``skeleton.forward_difference``. """
    length = x.shape[dim]
    if length < 2:
        return torch.zeros_like(x)
    diff = torch.diff(x, dim=dim)
    return torch.cat([diff, diff.narrow(dim, length - 2, 1)], dim=dim)


def _distance(a: torch.Tensor, b: torch.Tensor, kind: str, beta: float) -> torch.Tensor:
    if kind == MSE:
        return F.mse_loss(a, b)
    if kind == SMOOTH_L1:
        return F.smooth_l1_loss(a, b, beta=beta)
    raise ConfigError(f"Unknown distance kind '{kind}'")


def _same_shape(gt: torch.Tensor, pred: torch.Tensor, what: str) -> None:
    if gt.shape != pred.shape:
        raise ShapeMismatch(f"{what}: ground truth {tuple(gt.shape)} vs prediction {tuple(pred.shape)}")


def pose_motion_loss(gt: torch.Tensor, pred: torch.Tensor, kind: str = MSE,
                     weights: LossWeights = LossWeights()) -> torch.Tensor:
    """
    Pose term plus frame-velocity term on (..., L, J-1, 3) sequences.

    BPS uses MSE for both terms, RPS uses smooth-l1.
    """
    _same_shape(gt, pred, "pose motion loss")
    frame_dim = gt.dim() - 3
    pose_term = _distance(pred, gt, kind, weights.smooth_l1_beta)
    vel_term = _distance(forward_difference(pred, frame_dim), forward_difference(gt, frame_dim),
                         kind, weights.smooth_l1_beta)
    return weights.pose * pose_term + weights.vel * vel_term


def femur_shin_angles(poses: torch.Tensor, topo: SkeletonTopology) -> torch.Tensor:
    """
    (..., L, J-1, 3) -> (..., L, 2) knee angles.

    Values are exact (a straight knee is 0). Only the gradient path sees the
    cosine clamped away from +-1, where arccos has an infinite slope.
    """
    angles = []
    for femur, shin in topo.leg_bone_pairs():
        cosine = torch.sum(poses[..., femur, :] * poses[..., shin, :], dim=-1)
        soft = torch.arccos(cosine.clamp(-1 + ARCCOS_CLAMP, 1 - ARCCOS_CLAMP))
        exact = torch.arccos(cosine.detach().clamp(-1.0, 1.0))
        angles.append(soft + (exact - soft).detach())
    return torch.stack(angles, dim=-1)


def leg_motion_loss(gt: torch.Tensor, pred: torch.Tensor, topo: SkeletonTopology,
                    weights: LossWeights = LossWeights()) -> torch.Tensor:
    """
    Smooth-l1 on femur/shin angles and their frame velocities, averaged over
    frames and summed over the two legs.
    """
    _same_shape(gt, pred, "leg motion loss")
    theta_gt, theta_pred = femur_shin_angles(gt, topo), femur_shin_angles(pred, topo)
    frame_dim = theta_gt.dim() - 2
    omega_gt, omega_pred = forward_difference(theta_gt, frame_dim), forward_difference(theta_pred, frame_dim)

    beta = weights.smooth_l1_beta
    total = gt.new_zeros(())
    for leg in range(theta_gt.shape[-1]):
        total = total + weights.leg_pose * F.smooth_l1_loss(theta_pred[..., leg], theta_gt[..., leg], beta=beta)
        total = total + weights.leg_vel * F.smooth_l1_loss(omega_pred[..., leg], omega_gt[..., leg], beta=beta)
    return total


def adversarial_from_probs(p_real: torch.Tensor, p_fake: torch.Tensor,
                           clamp: float = 1e-7) -> tuple[torch.Tensor, torch.Tensor]:
    """ (L_gen, L_disc) from discriminator probabilities; logs clamped at ``clamp``. """
    def log(p):
        return torch.log(p.clamp(min=clamp))

    gen = -torch.mean(log(p_fake))
    disc = -torch.mean(log(p_real)) - torch.mean(log(1.0 - p_fake))
    return gen, disc


def adversarial_losses(disc, real: torch.Tensor, fake: torch.Tensor,
                       clamp: float = 1e-7) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Generator and discriminator losses for batched (N, L, J-1, 3) sequences.

    Detach ``fake`` before a discriminator update; keep it attached for the
    generator update.
    """
    return adversarial_from_probs(disc(real), disc(fake), clamp)


def root_translation_loss(gt: torch.Tensor, pred: torch.Tensor,
                          weights: LossWeights = LossWeights()) -> torch.Tensor:
    """ MSE on (L, 3) root positions plus smooth-l1 on their frame velocities. """
    _same_shape(gt, pred, "root translation loss")
    frame_dim = gt.dim() - 2
    return (weights.pose * F.mse_loss(pred, gt)
            + weights.vel * F.smooth_l1_loss(forward_difference(pred, frame_dim),
                                            forward_difference(gt, frame_dim), beta=weights.smooth_l1_beta))


# =============================================================================
# RANDOMIZED TEMPORAL CONTRAST
# =============================================================================

@dataclass(frozen=True)
class SegmentPlan:
    """ Segments of ``length`` frames every ``slide`` frames over a ``sequence_length`` sequence. """

    length: int
    slide: int
    sequence_length: int

    def __post_init__(self):
        if self.slide < 1:
            raise ConfigError(f"Segment slide must be >= 1, got {self.slide}")
        if not 1 <= self.length <= self.sequence_length:
            raise TooFewSegments(
                f"Segment length {self.length} does not fit a {self.sequence_length}-frame sequence")

    @classmethod
    def from_settings(cls, settings: dict, sequence_length: int) -> "SegmentPlan":
        rtc = settings["rtc"]
        return cls(int(rtc["segment_length"]), int(rtc["slide"]), sequence_length)

    @property
    def n_segments(self) -> int:
        return math.ceil((self.sequence_length - self.length) / self.slide)

    def span(self, index: int) -> tuple[int, int]:
        start = index * self.slide
        return start, start + self.length

    def overlaps(self, i: int, j: int) -> bool:
        return abs(i - j) * self.slide < self.length

    def partners(self, index: int) -> list[int]:
        return [j for j in range(self.n_segments) if not self.overlaps(index, j)]

    def eligible(self) -> list[int]:
        """ Segments with at least one non-overlapping peer. """
        return [i for i in range(self.n_segments) if self.partners(i)]


def _abs_cossim(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return 0.0 if denom <= 0 else abs(float(np.dot(a, b)) / denom)


def select_contrast_segment(seq, plan: SegmentPlan, rng: np.random.Generator,
                            fixed_reference: bool = False) -> tuple[int, int]:
    """
    Draw a reference segment ``n`` and its most dissimilar non-overlapping
    peer.

    ``n`` is uniform over segments that have a non-overlapping peer (or pinned
    to segment 0 with ``fixed_reference``). The peer minimizes the absolute
    cosine similarity of the flattened segments (frame, bone, coordinate
    order); ties go to the smallest index. Selection is a discrete choice and
    never carries gradients.
    """
    if isinstance(seq, torch.Tensor):
        seq = seq.detach().cpu().numpy()
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] != plan.sequence_length:
        raise ShapeMismatch(f"Sequence of {seq.shape[0]} frames for a {plan.sequence_length}-frame plan")

    eligible = plan.eligible()
    if plan.n_segments < 2 or not eligible:
        raise TooFewSegments(
            f"{plan.n_segments} segments of {plan.length} frames (slide {plan.slide}) "
            f"over {plan.sequence_length} frames leave no non-overlapping pair")
    if fixed_reference:
        if 0 not in eligible:
            raise TooFewSegments("Segment 0 has no non-overlapping peer")
        n = 0
    else:
        n = eligible[int(rng.integers(len(eligible)))]

    def flat(index):
        start, stop = plan.span(index)
        return seq[start:stop].reshape(-1)

    reference = flat(n)
    partners = plan.partners(n)
    scores = [_abs_cossim(reference, flat(j)) for j in partners]
    return n, partners[int(np.argmin(scores))]


def rtc_loss(latents: torch.Tensor, n: int, n_bar: int, plan: SegmentPlan) -> torch.Tensor:
    """ |cossim| between two flattened latent segments of a (L, D_Z) sequence. """
    if latents.shape[0] != plan.sequence_length:
        raise IndexOutOfRange(f"Latents span {latents.shape[0]} frames, plan expects {plan.sequence_length}")
    for index in (n, n_bar):
        if not 0 <= index < plan.n_segments:
            raise IndexOutOfRange(f"Segment {index} outside [0, {plan.n_segments})")
    (s0, e0), (s1, e1) = plan.span(n), plan.span(n_bar)
    a, b = latents[s0:e0].reshape(-1), latents[s1:e1].reshape(-1)
    return torch.abs(F.cosine_similarity(a, b, dim=0, eps=1e-8))


# =============================================================================
# TOTALS
# =============================================================================

def _as_float(value) -> float:
    return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)


def total_losses(components: LossComponents, weights: LossWeights, stage: str = "train",
                 epoch: int = -1, batch: int = -1) -> tuple:
    """
    Weighted totals (L_BPS, L_RPSGen).

    L_BPS = pm*L_pm + lm*L_lm; L_RPSGen adds gen*L_gen + rtc*L_rtc.
    Raises NonFiniteLoss when any component is NaN or infinite.
    """
    for name in ("pm", "lm", "gen", "rtc"):
        value = _as_float(getattr(components, name))
        if not math.isfinite(value):
            raise NonFiniteLoss(f"{stage}/{name}", epoch, batch, value)
    bps_total = weights.pm * components.pm + weights.lm * components.lm
    rps_total = bps_total + weights.gen * components.gen + weights.rtc * components.rtc
    return bps_total, rps_total


def component_record(components: LossComponents, weights: LossWeights,
                     extra: Optional[dict] = None) -> dict:
    """ Plain-float log record of the components and both totals. """
    bps_total, rps_total = total_losses(components, weights)
    record = {name: _as_float(getattr(components, name)) for name in ("pm", "lm", "gen", "rtc")}
    record.update(bps_total=_as_float(bps_total), rps_total=_as_float(rps_total))
    record.update(extra or {})
    return record
