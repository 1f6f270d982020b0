import math

import numpy as np
import pytest
import torch

from src.core.errors import IndexOutOfRange, NonFiniteLoss, ShapeMismatch, TooFewSegments
from src.dance.losses import (MSE, SMOOTH_L1, LossComponents, LossWeights, SegmentPlan,
                              adversarial_from_probs, adversarial_losses, component_record,
                              femur_shin_angles, forward_difference, leg_motion_loss, pose_motion_loss,
                              root_translation_loss, rtc_loss, select_contrast_segment, total_losses)
from src.dance.skeleton import normalize_rows

GRAD_TOLERANCE = dict(eps=1e-5, atol=1e-7, rtol=1e-4)


def unit_poses(rng, *shape):
    return torch.as_tensor(normalize_rows(rng.standard_normal(shape + (3,))))


# --- pose / leg / root ----------------------------------------------------------------

def test_forward_difference_matches_numpy_twin():
    x = torch.tensor([[0.0, 1.0, 4.0, 9.0]])
    assert torch.equal(forward_difference(x, 1), torch.tensor([[1.0, 3.0, 5.0, 5.0]]))


@pytest.mark.parametrize("kind", [MSE, SMOOTH_L1])
def test_pose_motion_identity(rng, kind):
    gt = unit_poses(rng, 6, 23)
    assert float(pose_motion_loss(gt, gt.clone(), kind)) == 0.0


def test_pose_motion_constant_offset():
    gt = torch.zeros(5, 4, 3, dtype=torch.float64)
    assert float(pose_motion_loss(gt, gt + 0.3, MSE)) == pytest.approx(0.09, abs=1e-12)


def test_pose_motion_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        pose_motion_loss(unit_poses(rng, 5, 23), unit_poses(rng, 4, 23))


@pytest.mark.parametrize("kind", [MSE, SMOOTH_L1])
def test_pose_motion_gradcheck(rng, kind):
    gt = unit_poses(rng, 4, 2)
    pred = (gt + 0.3 * torch.as_tensor(rng.standard_normal(gt.shape))).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda p: pose_motion_loss(gt, p, kind), (pred,), **GRAD_TOLERANCE)


def _straight_legs(topo, n_frames=1):
    return torch.tensor([0.0, -1.0, 0.0], dtype=torch.float64).repeat(n_frames, topo.n_bones, 1)


def test_leg_loss_straight_versus_right_angle(topo):
    gt = _straight_legs(topo)
    pred = gt.clone()
    (_, shin), _ = topo.leg_bone_pairs()
    pred[0, shin] = torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64)

    loss = leg_motion_loss(gt, pred, topo)

    # Smooth-l1 at |x| = pi/2 with beta 1.
    assert float(loss) == pytest.approx(0.3 * (math.pi / 2 - 0.5), abs=1e-12)


def test_straight_knee_angle_is_exactly_zero(topo):
    straight = _straight_legs(topo, n_frames=3).requires_grad_(True)
    angles = femur_shin_angles(straight, topo)

    assert torch.equal(angles.detach(), torch.zeros(3, 2, dtype=torch.float64))
    angles.sum().backward()
    assert torch.isfinite(straight.grad).all()


def test_leg_loss_identity_and_arm_locality(topo, rng):
    gt = unit_poses(rng, 5, topo.n_bones).double()
    assert float(leg_motion_loss(gt, gt.clone(), topo)) == 0.0

    arms = gt.clone()
    for joint in ("left_elbow", "right_wrist", "head"):
        arms[:, topo.bone_of_joint(topo.joint(joint))] *= -1.0
    assert float(leg_motion_loss(gt, arms, topo)) == 0.0


def test_leg_loss_gradcheck(topo, rng):
    gt = unit_poses(rng, 4, topo.n_bones)
    pred = unit_poses(rng, 4, topo.n_bones).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda p: leg_motion_loss(gt, p, topo), (pred,), **GRAD_TOLERANCE)


def test_root_translation_offset():
    gt = torch.zeros(10, 3, dtype=torch.float64)
    pred = gt + torch.tensor([0.1, 0.0, 0.0], dtype=torch.float64)
    assert float(root_translation_loss(gt, gt)) == 0.0
    assert float(root_translation_loss(gt, pred)) == pytest.approx(0.01 / 3, abs=1e-12)


def test_root_translation_gradcheck(rng):
    gt = torch.as_tensor(rng.standard_normal((6, 3)))
    pred = torch.as_tensor(rng.standard_normal((6, 3)) * 0.3).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda p: root_translation_loss(gt, p), (pred,), **GRAD_TOLERANCE)


# --- adversarial ---------------------------------------------------------------------

def test_adversarial_at_one_half():
    half = torch.full((4,), 0.5, dtype=torch.float64)
    gen, disc = adversarial_from_probs(half, half)
    assert float(gen) == pytest.approx(0.6931, abs=1e-4)
    assert float(disc) == pytest.approx(1.3863, abs=1e-4)


def test_perfect_discriminator_limit():
    gen, disc = adversarial_from_probs(torch.ones(3, dtype=torch.float64), torch.zeros(3, dtype=torch.float64))
    assert float(disc) == pytest.approx(0.0, abs=1e-12)
    assert float(gen) == pytest.approx(-math.log(1e-7))


def test_disc_loss_non_negative(rng):
    for _ in range(20):
        p_real, p_fake = (torch.as_tensor(rng.uniform(0, 1, 8)) for _ in range(2))
        assert float(adversarial_from_probs(p_real, p_fake)[1]) >= 0.0


def test_adversarial_losses_call_the_discriminator():
    gen, disc = adversarial_losses(lambda x: torch.sigmoid(x.sum(dim=(1, 2, 3))),
                                   torch.zeros(2, 3, 4, 3), torch.zeros(2, 3, 4, 3))
    assert float(gen) == pytest.approx(math.log(2), abs=1e-6)


def test_adversarial_gradcheck(rng):
    p_real = torch.as_tensor(rng.uniform(0.1, 0.9, 5)).requires_grad_(True)
    p_fake = torch.as_tensor(rng.uniform(0.1, 0.9, 5)).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda r, f: adversarial_from_probs(r, f), (p_real, p_fake), **GRAD_TOLERANCE)


# --- segment plans and selection ---------------------------------------------------------

def _intervals_intersect(plan, i, j):
    (a0, a1), (b0, b1) = plan.span(i), plan.span(j)
    return max(a0, b0) < min(a1, b1)


def test_default_plan_over_a_window():
    plan = SegmentPlan(25, 5, 70)
    assert plan.n_segments == 9
    assert plan.span(8) == (40, 65)
    assert len(plan.eligible()) >= 2


def test_repletion_only_plan_has_no_pair():
    plan = SegmentPlan(25, 5, 33)
    assert plan.n_segments == 2
    with pytest.raises(TooFewSegments):
        select_contrast_segment(np.ones((33, 4, 3)), plan, np.random.default_rng(0))


def test_overlap_rule_matches_interval_intersection():
    rng = np.random.default_rng(5)
    for _ in range(100):
        length, slide = int(rng.integers(1, 12)), int(rng.integers(1, 8))
        plan = SegmentPlan(length, slide, length + int(rng.integers(1, 60)))
        for i in range(plan.n_segments):
            for j in range(plan.n_segments):
                assert plan.overlaps(i, j) == _intervals_intersect(plan, i, j)


def test_orthogonal_toy_instance():
    plan = SegmentPlan(2, 1, 5)
    seq = np.zeros((5, 1, 2))
    seq[0:2, 0] = [1.0, 0.0]
    seq[2:4, 0] = [0.0, 1.0]
    seq[4, 0] = [1.0, 1.0]
    assert select_contrast_segment(seq, plan, np.random.default_rng(0), fixed_reference=True) == (0, 2)


def _brute_force(seq, plan, n):
    def flat(index):
        start, stop = plan.span(index)
        return seq[start:stop].reshape(-1)

    best, best_score = None, None
    for j in range(plan.n_segments):
        if _intervals_intersect(plan, n, j):
            continue
        a, b = flat(n), flat(j)
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        score = 0.0 if denom == 0 else abs(np.dot(a, b)) / denom
        if best_score is None or score < best_score:
            best, best_score = j, score
    return best


def test_selection_matches_brute_force():
    rng = np.random.default_rng(11)
    checked = 0
    for trial in range(200):
        length, slide = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        plan = SegmentPlan(length, slide, length + slide * int(rng.integers(2, 12)))
        eligible = [i for i in range(plan.n_segments)
                    if any(not _intervals_intersect(plan, i, j) for j in range(plan.n_segments))]
        if plan.n_segments < 2 or not eligible:
            continue
        seq = rng.standard_normal((plan.sequence_length, 2, 3))
        if trial % 4 == 0:
            seq[:] = 1.0  # every pair ties; the smallest index must win

        n, n_bar = select_contrast_segment(seq, plan, np.random.default_rng(trial))
        assert n == eligible[int(np.random.default_rng(trial).integers(len(eligible)))]
        assert n_bar == _brute_force(seq, plan, n)
        checked += 1
    assert checked > 100


def test_reference_segment_is_uniform():
    plan = SegmentPlan(2, 1, 8)
    seq = np.random.default_rng(0).standard_normal((8, 1, 3))
    rng = np.random.default_rng(42)
    counts = np.zeros(plan.n_segments)
    for _ in range(10_000):
        counts[select_contrast_segment(seq, plan, rng)[0]] += 1
    assert plan.n_segments == len(plan.eligible()) == 6
    np.testing.assert_allclose(counts / counts.sum(), 1 / 6, atol=0.02)


def test_selection_is_deterministic_for_a_seed(rng):
    plan = SegmentPlan(25, 5, 70)
    seq = rng.standard_normal((70, 23, 3))
    picks = [select_contrast_segment(seq, plan, np.random.default_rng(9)) for _ in range(3)]
    assert picks[0] == picks[1] == picks[2]


# --- RTC loss -------------------------------------------------------------------------

def test_rtc_identical_and_orthogonal_segments():
    plan = SegmentPlan(2, 2, 5)
    same = torch.tensor([[1.0, 2.0], [3.0, 4.0], [1.0, 2.0], [3.0, 4.0], [9.0, 9.0]], dtype=torch.float64)
    assert float(rtc_loss(same, 0, 1, plan)) == pytest.approx(1.0)
    orthogonal = torch.tensor([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0], [5.0, 5.0]], dtype=torch.float64)
    assert float(rtc_loss(orthogonal, 0, 1, plan)) == pytest.approx(0.0, abs=1e-12)


def test_rtc_bad_indices():
    plan = SegmentPlan(2, 2, 5)
    assert plan.n_segments == 2
    with pytest.raises(IndexOutOfRange):
        rtc_loss(torch.zeros(5, 2), 0, 2, plan)
    with pytest.raises(IndexOutOfRange):
        rtc_loss(torch.zeros(6, 2), 0, 1, plan)


def test_rtc_gradcheck(rng):
    plan = SegmentPlan(2, 2, 5)
    latents = torch.as_tensor(rng.standard_normal((5, 2))).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda z: rtc_loss(z, 0, 1, plan), (latents,), **GRAD_TOLERANCE)


# --- totals ---------------------------------------------------------------------------------

def test_default_weight_totals():
    bps_total, rps_total = total_losses(LossComponents(1.0, 1.0, 1.0, 0.0), LossWeights())
    assert bps_total == pytest.approx(5.003)
    assert rps_total == pytest.approx(5.053)


def test_zero_components_and_gen_excluded_from_bps():
    assert total_losses(LossComponents(), LossWeights()) == (0.0, 0.0)
    bps_total, _ = total_losses(LossComponents(0.0, 0.0, 123.0, 0.0), LossWeights())
    assert bps_total == 0.0


def test_non_finite_component_raises():
    with pytest.raises(NonFiniteLoss):
        total_losses(LossComponents(pm=torch.tensor(float("nan"))), LossWeights(), "bps", 3, 1)


def test_record_recomposes_totals():
    weights = LossWeights()
    record = component_record(LossComponents(0.2, 1.5, 0.7, 0.4), weights, {"disc": 1.1})
    assert record["bps_total"] == pytest.approx(weights.pm * 0.2 + weights.lm * 1.5, abs=1e-9)
    assert record["rps_total"] == pytest.approx(record["bps_total"] + weights.gen * 0.7 + weights.rtc * 0.4, abs=1e-9)
    assert record["disc"] == 1.1
