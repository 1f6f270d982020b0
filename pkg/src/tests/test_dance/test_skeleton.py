import json

import numpy as np
import pytest

from src.core.errors import (CoverageError, DegenerateBone, FormatError, InvalidTopology,
                             MissingRoot, ShapeMismatch)
from src.dance.skeleton import (FrameIndexSets, PoseSequence, SkeletonTopology, femur_shin_angles,
                                forward_difference, kinetic_velocity, linevecs_to_positions,
                                load_topology, positions_to_linevecs, smpl24, smpl24_rest_positions)


def chain_topology(lengths=(1.0, 1.0, 1.0)):
    """ Four joints in a line: 0 -> 1 -> 2 -> 3. """
    return SkeletonTopology(
        joint_names=("a", "b", "c", "d"), parent=(-1, 0, 1, 2), bone_lengths=tuple(lengths),
        leg_chains=((0, 1, 2), (1, 2, 3)), foot_joints=(2, 3))


def two_joint_topology():
    return SkeletonTopology(joint_names=("p", "c"), parent=(-1, 0), bone_lengths=(1.0,),
                            leg_chains=((0, 1, 1), (0, 1, 1)), foot_joints=(0, 1))


def random_positions(rng, n_frames=10):
    rest = smpl24_rest_positions()
    jitter = rng.normal(scale=0.02, size=(n_frames,) + rest.shape)
    return rest[None] + jitter + rng.normal(size=(n_frames, 1, 3))


# --- topology ------------------------------------------------------------------

def test_smpl24_layout(topo):
    assert topo.n_joints == 24 and topo.n_bones == 23
    assert topo.root == 0
    assert topo.leg_bone_pairs() == [(3, 6), (4, 7)]
    assert topo.foot_joints == (10, 11)


def test_bone_adjacency_is_symmetric_row_normalized(topo):
    adjacency = topo.bone_adjacency()
    support = adjacency > 0
    assert np.array_equal(support, support.T), "adjacency support must be symmetric"
    assert np.all(np.diag(adjacency) > 0), "self-loops expected"
    np.testing.assert_allclose(adjacency.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("parent", [(-1, -1, 1, 2), (-1, 2, 1, 2), (-1, 0, 1, 7)])
def test_invalid_trees_rejected(parent):
    with pytest.raises(InvalidTopology):
        SkeletonTopology(joint_names=("a", "b", "c", "d"), parent=parent, bone_lengths=(1, 1, 1),
                         leg_chains=((0, 1, 2), (1, 2, 3)), foot_joints=(2, 3))


def test_zero_bone_length_rejected_at_construction():
    with pytest.raises(InvalidTopology):
        chain_topology((1.0, 0.0, 1.0))


def test_topology_file_round_trip(tmp_path, topo):
    path = tmp_path / "topo.json"
    path.write_text(json.dumps(topo.to_dict()))
    assert load_topology(str(path)) == topo


def test_malformed_topology_file(tmp_path):
    path = tmp_path / "topo.json"
    path.write_text(json.dumps({"joint_names": ["a"]}))
    with pytest.raises(FormatError):
        load_topology(str(path))


# --- line vectors ----------------------------------------------------------------

def test_axis_aligned_offset_gives_unit_vector():
    pose = positions_to_linevecs(np.array([[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]]), two_joint_topology())
    np.testing.assert_allclose(pose.line_vectors[0, 0], [0.0, 1.0, 0.0])


def test_three_four_five_normalization():
    pose = positions_to_linevecs(np.array([[[1.0, 1.0, 0.0], [4.0, 5.0, 0.0]]]), two_joint_topology())
    np.testing.assert_allclose(pose.line_vectors[0, 0], [0.6, 0.8, 0.0])
    np.testing.assert_allclose(pose.root[0], [1.0, 1.0, 0.0])


def test_degenerate_bone_names_frame_and_bone(topo, rng):
    positions = random_positions(rng, 4)
    positions[2, 5] = positions[2, topo.parent[5]]
    with pytest.raises(DegenerateBone) as info:
        positions_to_linevecs(positions, topo)
    assert info.value.frame == 2
    assert info.value.bone == topo.bone_of_joint(5)


def test_chain_forward_kinematics():
    topo = chain_topology()
    pose = PoseSequence(10.0, np.tile([0.0, 0.0, 1.0], (1, 3, 1)), np.zeros((1, 3)))
    positions = linevecs_to_positions(pose, topo)
    np.testing.assert_allclose(positions[0, :, 2], [0.0, 1.0, 2.0, 3.0])


def test_round_trip_positions(topo, rng):
    """ Positions survive the trip through line vectors when bone lengths match the capture. """
    positions = random_positions(rng)
    rigid = linevecs_to_positions(positions_to_linevecs(positions, topo), topo)
    pose = positions_to_linevecs(rigid, topo)

    assert np.max(np.abs(np.linalg.norm(pose.line_vectors, axis=-1) - 1.0)) < 1e-6
    assert np.max(np.abs(linevecs_to_positions(pose, topo) - rigid)) < 1e-6


def test_forward_kinematics_needs_root(topo, rng):
    pose = positions_to_linevecs(random_positions(rng, 3), topo)
    with pytest.raises(MissingRoot):
        linevecs_to_positions(PoseSequence(pose.fps, pose.line_vectors), topo)


def test_pose_sequence_rejects_non_unit_vectors():
    with pytest.raises(ShapeMismatch):
        PoseSequence(10.0, np.full((2, 3, 3), 0.5))


def test_pose_bound_to_wrong_skeleton(topo):
    pose = PoseSequence(10.0, np.tile([0.0, 1.0, 0.0], (2, 5, 1)))
    with pytest.raises(ShapeMismatch):
        pose.check_topology(topo)


# --- kinematics ------------------------------------------------------------------

def test_forward_difference_repeats_last_step():
    np.testing.assert_allclose(forward_difference(np.array([0.0, 1.0, 3.0])), [1.0, 2.0, 2.0])
    np.testing.assert_allclose(forward_difference(np.array([5.0])), [0.0])


def _leg_pose(topo, shin_direction):
    vectors = np.tile([0.0, -1.0, 0.0], (3, topo.n_bones, 1))
    (femur_l, shin_l), _ = topo.leg_bone_pairs()
    vectors[:, shin_l] = shin_direction
    return PoseSequence(10.0, vectors, np.zeros((3, 3)))


def test_femur_shin_straight_and_right_angle(topo):
    theta, omega = femur_shin_angles(_leg_pose(topo, [0.0, -1.0, 0.0]), topo)
    np.testing.assert_allclose(theta, 0.0, atol=1e-7)

    theta, omega = femur_shin_angles(_leg_pose(topo, [0.0, 0.0, 1.0]), topo)
    np.testing.assert_allclose(theta[:, 0], np.pi / 2)
    np.testing.assert_allclose(theta[:, 1], 0.0, atol=1e-7)
    np.testing.assert_allclose(omega, 0.0, atol=1e-12)


def test_femur_shin_range(topo, rng):
    pose = positions_to_linevecs(random_positions(rng, 20) * rng.uniform(0.5, 2.0), topo)
    theta, _ = femur_shin_angles(pose, topo)
    assert np.all((theta >= 0.0) & (theta <= np.pi))


def test_kinetic_velocity_frozen_and_single_joint():
    topo = chain_topology()
    frozen = PoseSequence(10.0, np.tile([0.0, 0.0, 1.0], (5, 3, 1)), np.zeros((5, 3)))
    np.testing.assert_allclose(kinetic_velocity(frozen, topo), 0.0)

    # Whole body translating 0.1 m per frame: every joint contributes 0.01 m^2.
    root = np.zeros((5, 3))
    root[:, 0] = 0.1 * np.arange(5)
    moving = PoseSequence(10.0, frozen.line_vectors, root)
    np.testing.assert_allclose(kinetic_velocity(moving, topo), 0.01 * 100)

    # Only the tip swings; the value is its squared step spread over J = 4 joints.
    vectors = np.tile([0.0, 0.0, 1.0], (5, 3, 1))
    vectors[1:, 2] = [0.6, 0.0, 0.8]
    pose = PoseSequence(10.0, vectors, np.zeros((5, 3)))
    step = np.sum((np.array([0.6, 0.0, 0.8]) - np.array([0.0, 0.0, 1.0])) ** 2)

    velocity = kinetic_velocity(pose, topo)
    assert velocity.shape == (5,)
    assert np.isclose(velocity[0], step * 100 / 4)
    assert np.all(velocity >= 0)


# --- frame index sets --------------------------------------------------------------

def test_default_window_counts():
    beats = [2, 9, 15, 18] + list(range(21, 70, 2))
    sets = FrameIndexSets.build(70, 20, beats, max_beats=20, max_seed_beats=3)

    assert len(sets.beats) == 20 and len(sets.seed_beats) == 3
    assert sets.seed_beats == (9, 15, 18)
    assert len(sets.repletion) == 70 - (17 + 20) == 33
    sets.check_partition()


def test_partition_holds_on_random_instances():
    """ |R| + |B - B_S| + T_S = T on a thousand random windows. """
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n_frames = int(rng.integers(2, 120))
        seed_len = int(rng.integers(1, n_frames + 1))
        beats = rng.choice(n_frames, size=int(rng.integers(0, n_frames + 1)), replace=False)
        sets = FrameIndexSets.build(n_frames, seed_len, beats,
                                    max_beats=int(rng.integers(1, 30)), max_seed_beats=3)
        sets.check_partition()
        assert len(sets.repletion) + len(sets.generated_beats) + seed_len == n_frames
        assert set(sets.seed_beats) == set(sets.beats) & set(sets.seed)
        assert not set(sets.repletion) & (set(sets.beats) | set(sets.seed))


@pytest.mark.parametrize("beats", [(5, 5), (9, 3), (70,), (-1,)])
def test_invalid_beats_rejected(beats):
    with pytest.raises(CoverageError):
        FrameIndexSets(70, 20, beats)


def test_without_beats_folds_generated_beats_into_repletion():
    sets = FrameIndexSets(30, 10, (4, 12, 20))
    bare = sets.without_beats()
    assert bare.beats == (4,)
    assert 12 in bare.repletion and 20 in bare.repletion
    bare.check_partition()
