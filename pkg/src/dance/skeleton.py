# ==============================================================================
# GROOVESYNTH - SKELETON
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Skeleton topology, line-vector poses, frame index sets, kinematics
# ==============================================================================

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from src.core.errors import (CoverageError, DegenerateBone, FormatError, InvalidTopology,
                             MissingRoot, ShapeMismatch)

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-4
MIN_BONE_LENGTH = 1e-8

# 24-joint SMPL tree (AIST++ convention). Rest joint positions in meters, y-up,
# arms out (T-pose); bone lengths and rest directions derive from them.
SMPL24_JOINTS = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
]
SMPL24_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
SMPL24_REST = [
    [-0.0018, -0.2233, 0.0282], [0.0695, -0.3127, 0.0259], [-0.0677, -0.3147, 0.0214],
    [-0.0025, -0.1155, 0.0023], [0.1040, -0.6898, 0.0169], [-0.1060, -0.6961, 0.0150],
    [0.0055, 0.0209, 0.0335], [0.0883, -1.0876, -0.0267], [-0.0919, -1.0941, -0.0279],
    [0.0013, 0.0740, 0.0358], [0.1190, -1.1430, 0.0960], [-0.1208, -1.1462, 0.1001],
    [-0.0016, 0.2949, -0.0117], [0.0779, 0.2005, -0.0076], [-0.0787, 0.2002, -0.0107],
    [0.0043, 0.3577, 0.0494], [0.1636, 0.2352, -0.0186], [-0.1637, 0.2341, -0.0231],
    [0.4158, 0.2208, -0.0449], [-0.4151, 0.2243, -0.0455], [0.6792, 0.2311, -0.0471],
    [-0.6848, 0.2333, -0.0531], [0.7666, 0.2210, -0.0624], [-0.7706, 0.2219, -0.0659],
]


# =============================================================================
# TOPOLOGY
# =============================================================================

@dataclass(frozen=True)
class SkeletonTopology:
    """
    Joint tree with one bone per non-root joint.

    Bone ``b`` connects ``bone_parents[b]`` to ``bone_children[b]``; bones are
    ordered by child joint index, so for the SMPL tree bone ``b`` ends at
    joint ``b + 1``.

    Parameters
    ----------
    joint_names : list of str
        J joint identifiers.
    parent : list of int
        Parent index per joint, -1 for the root.
    bone_lengths : sequence of float
        J-1 positive lengths in meters, in bone order.
    leg_chains : pair of (hip, knee, ankle) joint triples
    foot_joints : pair of joint indices (left, right)
    rest_directions : (J-1) x 3 unit vectors, optional
        Rest-pose bone directions, used by BVH export.
    up_axis : int
        Vertical world axis (1 = y).
    """

    joint_names: tuple
    parent: tuple
    bone_lengths: tuple
    leg_chains: tuple
    foot_joints: tuple
    rest_directions: Optional[tuple] = None
    up_axis: int = 1
    bone_children: tuple = field(init=False, repr=False)
    bone_parents: tuple = field(init=False, repr=False)
    order: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n_joints = len(self.joint_names)
        if len(self.parent) != n_joints:
            raise InvalidTopology(f"{len(self.parent)} parents for {n_joints} joints")

        roots = [j for j, p in enumerate(self.parent) if p == -1]
        if len(roots) != 1:
            raise InvalidTopology(f"Expected exactly one root, found {len(roots)}")
        if any(p < -1 or p >= n_joints for p in self.parent):
            raise InvalidTopology("Parent index out of range")

        children = [[] for _ in range(n_joints)]
        for j, p in enumerate(self.parent):
            if p >= 0:
                children[p].append(j)

        # Breadth-first from the root: a cycle or a detached joint never gets visited.
        order = []
        pending = deque(roots)
        while pending:
            j = pending.popleft()
            order.append(j)
            pending.extend(children[j])
        if len(order) != n_joints:
            raise InvalidTopology("Parent array does not encode a single rooted tree")

        bone_children = tuple(j for j in range(n_joints) if self.parent[j] >= 0)
        if len(self.bone_lengths) != len(bone_children):
            raise InvalidTopology(
                f"{len(self.bone_lengths)} bone lengths for {len(bone_children)} bones")
        if any(not (length > 0) for length in self.bone_lengths):
            raise InvalidTopology("All bone lengths must be positive")

        for chain in self.leg_chains:
            if len(chain) != 3 or any(not 0 <= j < n_joints for j in chain):
                raise InvalidTopology(f"Invalid leg chain {chain}")
        if len(self.leg_chains) != 2 or len(self.foot_joints) != 2:
            raise InvalidTopology("Exactly two leg chains and two foot joints are required")
        if any(not 0 <= j < n_joints for j in self.foot_joints):
            raise InvalidTopology(f"Invalid foot joints {self.foot_joints}")

        object.__setattr__(self, "bone_children", bone_children)
        object.__setattr__(self, "bone_parents", tuple(self.parent[j] for j in bone_children))
        object.__setattr__(self, "order", tuple(order))

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_bones(self) -> int:
        return len(self.bone_children)

    @property
    def root(self) -> int:
        return self.order[0]

    def bone_of_joint(self, joint: int) -> int:
        """ Index of the bone that ends at ``joint``. """
        try:
            return self.bone_children.index(joint)
        except ValueError:
            raise InvalidTopology(f"Joint {joint} is the root and has no bone") from None

    def joint(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise InvalidTopology(f"Skeleton has no joint named '{name}'") from None

    def leg_bone_pairs(self) -> list[tuple[int, int]]:
        """ (femur, shin) bone indices for the left and right legs. """
        return [(self.bone_of_joint(knee), self.bone_of_joint(ankle))
                for _, knee, ankle in self.leg_chains]

    def bone_adjacency(self) -> np.ndarray:
        """
        Row-normalized bone graph with self-loops.

        Two bones are adjacent when they share a joint (parent-child chains and
        siblings under a common joint).
        """
        n = self.n_bones
        adjacency = np.eye(n)
        for a in range(n):
            for b in range(a + 1, n):
                ends_a = {self.bone_parents[a], self.bone_children[a]}
                ends_b = {self.bone_parents[b], self.bone_children[b]}
                if ends_a & ends_b:
                    adjacency[a, b] = adjacency[b, a] = 1.0
        return adjacency / adjacency.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict[str, Any]:
        return {
            "joint_names": list(self.joint_names),
            "parents": list(self.parent),
            "bone_lengths": [float(x) for x in self.bone_lengths],
            "leg_chains": [list(c) for c in self.leg_chains],
            "foot_joints": list(self.foot_joints),
            "rest_directions": None if self.rest_directions is None
            else [list(d) for d in self.rest_directions],
            "up_axis": self.up_axis,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SkeletonTopology":
        try:
            rest = data.get("rest_directions")
            return cls(
                joint_names=tuple(data["joint_names"]),
                parent=tuple(int(p) for p in data["parents"]),
                bone_lengths=tuple(float(x) for x in data["bone_lengths"]),
                leg_chains=tuple(tuple(int(j) for j in c) for c in data["leg_chains"]),
                foot_joints=tuple(int(j) for j in data["foot_joints"]),
                rest_directions=None if rest is None else tuple(tuple(float(v) for v in d) for d in rest),
                up_axis=int(data.get("up_axis", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Malformed topology description: {e}") from e

    def with_bone_lengths(self, lengths: Sequence[float]) -> "SkeletonTopology":
        data = self.to_dict()
        data["bone_lengths"] = [float(x) for x in lengths]
        return SkeletonTopology.from_dict(data)


def smpl24() -> SkeletonTopology:
    """ The default 24-joint SMPL-style skeleton. """
    rest = np.asarray(SMPL24_REST)
    parents = SMPL24_PARENTS
    offsets = np.array([rest[j] - rest[parents[j]] for j in range(1, len(parents))])
    lengths = np.linalg.norm(offsets, axis=1)
    return SkeletonTopology(
        joint_names=tuple(SMPL24_JOINTS),
        parent=tuple(parents),
        bone_lengths=tuple(float(x) for x in lengths),
        leg_chains=((1, 4, 7), (2, 5, 8)),
        foot_joints=(10, 11),
        rest_directions=tuple(tuple(float(v) for v in d) for d in offsets / lengths[:, None]),
        up_axis=1,
    )


def smpl24_rest_positions() -> np.ndarray:
    return np.asarray(SMPL24_REST, dtype=np.float64)


def load_topology(path: Optional[str] = None) -> SkeletonTopology:
    """ Topology from a JSON file, or the SMPL default when ``path`` is None. """
    if path is None:
        return smpl24()
    try:
        with open(path, "r") as f:
            return SkeletonTopology.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"Cannot read topology file {path}: {e}") from e


# =============================================================================
# POSE SEQUENCES
# =============================================================================

@dataclass(frozen=True, eq=False)
class PoseSequence:
    """
    Per-frame unit bone directions, optionally with a world root trajectory.

    line_vectors : T x (J-1) x 3
    root : T x 3 (meters) or None
    """

    fps: float
    line_vectors: np.ndarray
    root: Optional[np.ndarray] = None

    def __post_init__(self):
        vectors = np.asarray(self.line_vectors, dtype=np.float64)
        if vectors.ndim != 3 or vectors.shape[2] != 3 or vectors.shape[0] < 1:
            raise ShapeMismatch(f"line_vectors must be T x (J-1) x 3 with T >= 1, got {vectors.shape}")
        norms = np.linalg.norm(vectors, axis=-1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > UNIT_NORM_TOLERANCE:
            raise ShapeMismatch(f"Line vectors are not unit length (max deviation {worst:.2e})")
        object.__setattr__(self, "line_vectors", vectors)

        if self.root is not None:
            root = np.asarray(self.root, dtype=np.float64)
            if root.shape != (vectors.shape[0], 3):
                raise ShapeMismatch(f"root must be {(vectors.shape[0], 3)}, got {root.shape}")
            object.__setattr__(self, "root", root)
        if not self.fps > 0:
            raise ShapeMismatch(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.line_vectors.shape[0]

    def check_topology(self, topo: SkeletonTopology) -> None:
        if self.line_vectors.shape[1] != topo.n_bones:
            raise ShapeMismatch(
                f"Pose has {self.line_vectors.shape[1]} bones, skeleton has {topo.n_bones}")

    def slice(self, start: int, stop: int) -> "PoseSequence":
        root = None if self.root is None else self.root[start:stop]
        return PoseSequence(self.fps, self.line_vectors[start:stop], root)


def normalize_rows(vectors: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.maximum(norms, eps)


def positions_to_linevecs(positions: np.ndarray, topo: SkeletonTopology,
                          fps: float = 10.0) -> PoseSequence:
    """
    Convert joint positions (T x J x 3) into unit bone directions.

    The root joint's positions become the root trajectory.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[1:] != (topo.n_joints, 3):
        raise ShapeMismatch(f"positions must be T x {topo.n_joints} x 3, got {positions.shape}")

    offsets = positions[:, list(topo.bone_children)] - positions[:, list(topo.bone_parents)]
    lengths = np.linalg.norm(offsets, axis=-1)
    bad = np.argwhere(lengths <= MIN_BONE_LENGTH)
    if bad.size:
        frame, bone = (int(v) for v in bad[0])
        raise DegenerateBone(frame, bone, float(lengths[frame, bone]))

    return PoseSequence(fps, offsets / lengths[..., None], positions[:, topo.root].copy())


def linevecs_to_positions(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """ Forward kinematics over the tree; returns T x J x 3 positions. """
    if pose.root is None:
        raise MissingRoot("Pose sequence has no root trajectory")
    pose.check_topology(topo)

    n_frames = pose.n_frames
    positions = np.zeros((n_frames, topo.n_joints, 3))
    positions[:, topo.root] = pose.root
    lengths = np.asarray(topo.bone_lengths)
    bone_of = {child: b for b, child in enumerate(topo.bone_children)}

    for joint in topo.order[1:]:
        b = bone_of[joint]
        positions[:, joint] = positions[:, topo.parent[joint]] + lengths[b] * pose.line_vectors[:, b]
    return positions


def bone_lengths_from_positions(positions: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """ Mean bone length over frames, for building a topology that matches a capture. """
    offsets = positions[:, list(topo.bone_children)] - positions[:, list(topo.bone_parents)]
    return np.linalg.norm(offsets, axis=-1).mean(axis=0)


# =============================================================================
# KINEMATICS
# =============================================================================

def forward_difference(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """
    x[t+1] - x[t] along ``axis``; the last frame repeats the previous
    difference. A single frame has zero velocity.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 2:
        return np.zeros_like(x)
    diff = np.diff(x, axis=axis)
    last = np.take(diff, [-1], axis=axis)
    return np.concatenate([diff, last], axis=axis)


def femur_shin_angles(pose: PoseSequence, topo: SkeletonTopology) -> tuple[np.ndarray, np.ndarray]:
    """
    Angle between femur and shin per leg (T x 2, radians) and its forward
    difference (T x 2, rad/frame). A straight leg is 0.
    """
    pose.check_topology(topo)
    theta = np.zeros((pose.n_frames, 2))
    for leg, (femur, shin) in enumerate(topo.leg_bone_pairs()):
        cosine = np.sum(pose.line_vectors[:, femur] * pose.line_vectors[:, shin], axis=-1)
        theta[:, leg] = np.arccos(np.clip(cosine, -1.0, 1.0))
    return theta, forward_difference(theta)


def kinetic_velocity(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """ Per-frame mean over joints of squared joint speed (m^2/s^2). """
    positions = linevecs_to_positions(pose, topo)
    velocity = forward_difference(positions)
    return np.mean(np.sum(velocity ** 2, axis=-1), axis=-1) * pose.fps ** 2


# =============================================================================
# FRAME INDEX SETS
# =============================================================================

@dataclass(frozen=True)
class FrameIndexSets:
    """
    Partition of a window's frames (0-based).

    ``beats`` is B (strictly increasing), ``seed_beats`` is B_S = B within the
    first ``seed_len`` frames, ``repletion`` is R = all frames minus (B and S).
    """

    n_frames: int
    seed_len: int
    beats: tuple
    seed_beats: tuple = field(init=False)
    repletion: tuple = field(init=False)

    def __post_init__(self):
        if not 0 < self.seed_len <= self.n_frames:
            raise CoverageError(f"Seed length {self.seed_len} invalid for {self.n_frames} frames")
        beats = tuple(int(b) for b in self.beats)
        if any(b2 <= b1 for b1, b2 in zip(beats, beats[1:])):
            raise CoverageError(f"Beat frames must be strictly increasing: {beats}")
        if beats and (beats[0] < 0 or beats[-1] >= self.n_frames):
            raise CoverageError(f"Beat frames outside [0, {self.n_frames}): {beats}")

        taken = set(beats) | set(range(self.seed_len))
        object.__setattr__(self, "beats", beats)
        object.__setattr__(self, "seed_beats", tuple(b for b in beats if b < self.seed_len))
        object.__setattr__(self, "repletion",
                           tuple(f for f in range(self.n_frames) if f not in taken))

    @classmethod
    def build(cls, n_frames: int, seed_len: int, beats: Sequence[int],
              max_beats: int, max_seed_beats: int) -> "FrameIndexSets":
        """
        Keep the last ``max_seed_beats`` beats inside the seed window, then fill
        up to ``max_beats`` with the earliest beats after it.
        """
        beats = sorted({int(b) for b in beats if 0 <= b < n_frames})
        seed_beats = [b for b in beats if b < seed_len][-max_seed_beats:] if max_seed_beats > 0 else []
        later = [b for b in beats if b >= seed_len]
        kept = seed_beats + later[:max(0, max_beats - len(seed_beats))]
        return cls(n_frames, seed_len, tuple(kept))

    @property
    def seed(self) -> tuple:
        return tuple(range(self.seed_len))

    @property
    def generated_beats(self) -> tuple:
        """ B - B_S: the beats BPS has to synthesize. """
        return tuple(b for b in self.beats if b >= self.seed_len)

    def without_beats(self) -> "FrameIndexSets":
        """ Same window with every non-seed beat folded into the repletion set. """
        return FrameIndexSets(self.n_frames, self.seed_len, self.seed_beats)

    def check_partition(self) -> None:
        counts = np.zeros(self.n_frames, dtype=int)
        counts[list(self.seed)] += 1
        counts[list(self.generated_beats)] += 1
        counts[list(self.repletion)] += 1
        if np.any(counts != 1):
            raise CoverageError("Seed, beat and repletion frames do not partition the window")

    def to_dict(self) -> dict[str, Any]:
        return {"n_frames": self.n_frames, "seed_len": self.seed_len, "beats": list(self.beats)}
