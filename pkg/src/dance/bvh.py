# ==============================================================================
# GROOVESYNTH - BVH EXPORT
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Write line-vector motions as BVH for external viewers
# ==============================================================================

import logging
import os

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.errors import MissingRoot
from src.dance.skeleton import PoseSequence, SkeletonTopology

logger = logging.getLogger(__name__)

EULER_ORDER = "ZXY"
CENTIMETERS = 100.0


def minimal_rotation(source: np.ndarray, target: np.ndarray) -> Rotation:
    """
    Shortest-arc rotations taking unit vectors ``source`` onto ``target``
    (both N x 3). Antiparallel pairs rotate by pi about any perpendicular axis.
    """
    source = source / np.linalg.norm(source, axis=-1, keepdims=True)
    target = target / np.linalg.norm(target, axis=-1, keepdims=True)
    axis = np.cross(source, target)
    sin = np.linalg.norm(axis, axis=-1)
    cos = np.sum(source * target, axis=-1)
    angle = np.arctan2(sin, cos)

    safe = sin > 1e-9
    rotvec = np.zeros_like(source)
    rotvec[safe] = axis[safe] / sin[safe, None] * angle[safe, None]

    flipped = (~safe) & (cos < 0)
    if np.any(flipped):
        helper = np.where(np.abs(source[flipped, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        perp = np.cross(source[flipped], helper)
        perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
        rotvec[flipped] = perp * np.pi
    return Rotation.from_rotvec(rotvec)


def _rest_directions(topo: SkeletonTopology) -> np.ndarray:
    if topo.rest_directions is not None:
        return np.asarray(topo.rest_directions, dtype=np.float64)
    up = np.zeros((topo.n_bones, 3))
    up[:, topo.up_axis] = 1.0
    return up


def joint_rotations(pose: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """
    Local BVH rotations (T x J x 3 Euler degrees).

    Each joint's world rotation aligns the rest direction of its first child
    bone with that bone's line vector; leaf joints inherit their parent's
    rotation. Local rotations are world rotations relative to the parent.
    """
    rest = _rest_directions(topo)
    n_frames = pose.n_frames
    first_child_bone = {}
    for b, parent in enumerate(topo.bone_parents):
        first_child_bone.setdefault(parent, b)

    world = [None] * topo.n_joints
    for joint in topo.order:
        b = first_child_bone.get(joint)
        if b is None:
            world[joint] = world[topo.parent[joint]]
            continue
        world[joint] = minimal_rotation(np.repeat(rest[b][None], n_frames, axis=0),
                                        pose.line_vectors[:, b])

    euler = np.zeros((n_frames, topo.n_joints, 3))
    for joint in topo.order:
        parent = topo.parent[joint]
        local = world[joint] if parent < 0 else world[parent].inv() * world[joint]
        euler[:, joint] = local.as_euler(EULER_ORDER, degrees=True)
    return euler


def _write_joint(lines: list, topo: SkeletonTopology, joint: int, offsets: np.ndarray, depth: int):
    indent = "  " * depth
    children = [c for c in range(topo.n_joints) if topo.parent[c] == joint]
    keyword = "ROOT" if topo.parent[joint] < 0 else "JOINT"
    lines.append(f"{indent}{keyword} {topo.joint_names[joint]}")
    lines.append(f"{indent}{{")
    ox, oy, oz = offsets[joint]
    lines.append(f"{indent}  OFFSET {ox:.6f} {oy:.6f} {oz:.6f}")
    if keyword == "ROOT":
        lines.append(f"{indent}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation")
    else:
        lines.append(f"{indent}  CHANNELS 3 Zrotation Xrotation Yrotation")
    for child in children:
        _write_joint(lines, topo, child, offsets, depth + 1)
    if not children:
        lines.append(f"{indent}  End Site")
        lines.append(f"{indent}  {{")
        lines.append(f"{indent}    OFFSET 0.000000 0.000000 0.000000")
        lines.append(f"{indent}  }}")
    lines.append(f"{indent}}}")


def export_bvh(path: str, pose: PoseSequence, topo: SkeletonTopology) -> None:
    """ Root translation plus per-joint rotations, offsets in centimeters. """
    if pose.root is None:
        raise MissingRoot("BVH export needs a root trajectory")
    pose.check_topology(topo)

    rest = _rest_directions(topo)
    lengths = np.asarray(topo.bone_lengths)
    offsets = np.zeros((topo.n_joints, 3))
    for b, child in enumerate(topo.bone_children):
        offsets[child] = rest[b] * lengths[b] * CENTIMETERS

    lines = ["HIERARCHY"]
    _write_joint(lines, topo, topo.root, offsets, 0)

    euler = joint_rotations(pose, topo)
    lines.append("MOTION")
    lines.append(f"Frames: {pose.n_frames}")
    lines.append(f"Frame Time: {1.0 / pose.fps:.6f}")

    # Channel order follows the depth-first hierarchy walk above.
    walk = []

    def visit(joint):
        walk.append(joint)
        for child in range(topo.n_joints):
            if topo.parent[child] == joint:
                visit(child)
    visit(topo.root)

    for f in range(pose.n_frames):
        values = list(pose.root[f] * CENTIMETERS)
        for joint in walk:
            values.extend(euler[f, joint])
        lines.append(" ".join(f"{v:.6f}" for v in values))

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"BVH written: {path} ({pose.n_frames} frames)")
