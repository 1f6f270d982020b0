# ==============================================================================
# GROOVESYNTH - MOTION FILES
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Canonical motion JSON interchange (read / atomic write)
# ==============================================================================

import json
import logging
import os
from typing import Optional, Sequence

import numpy as np

from src.core.errors import FormatError, ShapeMismatch
from src.dance.skeleton import SMPL24_JOINTS, PoseSequence, SkeletonTopology, smpl24

logger = logging.getLogger(__name__)


def motion_to_dict(pose: PoseSequence, topo: SkeletonTopology,
                   music_beats: Optional[Sequence[int]] = None) -> dict:
    pose.check_topology(topo)
    data = {
        "fps": float(pose.fps),
        "joint_names": list(topo.joint_names),
        "parents": list(topo.parent),
        "bone_lengths": [float(x) for x in topo.bone_lengths],
        "root": None if pose.root is None else pose.root.tolist(),
        "line_vectors": pose.line_vectors.tolist(),
    }
    if music_beats is not None:
        data["music_beats"] = [int(b) for b in music_beats]
    return data


def save_motion(path: str, pose: PoseSequence, topo: SkeletonTopology,
                music_beats: Optional[Sequence[int]] = None) -> None:
    """
    Write a motion JSON document.

    Floats go through ``float.__repr__`` (shortest round-trip form), so a
    save/load cycle reproduces the arrays bit-exactly. The write is atomic
    (tmp file + replace).
    """
    data = motion_to_dict(pose, topo, music_beats)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    tmp_path = str(path) + ".tmp"
    with open(tmp_path, "w") as f:
        json.dump(data, f)
    os.replace(tmp_path, path)


def load_motion(path: str, topo: Optional[SkeletonTopology] = None
                ) -> tuple[PoseSequence, SkeletonTopology, Optional[list[int]]]:
    """
    Read a motion JSON document.

    Returns
    -------
    (PoseSequence, SkeletonTopology, music_beats or None)
        When ``topo`` is given, the file's joint tree must match it and its
        leg/foot definitions are reused with the file's bone lengths.
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: cannot read motion JSON ({e})") from e

    try:
        fps = float(data["fps"])
        vectors = np.asarray(data["line_vectors"], dtype=np.float64)
        root = None if data.get("root") is None else np.asarray(data["root"], dtype=np.float64)
        names = list(data["joint_names"])
        parents = [int(p) for p in data["parents"]]
        lengths = [float(x) for x in data["bone_lengths"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed motion JSON ({e})") from e

    if topo is not None:
        if names != list(topo.joint_names) or parents != list(topo.parent):
            raise FormatError(f"{path}: joint tree differs from the configured skeleton")
        file_topo = topo.with_bone_lengths(lengths)
    else:
        if names != SMPL24_JOINTS:
            raise FormatError(f"{path}: unknown skeleton; pass a topology to load it")
        file_topo = smpl24().with_bone_lengths(lengths)

    try:
        pose = PoseSequence(fps, vectors, root)
        pose.check_topology(file_topo)
    except ShapeMismatch as e:
        raise FormatError(f"{path}: {e}") from e

    beats = data.get("music_beats")
    return pose, file_topo, None if beats is None else [int(b) for b in beats]

