import json

import numpy as np
import pytest

from src.core.errors import FormatError, MissingRoot
from src.dance.bvh import export_bvh, joint_rotations, minimal_rotation
from src.dance.motion_io import load_motion, save_motion
from src.dance.skeleton import PoseSequence
from src.tests.conftest import random_pose


def rest_pose(topo, n_frames=3):
    vectors = np.tile(np.asarray(topo.rest_directions), (n_frames, 1, 1))
    return PoseSequence(10.0, vectors, np.zeros((n_frames, 3)))


def test_save_load_is_bit_exact(tmp_path, topo, rng):
    pose = random_pose(rng, 12)
    path = tmp_path / "m.json"

    save_motion(str(path), pose, topo, music_beats=[3, 8])
    loaded, file_topo, beats = load_motion(str(path), topo)

    assert np.array_equal(loaded.line_vectors, pose.line_vectors)
    assert np.array_equal(loaded.root, pose.root)
    assert beats == [3, 8]
    assert file_topo.bone_lengths == topo.bone_lengths
    assert not (tmp_path / "m.json.tmp").exists()


def test_document_layout(tmp_path, topo, rng):
    path = tmp_path / "m.json"
    save_motion(str(path), random_pose(rng, 2), topo)
    data = json.loads(path.read_text())

    assert set(data) == {"fps", "joint_names", "parents", "bone_lengths", "root", "line_vectors"}
    assert len(data["line_vectors"]) == 2 and len(data["line_vectors"][0]) == 23


def test_rootless_motion_loads_without_root(tmp_path, topo, rng):
    path = tmp_path / "m.json"
    save_motion(str(path), random_pose(rng, 4, with_root=False), topo)
    pose, _, beats = load_motion(str(path))
    assert pose.root is None and beats is None


def test_unreadable_motion(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("[1, 2")
    with pytest.raises(FormatError):
        load_motion(str(path))


def test_skeleton_mismatch(tmp_path, topo, rng):
    path = tmp_path / "m.json"
    save_motion(str(path), random_pose(rng, 2), topo)
    data = json.loads(path.read_text())
    data["parents"][5] = 0
    path.write_text(json.dumps(data))
    with pytest.raises(FormatError):
        load_motion(str(path), topo)


def test_non_unit_vectors_in_file(tmp_path, topo, rng):
    path = tmp_path / "m.json"
    save_motion(str(path), random_pose(rng, 2), topo)
    data = json.loads(path.read_text())
    data["line_vectors"][0][0] = [2.0, 0.0, 0.0]
    path.write_text(json.dumps(data))
    with pytest.raises(FormatError):
        load_motion(str(path), topo)


# --- BVH -----------------------------------------------------------------------

@pytest.mark.parametrize("target", [[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [0.6, 0.8, 0.0]])
def test_minimal_rotation_maps_source_onto_target(target):
    source = np.array([[0.0, 0.0, 1.0]])
    rotated = minimal_rotation(source, np.array([target])).apply(source)
    np.testing.assert_allclose(rotated[0], target, atol=1e-9)


def test_rest_pose_has_zero_rotations(topo):
    euler = joint_rotations(rest_pose(topo), topo)
    np.testing.assert_allclose(euler, 0.0, atol=1e-6)


def test_bvh_layout(tmp_path, topo, rng):
    pose = random_pose(rng, 5)
    path = tmp_path / "out" / "dance.bvh"

    export_bvh(str(path), pose, topo)
    lines = path.read_text().splitlines()

    assert lines[0] == "HIERARCHY"
    assert lines[1] == "ROOT pelvis"
    assert "Frames: 5" in lines and "Frame Time: 0.100000" in lines
    frames = lines[lines.index("Frame Time: 0.100000") + 1:]
    assert len(frames) == 5
    assert all(len(row.split()) == 3 + 3 * topo.n_joints for row in frames)
    assert sum(line.strip().startswith("JOINT") for line in lines) == topo.n_joints - 1


def test_bvh_needs_root(tmp_path, topo, rng):
    with pytest.raises(MissingRoot):
        export_bvh(str(tmp_path / "x.bvh"), random_pose(rng, 2, with_root=False), topo)
