# ==============================================================================
# GROOVESYNTH - DATASET
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Clip ingestion, windowing into training samples, feature cache
# ==============================================================================

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from src.core.errors import (DataError, ManifestError, MissingRoot, NoBeatsFound, ShapeMismatch,
                             TooShortClip)
from src.dance.audiofeat import (AudioClip, AudioConfig, AudioFeatureSet, extract_features, load_wav,
                                 save_wav)
from src.dance.motion_io import load_motion, save_motion
from src.dance.skeleton import FrameIndexSets, PoseSequence, SkeletonTopology

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
MANIFEST_NAME = "manifest.json"


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class DanceClip:
    """ One paired motion + music recording. """

    name: str
    pose: PoseSequence
    audio: AudioClip
    genre: Optional[str] = None
    split: str = "train"

    def __post_init__(self):
        if self.pose.root is None:
            raise MissingRoot(f"Clip '{self.name}' has no root trajectory")
        if self.split not in SPLITS:
            raise ManifestError(f"Clip '{self.name}' has unknown split '{self.split}'")

    @property
    def duration(self) -> float:
        """ Seconds covered by both the motion and the audio. """
        return min(self.pose.n_frames / self.pose.fps, self.audio.duration)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """
    One fixed-length window: features, frame partition and ground truth.

    poses : T x (J-1) x 3, root : T x 3
    """

    clip_name: str
    clip_index: int
    window_index: int
    features: AudioFeatureSet
    sets: FrameIndexSets
    poses: np.ndarray
    root: np.ndarray

    def __post_init__(self):
        if self.poses.shape[0] != self.sets.n_frames or self.root.shape != (self.sets.n_frames, 3):
            raise ShapeMismatch(f"Sample {self.key}: poses/root do not span {self.sets.n_frames} frames")
        if self.features.n_frames != self.sets.n_frames:
            raise ShapeMismatch(f"Sample {self.key}: features span {self.features.n_frames} frames")

    @property
    def key(self) -> tuple[int, int]:
        return self.clip_index, self.window_index

    @property
    def seed(self) -> np.ndarray:
        return self.poses[:self.sets.seed_len]

    @property
    def seed_root(self) -> np.ndarray:
        return self.root[:self.sets.seed_len]

    @property
    def beat_poses(self) -> np.ndarray:
        return self.poses[list(self.sets.generated_beats)]

    @property
    def repletion_poses(self) -> np.ndarray:
        return self.poses[list(self.sets.repletion)]

    @property
    def root_offsets(self) -> np.ndarray:
        """ Repletion roots relative to the last seed root (trajectory targets). """
        return self.root[list(self.sets.repletion)] - self.root[self.sets.seed_len - 1]


@dataclass(frozen=True)
class WindowConfig:
    window_seconds: float = 7.0
    seed_frames: int = 20
    max_beats: int = 20
    max_seed_beats: int = 3
    fps: float = 10.0

    @classmethod
    def from_settings(cls, settings: dict) -> "WindowConfig":
        data = settings["data"]
        return cls(float(data["window_seconds"]), int(data["seed_frames"]), int(data["max_beats"]),
                   int(data["max_seed_beats"]), float(settings["audio"]["fps"]))

    @property
    def n_frames(self) -> int:
        return int(round(self.window_seconds * self.fps))


# =============================================================================
# FEATURE CACHE
# =============================================================================

class FeatureCache:
    """
    On-disk AudioFeatureSet cache keyed by a SHA-256 of the samples and the
    analysis parameters. Each entry is one .npz written atomically.
    """

    def __init__(self, directory: str, audio_cfg: AudioConfig):
        self.directory = directory
        self.audio_cfg = audio_cfg
        self.hits = 0
        self.misses = 0
        os.makedirs(directory, exist_ok=True)

    def key(self, clip: AudioClip) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(clip.samples, dtype="<f4").tobytes())
        digest.update(str(clip.sample_rate).encode())
        digest.update(json.dumps(asdict(self.audio_cfg), sort_keys=True).encode())
        return digest.hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"{key}.npz")

    def get(self, clip: AudioClip) -> Optional[AudioFeatureSet]:
        path = self._path(self.key(clip))
        if not os.path.exists(path):
            return None
        try:
            with np.load(path) as data:
                return AudioFeatureSet(data["mfcc"], data["chroma"],
                                       tuple(int(b) for b in data["beats"]), float(data["fps"]))
        except (OSError, KeyError, ValueError) as e:
            logger.warning(f"Discarding unreadable cache entry {path}: {e}")
            return None

    def put(self, clip: AudioClip, feats: AudioFeatureSet) -> None:
        path = self._path(self.key(clip))
        tmp_path = path + ".tmp"
        with open(tmp_path, "wb") as f:
            np.savez(f, mfcc=feats.mfcc, chroma=feats.chroma,
                     beats=np.asarray(feats.beats, dtype=np.int64), fps=np.float64(feats.fps))
        os.replace(tmp_path, path)

    def features(self, clip: AudioClip) -> AudioFeatureSet:
        cached = self.get(clip)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        feats = extract_features(clip, self.audio_cfg)
        self.put(clip, feats)
        return feats


# =============================================================================
# WINDOWING
# =============================================================================

def window_clip(clip: DanceClip, window: WindowConfig, audio_cfg: AudioConfig,
                cache: Optional[FeatureCache] = None, clip_index: int = 0) -> list[TrainingSample]:
    """
    Cut a clip into consecutive non-overlapping windows.

    Windows whose audio has no detectable beat, no beat inside the seed
    window, or no beat after it are dropped and counted in the log.
    """
    if abs(clip.pose.fps - window.fps) > 1e-9:
        raise ShapeMismatch(f"Clip '{clip.name}' runs at {clip.pose.fps} fps, expected {window.fps}")

    n_frames = window.n_frames
    n_windows = int(np.floor(clip.duration / window.window_seconds + 1e-9))
    samples = []
    dropped = {"no_beats": 0, "no_seed_beat": 0, "no_generated_beat": 0}

    for w in range(n_windows):
        start = w * n_frames
        audio = clip.audio.segment(w * window.window_seconds, (w + 1) * window.window_seconds)
        try:
            feats = cache.features(audio) if cache is not None else extract_features(audio, audio_cfg)
        except (NoBeatsFound, TooShortClip) as e:
            logger.debug(f"{clip.name} window {w}: {e}")
            dropped["no_beats"] += 1
            continue

        sets = FrameIndexSets.build(n_frames, window.seed_frames, feats.beats,
                                    window.max_beats, window.max_seed_beats)
        if not sets.seed_beats:
            dropped["no_seed_beat"] += 1
            continue
        if not sets.generated_beats:
            dropped["no_generated_beat"] += 1
            continue

        sets.check_partition()
        samples.append(TrainingSample(
            clip_name=clip.name, clip_index=clip_index, window_index=w, features=feats, sets=sets,
            poses=clip.pose.line_vectors[start:start + n_frames],
            root=clip.pose.root[start:start + n_frames],
        ))

    if any(dropped.values()):
        logger.info(f"{clip.name}: kept {len(samples)}/{n_windows} windows, dropped {dropped}")
    return samples


# =============================================================================
# DIRECTORY I/O
# =============================================================================

def _read_manifest(path: str) -> list[dict]:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise ManifestError(f"No {MANIFEST_NAME} in {path}")
    try:
        with open(manifest_path, "r") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"{manifest_path} is not valid JSON: {e}") from e
    entries = manifest.get("clips") if isinstance(manifest, dict) else None
    if not isinstance(entries, list):
        raise ManifestError(f"{manifest_path} must hold a 'clips' list")
    return entries


def load_aist_dir(path: str, topo: Optional[SkeletonTopology] = None, split: Optional[str] = None,
                  genre: Optional[str] = None, sample_rate: Optional[int] = None) -> list[DanceClip]:
    """
    Read ``manifest.json`` + ``motions/*.json`` + ``audio/*.wav``.

    Manifest entries look like
    ``{"motion": "motions/x.json", "audio": "audio/x.wav", "split": "train", "genre": "gBR"}``.
    ``split`` / ``genre`` filter the returned clips.
    """
    clips = []
    for index, entry in enumerate(_read_manifest(path)):
        try:
            motion_rel, audio_rel = entry["motion"], entry["audio"]
        except (KeyError, TypeError):
            raise ManifestError(f"Manifest entry {index} needs 'motion' and 'audio' fields: {entry}") from None
        entry_split = entry.get("split", "train")
        if split is not None and entry_split != split:
            continue
        if genre is not None and entry.get("genre") != genre:
            continue

        motion_path, audio_path = os.path.join(path, motion_rel), os.path.join(path, audio_rel)
        for missing in (p for p in (motion_path, audio_path) if not os.path.exists(p)):
            raise ManifestError(f"Manifest entry {index} ({motion_rel}) references missing file {missing}")

        pose, _, _ = load_motion(motion_path, topo)
        clips.append(DanceClip(
            name=os.path.splitext(os.path.basename(motion_rel))[0],
            pose=pose,
            audio=load_wav(audio_path, sample_rate),
            genre=entry.get("genre"),
            split=entry_split,
        ))
    logger.info(f"Loaded {len(clips)} clips from {path}")
    return clips


def save_dataset(path: str, clips: list[DanceClip], topo: SkeletonTopology) -> None:
    """ Write clips in the layout ``load_aist_dir`` reads. """
    entries = []
    for clip in clips:
        motion_rel = f"motions/{clip.name}.json"
        audio_rel = f"audio/{clip.name}.wav"
        save_motion(os.path.join(path, motion_rel), clip.pose, topo)
        save_wav(os.path.join(path, audio_rel), clip.audio)
        entries.append({"motion": motion_rel, "audio": audio_rel, "split": clip.split, "genre": clip.genre})

    tmp_path = os.path.join(path, MANIFEST_NAME + ".tmp")
    with open(tmp_path, "w") as f:
        json.dump({"clips": entries}, f, indent=2)
    os.replace(tmp_path, os.path.join(path, MANIFEST_NAME))
    logger.info(f"Saved {len(clips)} clips to {path}")


def check_corpus(samples: list[TrainingSample]) -> None:
    """ Every sample's index sets partition its window. """
    for sample in samples:
        try:
            sample.sets.check_partition()
        except DataError as e:
            raise type(e)(f"Sample {sample.key}: {e}") from e
