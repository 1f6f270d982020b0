# ==============================================================================
# GROOVESYNTH - SYNTHETIC DATASET
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Click-track music with beat-locked procedural dances for desk-scale runs
# ==============================================================================

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt
from scipy.spatial.transform import Rotation

from src.core.errors import ConfigError, InvalidTopology
from src.dance.audiofeat import AudioClip
from src.dance.dataset import DanceClip
from src.dance.skeleton import PoseSequence, SkeletonTopology, normalize_rows, smpl24_rest_positions

logger = logging.getLogger(__name__)

CLICK_HZ = 1000.0
CLICK_DECAY_S = 0.005
CLICK_LENGTH_S = 0.03
NOISE_BAND_HZ = (100.0, 3000.0)
# Second harmonic weight; below 1/4 the pose speed vanishes only on beats.
HARMONIC = 0.15
ORBIT_RADIUS = 0.5
ORBIT_RATE = 0.15
BOB_HEIGHT = 0.03


@dataclass(frozen=True)
class SynthConfig:
    clip_seconds: float = 14.0
    min_bpm: float = 80.0
    max_bpm: float = 140.0
    noise_level: float = 0.05
    click_level: float = 0.8
    sample_rate: int = 16000
    fps: float = 10.0

    @classmethod
    def from_settings(cls, settings: dict) -> "SynthConfig":
        synth = settings["data"]["synth"]
        return cls(float(synth["clip_seconds"]), float(synth["min_bpm"]), float(synth["max_bpm"]),
                   float(synth["noise_level"]), float(synth["click_level"]),
                   int(settings["audio"]["sample_rate"]), float(settings["audio"]["fps"]))


def click_times(bpm: float, offset: float, duration: float) -> np.ndarray:
    period = 60.0 / bpm
    return np.arange(offset, duration, period)


def click_track(times: np.ndarray, duration: float, sample_rate: int, level: float = 0.8) -> np.ndarray:
    """ Decaying 1 kHz bursts at ``times`` (seconds). """
    n = int(round(duration * sample_rate))
    audio = np.zeros(n)
    t = np.arange(int(CLICK_LENGTH_S * sample_rate)) / sample_rate
    burst = level * np.sin(2 * np.pi * CLICK_HZ * t) * np.exp(-t / CLICK_DECAY_S)
    for start in np.round(np.asarray(times) * sample_rate).astype(int):
        stop = min(n, start + burst.size)
        if 0 <= start < n:
            audio[start:stop] += burst[:stop - start]
    return audio


def band_noise(n_samples: int, sample_rate: int, level: float, rng: np.random.Generator) -> np.ndarray:
    sos = butter(4, NOISE_BAND_HZ, btype="band", fs=sample_rate, output="sos")
    noise = sosfiltfilt(sos, rng.standard_normal(n_samples))
    return level * noise / max(float(np.std(noise)), 1e-12)


def beat_locked_dance(topo: SkeletonTopology, n_frames: int, fps: float, bpm: float, offset: float,
                      rng: np.random.Generator) -> PoseSequence:
    """
    Procedural dance whose bones swing between extremes on every beat.

    With beat phase s = (t - offset) / period, each bone turns by
    A * (cos(pi s) + HARMONIC * cos(2 pi s)) about its own axis, and the root
    orbits with angle c * (s - sin(2 pi s) / 2 pi). Every term has zero time
    derivative at integer s, so the motion pauses exactly on the beats.
    """
    rest = normalize_rows(np.asarray(topo.rest_directions, dtype=np.float64))
    n_bones = topo.n_bones
    axes = normalize_rows(np.cross(rest, rng.standard_normal((n_bones, 3))))
    amplitudes = rng.uniform(0.1, 0.5, n_bones) * rng.choice([-1.0, 1.0], n_bones)

    phase = (np.arange(n_frames) / fps - offset) * bpm / 60.0
    swing = np.cos(np.pi * phase) + HARMONIC * np.cos(2 * np.pi * phase)

    vectors = np.zeros((n_frames, n_bones, 3))
    for b in range(n_bones):
        rotations = Rotation.from_rotvec(np.outer(amplitudes[b] * swing, axes[b]))
        vectors[:, b] = rotations.apply(rest[b])

    angle = ORBIT_RATE * (phase - np.sin(2 * np.pi * phase) / (2 * np.pi)) + rng.uniform(0, 2 * np.pi)
    rest_root = smpl24_rest_positions()[topo.root] if topo.n_joints == 24 else np.zeros(3)
    root = np.zeros((n_frames, 3))
    horizontal = [a for a in range(3) if a != topo.up_axis]
    root[:, horizontal[0]] = ORBIT_RADIUS * np.cos(angle)
    root[:, horizontal[1]] = ORBIT_RADIUS * np.sin(angle)
    root[:, topo.up_axis] = rest_root[topo.up_axis] + BOB_HEIGHT * np.cos(2 * np.pi * phase)
    return PoseSequence(fps, normalize_rows(vectors), root)


def synth_clip(name: str, topo: SkeletonTopology, cfg: SynthConfig, rng: np.random.Generator,
               split: str = "train") -> tuple[DanceClip, float, float]:
    """ Returns the clip together with its tempo and first-click offset. """
    bpm = float(rng.uniform(cfg.min_bpm, cfg.max_bpm))
    offset = float(rng.uniform(0.1, 0.4))
    times = click_times(bpm, offset, cfg.clip_seconds)
    n_samples = int(round(cfg.clip_seconds * cfg.sample_rate))
    audio = click_track(times, cfg.clip_seconds, cfg.sample_rate, cfg.click_level)
    audio += band_noise(n_samples, cfg.sample_rate, cfg.noise_level, rng)
    audio = np.clip(audio, -1.0, 1.0)

    n_frames = int(round(cfg.clip_seconds * cfg.fps))
    pose = beat_locked_dance(topo, n_frames, cfg.fps, bpm, offset, rng)
    clip = DanceClip(name, pose, AudioClip(audio.astype(np.float32), cfg.sample_rate), genre="synth", split=split)
    return clip, bpm, offset


def synth_dataset(n_clips: int, seed: int, topo: SkeletonTopology, cfg: SynthConfig = SynthConfig()) -> list[DanceClip]:
    """ ``n_clips`` click-track clips; every fifth clip is tagged as test split. """
    if n_clips < 1:
        raise ConfigError(f"n_clips must be >= 1, got {n_clips}")
    if topo.rest_directions is None:
        raise InvalidTopology("Synthetic dances need a topology with rest directions")
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n_clips):
        split = "test" if i % 5 == 4 else "train"
        clip, bpm, _ = synth_clip(f"synth_{i:03d}", topo, cfg, rng, split)
        logger.debug(f"{clip.name}: {bpm:.1f} BPM ({split})")
        clips.append(clip)
    logger.info(f"Generated {n_clips} synthetic clips (seed={seed})")
    return clips
