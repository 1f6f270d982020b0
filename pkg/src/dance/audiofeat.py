# ==============================================================================
# GROOVESYNTH - AUDIO FEATURES
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: MFCC (+deltas), Chroma CENS and beat frames aligned to motion frames
# ==============================================================================

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Optional

import librosa
import numpy as np
import soundfile as sf
from scipy.ndimage import convolve1d
from scipy.signal import get_window

from src.core.errors import FormatError, NoBeatsFound, ShapeMismatch, TooShortClip

logger = logging.getLogger(__name__)

# CENS quantization staircase: each threshold crossed adds one quarter step.
CENS_THRESHOLDS = (0.05, 0.1, 0.2, 0.4)
CENS_STEP = 0.25
N_CHROMA = 12


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 16000
    fps: float = 10.0
    n_mfcc: int = 20
    n_fft: int = 1024
    n_mels: int = 64
    delta_half_window: int = 2
    cens_smoothing: int = 5
    beat_hop_length: int = 256
    beat_tightness: float = 100.0
    min_bpm: float = 60.0
    max_bpm: float = 180.0

    @classmethod
    def from_settings(cls, settings: dict) -> "AudioConfig":
        audio = settings.get("audio", {})
        return cls(**{k: audio[k] for k in cls.__dataclass_fields__ if k in audio})

    @property
    def motion_hop(self) -> int:
        return int(round(self.sample_rate / self.fps))


@dataclass(frozen=True, eq=False)
class AudioClip:
    """ Mono PCM in [-1, 1]. """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1:
            raise ShapeMismatch(f"Audio must be mono, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ShapeMismatch(f"Sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def resampled(self, sample_rate: int) -> "AudioClip":
        if sample_rate == self.sample_rate:
            return self
        y = librosa.resample(self.samples, orig_sr=self.sample_rate, target_sr=sample_rate)
        return AudioClip(y, sample_rate)

    def segment(self, start_s: float, stop_s: float) -> "AudioClip":
        """ Samples between two times; zero-padded past the end. """
        start = int(round(start_s * self.sample_rate))
        stop = int(round(stop_s * self.sample_rate))
        piece = self.samples[start:stop]
        if len(piece) < stop - start:
            piece = np.concatenate([piece, np.zeros(stop - start - len(piece), dtype=np.float32)])
        return AudioClip(piece, self.sample_rate)


@dataclass(frozen=True, eq=False)
class AudioFeatureSet:
    """
    mfcc : 3*n_mfcc x T, rows [mfcc; delta; delta-delta]
    chroma : 12 x T, CENS columns
    beats : 0-based beat frames, strictly increasing
    """

    mfcc: np.ndarray
    chroma: np.ndarray
    beats: tuple
    fps: float

    def __post_init__(self):
        if self.mfcc.shape[1] != self.chroma.shape[1]:
            raise ShapeMismatch(
                f"MFCC has {self.mfcc.shape[1]} frames, chroma has {self.chroma.shape[1]}")

    @property
    def n_frames(self) -> int:
        return self.mfcc.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {"fps": self.fps, "beats": list(self.beats),
                "mfcc": self.mfcc.tolist(), "chroma": self.chroma.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AudioFeatureSet":
        return cls(np.asarray(data["mfcc"], dtype=np.float64),
                   np.asarray(data["chroma"], dtype=np.float64),
                   tuple(int(b) for b in data["beats"]), float(data["fps"]))


# =============================================================================
# I/O
# =============================================================================

def load_wav(path: str, sample_rate: Optional[int] = None) -> AudioClip:
    """ Read a WAV file as mono, resampled to ``sample_rate`` when given. """
    if not os.path.exists(path):
        raise FormatError(f"Audio file not found: {path}")
    try:
        y, sr = librosa.load(path, sr=sample_rate, mono=True)
    except Exception as e:
        raise FormatError(f"{path}: cannot decode audio ({e})") from e
    return AudioClip(y, int(sr))


def save_wav(path: str, clip: AudioClip) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    sf.write(path, clip.samples, clip.sample_rate, subtype="FLOAT")


def save_features(path: str, feats: AudioFeatureSet) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = str(path) + ".tmp"
    with open(tmp_path, "w") as f:
        json.dump(feats.to_dict(), f)
    os.replace(tmp_path, path)


# =============================================================================
# FEATURES
# =============================================================================

def frame_count(clip: AudioClip, fps: float) -> int:
    return int(round(clip.duration * fps))


def _prepare(clip: AudioClip, fps: float, cfg: AudioConfig, min_seconds: float) -> tuple[AudioClip, int, int]:
    if clip.duration < min_seconds:
        raise TooShortClip(f"Clip lasts {clip.duration:.3f}s, needs at least {min_seconds:.3f}s")
    n_frames = frame_count(clip, fps)
    if n_frames < 1:
        raise TooShortClip(f"Clip of {clip.duration:.3f}s yields no frame at {fps} fps")
    audio = clip.resampled(cfg.sample_rate)
    hop = int(round(cfg.sample_rate / fps))
    return audio, n_frames, hop


def _fit_columns(matrix: np.ndarray, n_frames: int) -> np.ndarray:
    """ Truncate or edge-pad the time axis to exactly ``n_frames`` columns. """
    if matrix.shape[1] >= n_frames:
        return matrix[:, :n_frames]
    return np.pad(matrix, ((0, 0), (0, n_frames - matrix.shape[1])), mode="edge")


def centered_delta(features: np.ndarray, half_window: int = 2) -> np.ndarray:
    """
    Regression delta over +-half_window frames with edge replication:
    d[t] = sum_n n * (x[t+n] - x[t-n]) / (2 * sum_n n^2).
    """
    n_frames = features.shape[1]
    padded = np.pad(features, ((0, 0), (half_window, half_window)), mode="edge")
    denom = 2.0 * sum(n * n for n in range(1, half_window + 1))
    delta = np.zeros_like(features, dtype=np.float64)
    for n in range(1, half_window + 1):
        ahead = padded[:, half_window + n: half_window + n + n_frames]
        behind = padded[:, half_window - n: half_window - n + n_frames]
        delta += n * (ahead - behind)
    return delta / denom


def extract_mfcc(clip: AudioClip, fps: float, n_mfcc: int, cfg: AudioConfig = AudioConfig()) -> np.ndarray:
    """ 3*n_mfcc x T matrix: MFCCs, their deltas and delta-deltas. """
    audio, n_frames, hop = _prepare(clip, fps, cfg, 1.0 / fps)
    mfcc = librosa.feature.mfcc(y=audio.samples, sr=audio.sample_rate, n_mfcc=n_mfcc,
                                n_fft=cfg.n_fft, hop_length=hop, n_mels=cfg.n_mels)
    mfcc = _fit_columns(mfcc.astype(np.float64), n_frames)
    delta = centered_delta(mfcc, cfg.delta_half_window)
    delta2 = centered_delta(delta, cfg.delta_half_window)
    return np.vstack([mfcc, delta, delta2])


def extract_chroma(clip: AudioClip, fps: float, cfg: AudioConfig = AudioConfig()) -> np.ndarray:
    """
    12 x T Chroma CENS.

    STFT pitch-class energies, l1-normalized per column, quantized onto the
    CENS staircase, Hann-smoothed over time and l2-normalized. Silent columns
    fall back to the uniform vector 1/sqrt(12).
    """
    audio, n_frames, hop = _prepare(clip, fps, cfg, 1.0 / fps)
    power = np.abs(librosa.stft(audio.samples, n_fft=cfg.n_fft, hop_length=hop)) ** 2
    chroma = librosa.feature.chroma_stft(S=power, sr=audio.sample_rate, n_fft=cfg.n_fft,
                                         tuning=0.0, norm=None, n_chroma=N_CHROMA)
    chroma = _fit_columns(chroma.astype(np.float64), n_frames)

    energy = chroma.sum(axis=0, keepdims=True)
    chroma = np.divide(chroma, energy, out=np.zeros_like(chroma), where=energy > 0)

    quantized = np.zeros_like(chroma)
    for threshold in CENS_THRESHOLDS:
        quantized += CENS_STEP * (chroma > threshold)

    if cfg.cens_smoothing > 1:
        window = get_window("hann", cfg.cens_smoothing + 2, fftbins=False)
        window /= window.sum()
        quantized = convolve1d(quantized, window, axis=1, mode="nearest")

    norms = np.linalg.norm(quantized, axis=0, keepdims=True)
    cens = np.divide(quantized, norms, out=np.zeros_like(quantized), where=norms > 1e-12)
    silent = norms[0] <= 1e-12
    cens[:, silent] = 1.0 / np.sqrt(N_CHROMA)
    return cens


def onset_envelope(clip: AudioClip, cfg: AudioConfig = AudioConfig()) -> np.ndarray:
    """
    Half-wave rectified log-mel spectral flux.

    The log spectrum is referenced to its own maximum, which makes the
    envelope independent of the waveform's overall gain.
    """
    audio = clip.resampled(cfg.sample_rate)
    mel = librosa.feature.melspectrogram(y=audio.samples, sr=audio.sample_rate, n_fft=cfg.n_fft,
                                         hop_length=cfg.beat_hop_length, n_mels=cfg.n_mels)
    log_mel = librosa.power_to_db(mel, ref=np.max)
    return librosa.onset.onset_strength(S=log_mel, sr=audio.sample_rate,
                                        hop_length=cfg.beat_hop_length)


def detect_beats(clip: AudioClip, fps: float, cap: Optional[int] = None,
                 cfg: AudioConfig = AudioConfig()) -> tuple:
    """
    Beat frames at the motion rate (0-based, strictly increasing).

    Global tempo from the onset autocorrelation (limited to min/max BPM),
    then dynamic-programming beat tracking. Beat times are rounded to
    motion frames without snapping to a grid, and truncated to the first
    ``cap`` beats.
    """
    if clip.duration < 1.0:
        raise TooShortClip(f"Beat tracking needs at least 1 s of audio, got {clip.duration:.3f}s")
    n_frames = frame_count(clip, fps)

    envelope = onset_envelope(clip, cfg)
    if envelope.size == 0 or float(np.ptp(envelope)) < 1e-8:
        raise NoBeatsFound("Onset envelope is flat")

    tempo = librosa.feature.tempo(onset_envelope=envelope, sr=cfg.sample_rate,
                                  hop_length=cfg.beat_hop_length, max_tempo=cfg.max_bpm)
    bpm = float(np.clip(np.atleast_1d(tempo)[0], cfg.min_bpm, cfg.max_bpm))

    _, times = librosa.beat.beat_track(onset_envelope=envelope, sr=cfg.sample_rate,
                                       hop_length=cfg.beat_hop_length, bpm=bpm,
                                       tightness=cfg.beat_tightness, trim=False, units="time")
    frames = np.unique(np.round(np.asarray(times) * fps).astype(int))
    frames = frames[(frames >= 0) & (frames < n_frames)]
    if frames.size == 0:
        raise NoBeatsFound("Beat tracker returned no beats")
    if cap is not None:
        frames = frames[:cap]

    logger.debug(f"Detected {frames.size} beats at {bpm:.1f} BPM")
    return tuple(int(f) for f in frames)


def extract_features(clip: AudioClip, cfg: AudioConfig, cap: Optional[int] = None) -> AudioFeatureSet:
    """ All three extractors at ``cfg.fps`` on the same clip. """
    return AudioFeatureSet(
        mfcc=extract_mfcc(clip, cfg.fps, cfg.n_mfcc, cfg),
        chroma=extract_chroma(clip, cfg.fps, cfg),
        beats=detect_beats(clip, cfg.fps, cap, cfg),
        fps=cfg.fps,
    )
