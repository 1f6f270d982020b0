import numpy as np
import pytest

from src.core.errors import FormatError, NoBeatsFound, TooShortClip
from src.dance.audiofeat import (AudioClip, AudioConfig, centered_delta, detect_beats, extract_chroma,
                                 extract_features, extract_mfcc, frame_count, load_wav, save_wav)
from src.dance.synth import click_times, click_track

SR = 16000
FPS = 10.0
CFG = AudioConfig()


def click_clip(bpm=120.0, offset=0.1, seconds=7.0, gain=1.0):
    audio = click_track(click_times(bpm, offset, seconds), seconds, SR) * gain
    return AudioClip(audio.astype(np.float32), SR)


def tone(hz, seconds=7.0):
    t = np.arange(int(seconds * SR)) / SR
    return AudioClip((0.5 * np.sin(2 * np.pi * hz * t)).astype(np.float32), SR)


def silence(seconds=7.0):
    return AudioClip(np.zeros(int(seconds * SR), dtype=np.float32), SR)


# --- MFCC ------------------------------------------------------------------------

def test_mfcc_shape_at_motion_rate():
    mfcc = extract_mfcc(tone(440.0), FPS, 20, CFG)
    assert mfcc.shape == (60, 70)


def test_mfcc_of_silence_is_static():
    mfcc = extract_mfcc(silence(), FPS, 20, CFG)
    np.testing.assert_allclose(mfcc[20:], 0.0, atol=1e-12)
    np.testing.assert_allclose(mfcc[:20], mfcc[:20, :1], atol=1e-9)


def test_mfcc_distinguishes_pitches():
    low = extract_mfcc(tone(440.0), FPS, 20, CFG)
    high = extract_mfcc(tone(880.0), FPS, 20, CFG)
    assert np.linalg.norm(low[:20] - high[:20]) > 0


def test_mfcc_delta_rows_are_centered_differences():
    mfcc = extract_mfcc(click_clip(), FPS, 20, CFG)
    np.testing.assert_allclose(mfcc[20:40], centered_delta(mfcc[:20], 2), atol=1e-6)
    np.testing.assert_allclose(mfcc[40:], centered_delta(mfcc[20:40], 2), atol=1e-6)


def test_centered_delta_of_ramp_is_slope():
    ramp = np.arange(10, dtype=np.float64)[None] * 3.0
    delta = centered_delta(ramp, 2)
    np.testing.assert_allclose(delta[0, 2:-2], 3.0)


def test_clip_shorter_than_a_frame():
    with pytest.raises(TooShortClip):
        extract_mfcc(AudioClip(np.zeros(100, dtype=np.float32), SR), FPS, 20, CFG)


# --- Chroma CENS -------------------------------------------------------------------

def test_a4_dominates_its_pitch_class():
    chroma = extract_chroma(tone(440.0), FPS, CFG)
    assert chroma.shape == (12, 70)
    assert np.all(np.argmax(chroma, axis=0) == 9), "pitch class A is row 9 (C-based)"


def test_cens_columns_are_unit_norm():
    chroma = extract_chroma(click_clip(), FPS, CFG)
    np.testing.assert_allclose(np.linalg.norm(chroma, axis=0), 1.0, atol=1e-6)


def test_silence_falls_back_to_uniform_chroma():
    chroma = extract_chroma(silence(), FPS, CFG)
    np.testing.assert_allclose(chroma, 1.0 / np.sqrt(12), atol=1e-12)


# --- beats -------------------------------------------------------------------------

def test_click_track_beats_within_one_frame():
    """ 120 BPM clicks from 0.1 s land on frames 1, 6, 11, ... """
    beats = np.asarray(detect_beats(click_clip(), FPS, None, CFG))
    expected = np.arange(1, 70, 5)

    distance = np.min(np.abs(expected[:, None] - beats[None, :]), axis=1)
    assert np.mean(distance <= 1) >= 0.9, f"beats {beats.tolist()} miss the click grid"
    assert np.all(np.diff(beats) > 0)


def test_beat_cap():
    clip = click_clip(seconds=12.5)  # 25 clicks
    assert len(detect_beats(clip, FPS, 20, CFG)) == 20


def test_beats_invariant_to_gain():
    rng = np.random.default_rng(3)
    base = click_track(click_times(100.0, 0.25, 8.0), 8.0, SR) + 0.01 * rng.standard_normal(8 * SR)
    loud = AudioClip(base.astype(np.float32), SR)
    quiet = AudioClip((base * 0.5).astype(np.float32), SR)
    assert detect_beats(loud, FPS, None, CFG) == detect_beats(quiet, FPS, None, CFG)


def test_silence_has_no_beats():
    with pytest.raises(NoBeatsFound):
        detect_beats(silence(), FPS, None, CFG)


def test_beat_tracking_needs_one_second():
    with pytest.raises(TooShortClip):
        detect_beats(click_clip(seconds=0.8), FPS, None, CFG)


# --- clips and I/O -------------------------------------------------------------------

def test_feature_frame_counts_agree():
    clip = click_clip(seconds=7.26)
    feats = extract_features(clip, CFG)
    assert frame_count(clip, FPS) == 73
    assert feats.mfcc.shape[1] == feats.chroma.shape[1] == 73
    assert all(0 <= b < 73 for b in feats.beats)


def test_segment_zero_pads_past_the_end():
    clip = AudioClip(np.ones(SR, dtype=np.float32), SR)
    piece = clip.segment(0.5, 1.5)
    assert piece.duration == pytest.approx(1.0)
    assert np.all(piece.samples[:SR // 2] == 1.0) and np.all(piece.samples[SR // 2:] == 0.0)


def test_wav_round_trip(tmp_path):
    clip = click_clip(seconds=2.0)
    path = tmp_path / "clicks.wav"
    save_wav(str(path), clip)
    loaded = load_wav(str(path), SR)
    assert loaded.sample_rate == SR
    np.testing.assert_allclose(loaded.samples, clip.samples, atol=1e-6)


def test_missing_wav(tmp_path):
    with pytest.raises(FormatError):
        load_wav(str(tmp_path / "none.wav"))
