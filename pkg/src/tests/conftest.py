import os
import sys

import numpy as np
import pytest
import torch

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from src.core.run_state import RunState
from src.dance.audiofeat import AudioConfig
from src.dance.dataset import WindowConfig, window_clip
from src.dance.skeleton import PoseSequence, normalize_rows, smpl24
from src.dance.synth import SynthConfig, synth_dataset
from src.utils.config import apply_overrides, load_settings

# Desk-scale widths: every attention width stays divisible by its head count.
SMALL_MODEL = [
    "model.pose_dim=8", "model.mfcc_dim=8", "model.dropout=0.0",
    "model.conv.hidden=[8]", "model.graph.widths=[8]",
    "model.bps.chroma_dim=4", "model.bps.heads=2", "model.bps.blocks=1", "model.bps.feedforward=32",
    "model.rps.chroma_dim=4", "model.rps.noise_dim=4", "model.rps.latent_dim=8",
    "model.rps.encoder_dim=16", "model.rps.encoder_heads=2", "model.rps.encoder_blocks=1",
    "model.rps.decoder_dim=12", "model.rps.latent_heads=2", "model.rps.latent_blocks=1",
    "model.rps.motion_heads=3", "model.rps.motion_blocks=1", "model.rps.feedforward=32",
    "model.disc.hidden=8", "model.disc.fc=[8]",
    "model.traj.encoder_heads=2", "model.traj.encoder_blocks=1",
    "model.traj.decoder_heads=1", "model.traj.decoder_blocks=1", "model.traj.feedforward=16",
    "data.synth.n_clips=5",
    "runtime.watchdog_interval=0.05",
]


def small_settings_for(run_dir: str) -> dict:
    overrides = SMALL_MODEL + [f"training.run_dir={run_dir}", f"data.cache_dir={os.path.join(run_dir, 'cache')}"]
    return apply_overrides(load_settings(), overrides)


@pytest.fixture
def small_settings(tmp_path):
    """ Full settings with reduced model widths and a private run directory. """
    return small_settings_for(str(tmp_path / "run"))


@pytest.fixture(scope="session")
def topo():
    return smpl24()


@pytest.fixture
def run_state(tmp_path):
    """ Provides a fresh RunState for each test. """
    return RunState(json_path=str(tmp_path / "run_state.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, n_frames, n_bones=23, fps=10.0, with_root=True):
    vectors = normalize_rows(rng.standard_normal((n_frames, n_bones, 3)))
    root = rng.standard_normal((n_frames, 3)) * 0.1 if with_root else None
    return PoseSequence(fps, vectors, root)


@pytest.fixture(scope="session")
def session_settings(tmp_path_factory):
    return small_settings_for(str(tmp_path_factory.mktemp("session_run")))


@pytest.fixture(scope="session")
def synth_clips(topo, session_settings):
    """ Five 14 s synthetic clips; clip 4 is the test split. """
    return synth_dataset(5, 7, topo, SynthConfig.from_settings(session_settings))


@pytest.fixture(scope="session")
def synth_samples(synth_clips, session_settings):
    """ Training windows of the four train clips, windowed on the calling thread. """
    window = WindowConfig.from_settings(session_settings)
    audio_cfg = AudioConfig.from_settings(session_settings)
    samples = []
    for index, clip in enumerate(synth_clips):
        if clip.split == "train":
            samples.extend(window_clip(clip, window, audio_cfg, clip_index=index))
    return samples


@pytest.fixture
def double_precision():
    """ Run a test with float64 as the torch default dtype. """
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
