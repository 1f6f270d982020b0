# ==============================================================================
# GROOVESYNTH - REPLETION POSE SYNTHESIS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Adversarial in-between generator, discriminator, root trajectory predictor
# ==============================================================================

import logging
from typing import Optional, Union

import numpy as np
import torch
from torch import nn

from src.core.errors import CoverageError, ShapeMismatch
from src.dance.audiofeat import N_CHROMA, AudioFeatureSet
from src.dance.netcore import (LEAKY_SLOPE, BiGRUEncoder, ConvEncoder, GraphPoseEncoder,
                               TransformerConfig, TransformerDecoder, TransformerEncoder,
                               conv_config, graph_config, init_weights, unit_bones)
from src.dance.skeleton import FrameIndexSets, PoseSequence, SkeletonTopology

logger = logging.getLogger(__name__)

# Pose column states seen by the generator's pose encoder.
MASKED, SEED, BEAT = 0, 1, 2

NoiseSource = Union[torch.Tensor, torch.Generator, int, None]


def _model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


# =============================================================================
# GENERATOR
# =============================================================================

class RpsGenerator(nn.Module):
    """
    Fills every non-seed, non-beat frame of a window.

    The whole window is encoded once (audio codes, pose codes of the known
    frames, per-frame Gaussian noise). The encodings at the repletion frames
    are decoded into latents Z, and Z is decoded into poses.
    """

    def __init__(self, settings: dict, topo: SkeletonTopology):
        super().__init__()
        model = settings["model"]
        rps = model["rps"]
        self.n_bones = topo.n_bones
        self.mfcc_in = 3 * int(settings["audio"]["n_mfcc"])
        self.noise_dim = int(rps["noise_dim"])
        self.latent_dim = int(rps["latent_dim"])
        mfcc_dim, chroma_dim, pose_dim = int(model["mfcc_dim"]), int(rps["chroma_dim"]), int(model["pose_dim"])
        dropout = float(model["dropout"])
        feedforward = int(rps["feedforward"])

        self.mfcc_encoder = ConvEncoder(conv_config(settings, self.mfcc_in, mfcc_dim))
        self.chroma_encoder = ConvEncoder(conv_config(settings, N_CHROMA, chroma_dim))
        self.pose_encoder = GraphPoseEncoder(graph_config(settings, topo.bone_adjacency(), n_states=3))

        encoder_dim = int(rps["encoder_dim"])
        self.encoder = TransformerEncoder(
            TransformerConfig(encoder_dim, int(rps["encoder_heads"]), int(rps["encoder_blocks"]), feedforward, dropout),
            in_dim=mfcc_dim + chroma_dim + pose_dim + self.noise_dim)
        self.latent_decoder = TransformerDecoder(
            TransformerConfig(int(rps["decoder_dim"]), int(rps["latent_heads"]), int(rps["latent_blocks"]),
                              feedforward, dropout),
            memory_dim=encoder_dim, out_dim=self.latent_dim)
        self.motion_decoder = TransformerDecoder(
            TransformerConfig(int(rps["decoder_dim"]), int(rps["motion_heads"]), int(rps["motion_blocks"]),
                              feedforward, dropout),
            memory_dim=encoder_dim, out_dim=self.n_bones * 3, query_dim=self.latent_dim)

    def forward(self, mfcc: torch.Tensor, chroma: torch.Tensor, canvas: torch.Tensor,
                states: torch.Tensor, noise: torch.Tensor,
                repletion: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Parameters
        ----------
        mfcc, chroma : (N, C, T) window features
        canvas : (N, T, J-1, 3) known poses; columns in state MASKED are ignored
        states : (N, T) column states (MASKED / SEED / BEAT)
        noise : (N, T, noise_dim)
        repletion : (N, |R|) frame indices to generate

        Returns
        -------
        poses (N, |R|, J-1, 3) and latents Z (N, |R|, latent_dim)
        """
        n, n_frames = states.shape
        a_mfcc = self.mfcc_encoder(mfcc).transpose(1, 2)
        a_chroma = self.chroma_encoder(chroma).transpose(1, 2)
        q_known = self.pose_encoder(canvas, states)
        if noise.shape != (n, n_frames, self.noise_dim):
            raise ShapeMismatch(f"Noise must be {(n, n_frames, self.noise_dim)}, got {tuple(noise.shape)}")

        frames = torch.arange(n_frames, device=states.device).expand(n, n_frames)
        encoded = self.encoder(torch.cat([a_mfcc, a_chroma, q_known, noise], dim=-1), frames)
        encoded_r = encoded[torch.arange(n, device=states.device)[:, None], repletion]

        latents = self.latent_decoder(encoded_r, repletion)
        poses = self.motion_decoder(encoded_r, repletion, queries=latents)
        return unit_bones(poses, self.n_bones), latents


def draw_noise(n_frames: int, dim: int, source: NoiseSource = None,
               dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """ Per-frame standard Gaussian noise (n_frames x dim). An int source seeds a private generator. """
    if isinstance(source, torch.Tensor):
        if source.shape != (n_frames, dim):
            raise ShapeMismatch(f"Noise must be {(n_frames, dim)}, got {tuple(source.shape)}")
        return source.to(dtype)
    generator = source
    if isinstance(source, (int, np.integer)):
        generator = torch.Generator().manual_seed(int(source))
    return torch.randn(n_frames, dim, generator=generator).to(dtype)


def _check_parts(seed: torch.Tensor, beat_poses: torch.Tensor, sets: FrameIndexSets) -> None:
    if seed.shape[0] != sets.seed_len:
        raise CoverageError(f"{seed.shape[0]} seed poses for a seed window of {sets.seed_len}")
    if beat_poses.shape[0] != len(sets.generated_beats):
        raise CoverageError(
            f"{beat_poses.shape[0]} beat poses for {len(sets.generated_beats)} generated beats")


def rps_generate(gen: RpsGenerator, feats: AudioFeatureSet, seed, beat_poses, sets: FrameIndexSets,
                 noise: NoiseSource = None) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Generate the repletion poses of one window.

    Parameters
    ----------
    seed : T_S x (J-1) x 3 poses (array or tensor)
    beat_poses : (|B| - |B_S|) x (J-1) x 3 poses at the generated beats
    noise : explicit T x noise_dim tensor, a torch.Generator, an int seed, or
        None for the global generator.

    Returns
    -------
    (|R| x (J-1) x 3 unit poses, |R| x latent_dim latents Z)
    """
    dtype = _model_dtype(gen)
    seed = torch.as_tensor(seed, dtype=dtype)
    beat_poses = torch.as_tensor(beat_poses, dtype=dtype)
    _check_parts(seed, beat_poses, sets)
    if feats.n_frames != sets.n_frames:
        raise ShapeMismatch(f"Features span {feats.n_frames} frames, window has {sets.n_frames}")
    if seed.shape[1:] != (gen.n_bones, 3) or beat_poses.shape[1:] != (gen.n_bones, 3):
        raise ShapeMismatch(f"Poses must be (*, {gen.n_bones}, 3)")
    if not sets.repletion:
        raise CoverageError("Window has no repletion frames to generate")

    canvas = torch.zeros(sets.n_frames, gen.n_bones, 3, dtype=dtype)
    canvas[:sets.seed_len] = seed
    states = torch.full((sets.n_frames,), MASKED, dtype=torch.long)
    states[:sets.seed_len] = SEED
    if sets.generated_beats:
        beat_index = torch.as_tensor(sets.generated_beats, dtype=torch.long)
        canvas = canvas.index_put((beat_index,), beat_poses)
        states[beat_index] = BEAT

    poses, latents = gen(
        torch.as_tensor(feats.mfcc, dtype=dtype)[None],
        torch.as_tensor(feats.chroma, dtype=dtype)[None],
        canvas[None], states[None],
        draw_noise(sets.n_frames, gen.noise_dim, noise, dtype)[None],
        torch.as_tensor(sets.repletion, dtype=torch.long)[None],
    )
    return poses[0], latents[0]


def latent_canvas(latents: torch.Tensor, sets: FrameIndexSets) -> torch.Tensor:
    """ Scatter Z (|R| x D_Z) onto all T frames; seed and beat frames stay zero. """
    canvas = latents.new_zeros(sets.n_frames, latents.shape[-1])
    return canvas.index_put((torch.as_tensor(sets.repletion, dtype=torch.long),), latents)


def assemble_tensor(seed: torch.Tensor, beat_poses: torch.Tensor, repletion: torch.Tensor,
                    sets: FrameIndexSets) -> torch.Tensor:
    """ Differentiable T x (J-1) x 3 assembly of the three partition sources. """
    _check_parts(seed, beat_poses, sets)
    if repletion.shape[0] != len(sets.repletion):
        raise CoverageError(f"{repletion.shape[0]} repletion poses for {len(sets.repletion)} repletion frames")
    sets.check_partition()
    order = list(sets.seed) + list(sets.generated_beats) + list(sets.repletion)
    stacked = torch.cat([seed, beat_poses.to(seed.dtype), repletion.to(seed.dtype)], dim=0)
    return stacked[torch.as_tensor(np.argsort(order), dtype=torch.long)]


def assemble_full_dance(seed, beat_poses, repletion, sets: FrameIndexSets, fps: float = 10.0) -> PoseSequence:
    """ Full window as a PoseSequence without root; each frame comes from exactly one source. """
    full = assemble_tensor(torch.as_tensor(np.asarray(seed, dtype=np.float64)),
                           torch.as_tensor(np.asarray(beat_poses, dtype=np.float64)),
                           torch.as_tensor(np.asarray(repletion, dtype=np.float64)), sets)
    return PoseSequence(fps, full.numpy())


# =============================================================================
# DISCRIMINATOR
# =============================================================================

class RpsDiscriminator(nn.Module):
    """ Graph pose encoder -> BiGRU outputs -> temporal mean -> MLP -> logit. """

    def __init__(self, settings: dict, topo: SkeletonTopology):
        super().__init__()
        disc = settings["model"]["disc"]
        self.n_bones = topo.n_bones
        self.pose_encoder = GraphPoseEncoder(graph_config(settings, topo.bone_adjacency(), n_states=2))
        hidden = int(disc["hidden"])
        self.bigru = BiGRUEncoder(int(settings["model"]["pose_dim"]), hidden)

        layers = []
        width = 2 * hidden
        for size in disc["fc"]:
            layers += [nn.Linear(width, int(size)), nn.LeakyReLU(LEAKY_SLOPE)]
            width = int(size)
        self.fc = nn.Sequential(*layers)
        self.logit = nn.Linear(width, 1)
        init_weights(self.fc)
        # Near-zero logits at initialization.
        nn.init.normal_(self.logit.weight, std=1e-3)
        nn.init.zeros_(self.logit.bias)

    def logits(self, poses: torch.Tensor) -> torch.Tensor:
        """ (N, L, J-1, 3) -> (N,) logits. """
        states = torch.ones(poses.shape[:2], dtype=torch.long, device=poses.device)
        encoded = self.bigru(self.pose_encoder(poses, states))
        return self.logit(self.fc(encoded.mean(dim=1))).squeeze(-1)

    def forward(self, poses: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(poses))


def disc_forward(disc: RpsDiscriminator, poses) -> torch.Tensor:
    """ Probability that ``poses`` (L x (J-1) x 3, or batched) is real motion. """
    poses = torch.as_tensor(poses, dtype=_model_dtype(disc))
    single = poses.dim() == 3
    if single:
        poses = poses[None]
    if poses.dim() != 4 or poses.shape[1] < 1:
        raise ShapeMismatch(f"Discriminator expects (N, L>=1, J-1, 3), got {tuple(poses.shape)}")
    probs = disc(poses)
    return probs[0] if single else probs


# =============================================================================
# TRAJECTORY PREDICTOR
# =============================================================================

class TrajectoryPredictor(nn.Module):
    """
    Transformer encoder over the repletion poses followed by a causal
    single-head decoder emitting one root offset (meters, relative to the
    last seed root) per frame.
    """

    def __init__(self, settings: dict, topo: SkeletonTopology):
        super().__init__()
        model = settings["model"]
        traj = model["traj"]
        self.n_bones = topo.n_bones
        pose_dim = int(model["pose_dim"])
        dropout = float(model["dropout"])
        self.encoder = TransformerEncoder(
            TransformerConfig(pose_dim, int(traj["encoder_heads"]), int(traj["encoder_blocks"]),
                              int(traj["feedforward"]), dropout),
            in_dim=self.n_bones * 3)
        self.decoder = TransformerDecoder(
            TransformerConfig(pose_dim, int(traj["decoder_heads"]), int(traj["decoder_blocks"]),
                              int(traj["feedforward"]), dropout),
            memory_dim=pose_dim, out_dim=3, autoregressive=True)

    def forward(self, poses: torch.Tensor, frames: torch.Tensor,
                teacher: Optional[torch.Tensor] = None) -> torch.Tensor:
        n, length = poses.shape[:2]
        q_traj = self.encoder(poses.reshape(n, length, -1), frames)
        return self.decoder(q_traj, frames, teacher=teacher)


def predict_trajectory(tp: TrajectoryPredictor, poses, frames=None, teacher=None) -> torch.Tensor:
    """
    Root offsets for a repletion pose sequence.

    Parameters
    ----------
    poses : |R| x (J-1) x 3
    frames : |R| frame indices (defaults to 0..|R|-1)
    teacher : optional |R| x 3 ground-truth offsets fed back during training

    Returns
    -------
    |R| x 3 tensor (one row per input frame).
    """
    dtype = _model_dtype(tp)
    poses = torch.as_tensor(poses, dtype=dtype)
    if poses.dim() != 3 or poses.shape[0] < 1 or poses.shape[1:] != (tp.n_bones, 3):
        raise ShapeMismatch(f"Trajectory input must be (|R|>=1, {tp.n_bones}, 3), got {tuple(poses.shape)}")
    length = poses.shape[0]
    frames = torch.arange(length) if frames is None else torch.as_tensor(frames, dtype=torch.long)
    if frames.shape != (length,):
        raise ShapeMismatch(f"{tuple(frames.shape)} frame indices for {length} poses")
    if teacher is not None:
        teacher = torch.as_tensor(teacher, dtype=dtype)[None]
    return tp(poses[None], frames[None], teacher)[0]


def compose_root_trajectory(seed_root: np.ndarray, offsets: np.ndarray, sets: FrameIndexSets) -> np.ndarray:
    """
    Full T x 3 root path: seed roots as given, repletion roots from the
    predicted offsets, generated-beat roots linearly interpolated between the
    nearest known frames.
    """
    seed_root = np.asarray(seed_root, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    if seed_root.shape != (sets.seed_len, 3) or offsets.shape != (len(sets.repletion), 3):
        raise ShapeMismatch(f"Seed root {seed_root.shape} / offsets {offsets.shape} do not fit the window")

    root = np.zeros((sets.n_frames, 3))
    root[:sets.seed_len] = seed_root
    root[list(sets.repletion)] = seed_root[-1] + offsets
    known = np.array(sorted(set(sets.seed) | set(sets.repletion)))
    beats = np.array(sets.generated_beats, dtype=int)
    if beats.size:
        for axis in range(3):
            root[beats, axis] = np.interp(beats, known, root[known, axis])
    return root
