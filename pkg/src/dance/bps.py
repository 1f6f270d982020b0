# ==============================================================================
# GROOVESYNTH - BEAT POSE SYNTHESIS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: One-shot generation of the dance poses on the music beats
# ==============================================================================

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from src.core.errors import EmptyBeats, IndexOutOfRange, ShapeMismatch
from src.dance.audiofeat import N_CHROMA, AudioFeatureSet
from src.dance.netcore import (ConvEncoder, GraphPoseEncoder, TransformerConfig, TransformerEncoder,
                               conv_config, graph_config, init_weights, unit_bones)
from src.dance.skeleton import FrameIndexSets, SkeletonTopology

logger = logging.getLogger(__name__)

# Pose column states seen by the BPS pose encoder.
MASKED, SEED = 0, 1


class BpsModel(nn.Module):
    """
    Audio encoders + graph pose encoder + transformer encoder over the beat
    sequence.

    Every beat column concatenates its MFCC code, chroma code and pose code;
    the transformer additionally cross-attends to the pose codes, and a
    linear head maps each column to unit bone vectors.
    """

    def __init__(self, settings: dict, topo: SkeletonTopology):
        super().__init__()
        model = settings["model"]
        bps = model["bps"]
        self.n_bones = topo.n_bones
        self.mfcc_in = 3 * int(settings["audio"]["n_mfcc"])
        mfcc_dim, chroma_dim, pose_dim = int(model["mfcc_dim"]), int(bps["chroma_dim"]), int(model["pose_dim"])

        self.mfcc_encoder = ConvEncoder(conv_config(settings, self.mfcc_in, mfcc_dim))
        self.chroma_encoder = ConvEncoder(conv_config(settings, N_CHROMA, chroma_dim))
        self.pose_encoder = GraphPoseEncoder(graph_config(settings, topo.bone_adjacency(), n_states=2))

        self.te_config = TransformerConfig(model_dim=mfcc_dim + chroma_dim + pose_dim,
                                           heads=int(bps["heads"]), blocks=int(bps["blocks"]),
                                           feedforward_dim=int(bps["feedforward"]),
                                           dropout=float(model["dropout"]))
        self.te_generator = TransformerEncoder(self.te_config, in_dim=self.te_config.model_dim,
                                               cross_dim=pose_dim)
        self.output_head = nn.Linear(self.te_config.model_dim, self.n_bones * 3)
        init_weights(self.output_head)

    def forward(self, mfcc: torch.Tensor, chroma: torch.Tensor, poses: torch.Tensor,
                seed_mask: torch.Tensor, frames: torch.Tensor) -> torch.Tensor:
        """
        Parameters
        ----------
        mfcc : (N, 3*n_mfcc, |B|) features gathered at the beat frames
        chroma : (N, 12, |B|)
        poses : (N, |B|, J-1, 3); only columns flagged in ``seed_mask`` are read
        seed_mask : (N, |B|) bool
        frames : (N, |B|) beat frame indices

        Returns
        -------
        (N, |B|, J-1, 3) unit bone vectors for every beat column.
        """
        a_mfcc = self.mfcc_encoder(mfcc).transpose(1, 2)
        a_chroma = self.chroma_encoder(chroma).transpose(1, 2)
        q_beats = self.pose_encoder(poses, seed_mask.long())
        encoded = self.te_generator(torch.cat([a_mfcc, a_chroma, q_beats], dim=-1), frames, cross=q_beats)
        return unit_bones(self.output_head(encoded), self.n_bones)


@dataclass(frozen=True, eq=False)
class BpsInput:
    """
    mfcc / chroma : feature columns at the beat frames (C x |B|)
    seed_poses : |B_S| x (J-1) x 3 ground-truth poses at the seed beats
    """

    sets: FrameIndexSets
    mfcc: np.ndarray
    chroma: np.ndarray
    seed_poses: np.ndarray

    def __post_init__(self):
        n_beats = len(self.sets.beats)
        if self.mfcc.shape[1] != n_beats or self.chroma.shape[1] != n_beats:
            raise ShapeMismatch(
                f"Beat features have {self.mfcc.shape[1]}/{self.chroma.shape[1]} columns for {n_beats} beats")
        if self.seed_poses.shape[0] != len(self.sets.seed_beats):
            raise ShapeMismatch(
                f"{self.seed_poses.shape[0]} seed poses for {len(self.sets.seed_beats)} seed beats")

    @classmethod
    def build(cls, feats: AudioFeatureSet, sets: FrameIndexSets, seed: np.ndarray) -> "BpsInput":
        """ ``seed`` holds the T_S seed-window poses (T_S x (J-1) x 3). """
        mfcc, chroma = gather_beat_features(feats, sets.beats)
        return cls(sets, mfcc, chroma, np.asarray(seed)[list(sets.seed_beats)])

    @property
    def seed_mask(self) -> np.ndarray:
        return np.array([b in self.sets.seed_beats for b in self.sets.beats], dtype=bool)


def gather_beat_features(feats: AudioFeatureSet, beats) -> tuple[np.ndarray, np.ndarray]:
    """ Column i of each output is the feature column at frame ``beats[i]``. """
    beats = [int(b) for b in beats]
    out_of_range = [b for b in beats if not 0 <= b < feats.n_frames]
    if out_of_range:
        raise IndexOutOfRange(f"Beat frames {out_of_range} outside [0, {feats.n_frames})")
    return feats.mfcc[:, beats], feats.chroma[:, beats]


def _model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def bps_forward(model: BpsModel, inp: BpsInput) -> torch.Tensor:
    """
    Poses for every non-seed beat frame, all produced by one forward pass.

    Returns
    -------
    (|B| - |B_S|) x (J-1) x 3 tensor, unit bone vectors, in beat order.
    """
    sets = inp.sets
    if not sets.generated_beats:
        raise EmptyBeats(f"All {len(sets.beats)} beats lie in the seed window; nothing to generate")
    if not sets.seed_beats:
        raise EmptyBeats("Beat synthesis needs at least one beat inside the seed window")
    if inp.seed_poses.shape[1:] != (model.n_bones, 3):
        raise ShapeMismatch(f"Seed poses {inp.seed_poses.shape} do not fit {model.n_bones} bones")

    dtype = _model_dtype(model)
    mask = inp.seed_mask
    n_beats = len(sets.beats)
    poses = np.zeros((n_beats, model.n_bones, 3))
    poses[mask] = inp.seed_poses

    out = model(
        torch.as_tensor(inp.mfcc, dtype=dtype)[None],
        torch.as_tensor(inp.chroma, dtype=dtype)[None],
        torch.as_tensor(poses, dtype=dtype)[None],
        torch.as_tensor(mask)[None],
        torch.as_tensor(sets.beats, dtype=torch.long)[None],
    )[0]
    return out[torch.as_tensor(~mask)]
