# ==============================================================================
# GROOVESYNTH - NETWORK CORE
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Shared neural building blocks (conv/graph encoders, transformers, BiGRU)
# ==============================================================================

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from src.core.errors import ShapeMismatch

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2


def seed_everything(seed: int) -> None:
    """ Seed torch and numpy global generators used by initialization and dropout. """
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def init_weights(module: nn.Module) -> None:
    """ Xavier-uniform for linear and conv weights, zero biases. """
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv1d)):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def sinusoidal_encoding(frames: torch.Tensor, dim: int) -> torch.Tensor:
    """
    Sinusoidal position codes indexed by absolute frame number.

    Parameters
    ----------
    frames : (N, L) tensor of frame indices (need not be contiguous)
    dim : encoding width

    Returns
    -------
    (N, L, dim) tensor in the default float dtype.
    """
    positions = frames.to(torch.get_default_dtype()).unsqueeze(-1)
    half = (dim + 1) // 2
    rates = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=positions.dtype) * 2.0 / dim)
    angles = positions * rates
    encoding = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1).flatten(-2)
    return encoding[..., :dim]


def _check_width(tensor: torch.Tensor, axis: int, expected: int, what: str) -> None:
    if tensor.shape[axis] != expected:
        raise ShapeMismatch(f"{what}: expected width {expected}, got {tuple(tensor.shape)}")


# =============================================================================
# CONVOLUTIONAL AUDIO ENCODER
# =============================================================================

@dataclass(frozen=True)
class ConvEncoderConfig:
    in_channels: int
    out_channels: int
    hidden: tuple = (64,)
    kernel_size: int = 5

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ShapeMismatch(f"Kernel size must be odd for same-padding, got {self.kernel_size}")


class ConvEncoder(nn.Module):
    """
    Stride-1, same-padded 1-D convolutions with leaky-ReLU after every layer.

    Input (N, C_in, L) -> output (N, C_out, L).
    """

    def __init__(self, cfg: ConvEncoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.in_channels, *cfg.hidden, cfg.out_channels]
        layers = []
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            layers.append(nn.Conv1d(c_in, c_out, cfg.kernel_size, padding=cfg.kernel_size // 2))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
        self.net = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 3 or features.shape[2] < 1:
            raise ShapeMismatch(f"Conv encoder expects (N, C, L>=1), got {tuple(features.shape)}")
        _check_width(features, 1, self.cfg.in_channels, "conv encoder input")
        return self.net(features)


# =============================================================================
# SPATIAL-TEMPORAL GRAPH POSE ENCODER
# =============================================================================

@dataclass(frozen=True, eq=False)
class GraphPoseEncoderConfig:
    """
    adjacency : (J-1) x (J-1) row-normalized bone graph with self-loops
    widths : per-bone channel widths of the graph convolutions
    n_states : number of column states (0 is always "masked")
    """

    adjacency: np.ndarray
    out_dim: int = 16
    widths: tuple = (16, 16)
    temporal_kernel: int = 3
    n_states: int = 2

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency, dtype=np.float64)
        n = adjacency.shape[0]
        if adjacency.shape != (n, n):
            raise ShapeMismatch(f"Adjacency must be square, got {adjacency.shape}")
        if not np.allclose(adjacency.sum(axis=1), 1.0):
            raise ShapeMismatch("Adjacency rows must sum to 1")
        if np.any(np.diag(adjacency) <= 0):
            raise ShapeMismatch("Adjacency needs self-loops")
        if not np.array_equal(adjacency > 0, (adjacency > 0).T):
            raise ShapeMismatch("Adjacency must be symmetric in structure")
        object.__setattr__(self, "adjacency", adjacency)

    @property
    def n_bones(self) -> int:
        return self.adjacency.shape[0]


class GraphPoseEncoder(nn.Module):
    """
    Per-frame graph convolutions over the bone graph, then temporal
    convolutions over frames.

    Input poses (N, L, J-1, 3) and integer column states (N, L); columns in
    state 0 are replaced by a learned mask token before encoding, and every
    column gets its state embedding added. Output (N, L, out_dim).
    """

    def __init__(self, cfg: GraphPoseEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("adjacency", torch.as_tensor(cfg.adjacency, dtype=torch.get_default_dtype()))
        self.mask_token = nn.Parameter(torch.zeros(cfg.n_bones, 3))
        nn.init.normal_(self.mask_token, std=0.1)

        widths = [3, *cfg.widths]
        self.graph_layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths[:-1], widths[1:]))
        k = cfg.temporal_kernel
        self.temporal = nn.Sequential(
            nn.Conv1d(cfg.n_bones * widths[-1], cfg.out_dim, k, padding=k // 2, padding_mode="replicate"),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv1d(cfg.out_dim, cfg.out_dim, k, padding=k // 2, padding_mode="replicate"),
        )
        self.activation = nn.LeakyReLU(LEAKY_SLOPE)
        self.state_embedding = nn.Embedding(cfg.n_states, cfg.out_dim)
        init_weights(self)

    def forward(self, poses: torch.Tensor, states: torch.Tensor) -> torch.Tensor:
        if poses.dim() != 4 or poses.shape[2:] != (self.cfg.n_bones, 3):
            raise ShapeMismatch(
                f"Pose encoder expects (N, L, {self.cfg.n_bones}, 3), got {tuple(poses.shape)}")
        if states.shape != poses.shape[:2]:
            raise ShapeMismatch(f"States {tuple(states.shape)} do not match poses {tuple(poses.shape[:2])}")

        masked = (states == 0)[..., None, None]
        x = torch.where(masked, self.mask_token.expand_as(poses), poses)
        for layer in self.graph_layers:
            x = self.activation(layer(torch.einsum("ij,nljc->nlic", self.adjacency, x)))

        n, length = x.shape[:2]
        x = x.reshape(n, length, -1).transpose(1, 2)
        x = self.temporal(x).transpose(1, 2)
        return x + self.state_embedding(states)


# =============================================================================
# TRANSFORMERS
# =============================================================================

@dataclass(frozen=True)
class TransformerConfig:
    model_dim: int
    heads: int
    blocks: int
    feedforward_dim: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ShapeMismatch(f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        if self.blocks < 1:
            raise ShapeMismatch("A transformer needs at least one block")


def causal_mask(length: int, device=None) -> torch.Tensor:
    """ True above the diagonal: position t may not attend to t' > t. """
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class TransformerBlock(nn.Module):
    """ Post-norm block: self-attention, optional cross-attention, GELU feed-forward. """

    def __init__(self, cfg: TransformerConfig, cross_dim: Optional[int] = None):
        super().__init__()
        d = cfg.model_dim
        self.self_attn = nn.MultiheadAttention(d, cfg.heads, dropout=cfg.dropout, batch_first=True)
        self.cross_attn = None
        if cross_dim is not None:
            self.cross_attn = nn.MultiheadAttention(d, cfg.heads, dropout=cfg.dropout, batch_first=True,
                                                    kdim=cross_dim, vdim=cross_dim)
            self.norm_cross = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, cfg.feedforward_dim), nn.GELU(),
                                 nn.Dropout(cfg.dropout), nn.Linear(cfg.feedforward_dim, d))
        self.norm_self = nn.LayerNorm(d)
        self.norm_ffn = nn.LayerNorm(d)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, memory: Optional[torch.Tensor] = None,
                attn_mask: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, torch.Tensor]:
        attended, weights = self.self_attn(x, x, x, attn_mask=attn_mask, need_weights=True)
        x = self.norm_self(x + self.dropout(attended))
        if self.cross_attn is not None and memory is not None:
            crossed, _ = self.cross_attn(x, memory, memory, need_weights=False)
            x = self.norm_cross(x + self.dropout(crossed))
        x = self.norm_ffn(x + self.dropout(self.ffn(x)))
        return x, weights


class TransformerEncoder(nn.Module):
    """
    Non-causal encoder over a whole sequence at once.

    ``seq`` (N, L, in_dim) is projected to model_dim (identity when widths
    match) and offset by frame-indexed sinusoids; ``cross`` (N, L', cross_dim)
    is attended by every block when the encoder was built with ``cross_dim``.
    """

    def __init__(self, cfg: TransformerConfig, in_dim: int, cross_dim: Optional[int] = None):
        super().__init__()
        self.cfg = cfg
        self.in_dim = in_dim
        self.cross_dim = cross_dim
        self.in_proj = nn.Identity() if in_dim == cfg.model_dim else nn.Linear(in_dim, cfg.model_dim)
        self.blocks = nn.ModuleList(TransformerBlock(cfg, cross_dim) for _ in range(cfg.blocks))
        init_weights(self.in_proj)

    def forward(self, seq: torch.Tensor, frames: torch.Tensor, cross: Optional[torch.Tensor] = None,
                return_attention: bool = False):
        if seq.dim() != 3 or seq.shape[1] < 1:
            raise ShapeMismatch(f"Encoder expects (N, L>=1, D), got {tuple(seq.shape)}")
        _check_width(seq, 2, self.in_dim, "encoder input")
        if frames.shape != seq.shape[:2]:
            raise ShapeMismatch(f"Frame indices {tuple(frames.shape)} do not match sequence {tuple(seq.shape[:2])}")
        if cross is not None:
            if self.cross_dim is None:
                raise ShapeMismatch("Encoder was built without cross-attention")
            _check_width(cross, 2, self.cross_dim, "cross-attention memory")

        x = self.in_proj(seq) + sinusoidal_encoding(frames, self.cfg.model_dim).to(seq.dtype)
        weights = []
        for block in self.blocks:
            x, w = block(x, cross)
            weights.append(w)
        return (x, weights) if return_attention else x


class TransformerDecoder(nn.Module):
    """
    Transformer decoder with cross-attention to an encoded memory.

    One-shot mode decodes every target position in a single pass from
    learned query embeddings (or caller-supplied query features) plus
    frame-indexed sinusoids. Autoregressive mode is causal: position t sees a
    learned start token and outputs 0..t-1, either teacher-forced or fed back
    from its own predictions.
    """

    def __init__(self, cfg: TransformerConfig, memory_dim: int, out_dim: int,
                 autoregressive: bool = False, query_dim: Optional[int] = None):
        super().__init__()
        self.cfg = cfg
        self.memory_dim = memory_dim
        self.out_dim = out_dim
        self.autoregressive = autoregressive
        d = cfg.model_dim

        self.query_token = nn.Parameter(torch.zeros(d))
        nn.init.normal_(self.query_token, std=0.02)
        self.query_proj = nn.Linear(query_dim, d) if query_dim is not None else None
        self.feedback_proj = nn.Linear(out_dim, d) if autoregressive else None
        self.blocks = nn.ModuleList(TransformerBlock(cfg, memory_dim) for _ in range(cfg.blocks))
        self.out_proj = nn.Linear(d, out_dim)
        for layer in (self.query_proj, self.feedback_proj, self.out_proj):
            if layer is not None:
                init_weights(layer)

    def _run_blocks(self, x: torch.Tensor, memory: torch.Tensor, causal: bool) -> torch.Tensor:
        mask = causal_mask(x.shape[1], x.device) if causal else None
        for block in self.blocks:
            x, _ = block(x, memory, mask)
        return self.out_proj(x)

    def _positions(self, frames: torch.Tensor, dtype) -> torch.Tensor:
        return sinusoidal_encoding(frames, self.cfg.model_dim).to(dtype)

    def forward(self, memory: torch.Tensor, frames: torch.Tensor,
                queries: Optional[torch.Tensor] = None,
                teacher: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Parameters
        ----------
        memory : (N, L', memory_dim)
        frames : (N, target_len) frame index of every output position
        queries : (N, target_len, query_dim), one-shot mode only
        teacher : (N, target_len, out_dim), autoregressive mode only;
            ground-truth outputs fed back in place of predictions.

        Returns
        -------
        (N, target_len, out_dim)
        """
        if memory.dim() != 3 or memory.shape[1] < 1:
            raise ShapeMismatch(f"Decoder memory must be (N, L'>=1, D), got {tuple(memory.shape)}")
        _check_width(memory, 2, self.memory_dim, "decoder memory")
        if frames.dim() != 2 or frames.shape[0] != memory.shape[0] or frames.shape[1] < 1:
            raise ShapeMismatch(f"Target frames {tuple(frames.shape)} do not fit memory {tuple(memory.shape)}")

        n, target_len = frames.shape
        positions = self._positions(frames, memory.dtype)

        if not self.autoregressive:
            if queries is not None:
                if self.query_proj is None:
                    raise ShapeMismatch("Decoder was built without query features")
                if queries.shape[:2] != (n, target_len):
                    raise ShapeMismatch(f"Queries {tuple(queries.shape)} do not match frames {tuple(frames.shape)}")
                base = self.query_proj(queries)
            else:
                base = self.query_token.to(memory.dtype).expand(n, target_len, -1)
            return self._run_blocks(base + positions, memory, causal=False)

        start = self.query_token.to(memory.dtype).expand(n, 1, -1)
        if teacher is not None:
            if teacher.shape != (n, target_len, self.out_dim):
                raise ShapeMismatch(f"Teacher {tuple(teacher.shape)} must be {(n, target_len, self.out_dim)}")
            inputs = torch.cat([start, self.feedback_proj(teacher[:, :-1])], dim=1)
            return self._run_blocks(inputs + positions, memory, causal=True)

        outputs = []
        inputs = start
        for step in range(target_len):
            predicted = self._run_blocks(inputs + positions[:, :step + 1], memory, causal=True)[:, -1:]
            outputs.append(predicted)
            inputs = torch.cat([inputs, self.feedback_proj(predicted)], dim=1)
        return torch.cat(outputs, dim=1)


# =============================================================================
# RECURRENT
# =============================================================================

class BiGRUEncoder(nn.Module):
    """ Bidirectional GRU; returns the per-step outputs (N, L, 2H), not the hidden state. """

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.in_dim = in_dim
        self.hidden = hidden
        self.gru = nn.GRU(in_dim, hidden, batch_first=True, bidirectional=True)
        for name, param in self.gru.named_parameters():
            if "weight_hh" in name:
                for gate in param.data.chunk(3, dim=0):
                    nn.init.orthogonal_(gate)
            elif "weight_ih" in name:
                nn.init.xavier_uniform_(param)
            else:
                nn.init.zeros_(param)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.dim() != 3 or seq.shape[1] < 1:
            raise ShapeMismatch(f"BiGRU expects (N, L>=1, D), got {tuple(seq.shape)}")
        _check_width(seq, 2, self.in_dim, "BiGRU input")
        outputs, _ = self.gru(seq)
        return outputs


def gru_parameter_count(in_dim: int, hidden: int) -> int:
    """ Both directions: 3 gates x (input weights + recurrent weights + two biases). """
    return 2 * 3 * hidden * (in_dim + hidden + 2)


def conv_parameter_count(widths: Sequence[int], kernel_size: int) -> int:
    return sum(a * b * kernel_size + b for a, b in zip(widths[:-1], widths[1:]))


def unit_bones(flat: torch.Tensor, n_bones: int, eps: float = 1e-12) -> torch.Tensor:
    """ (..., n_bones*3) head outputs -> (..., n_bones, 3) unit bone vectors. """
    vectors = flat.reshape(*flat.shape[:-1], n_bones, 3)
    return vectors / torch.sqrt(torch.sum(vectors ** 2, dim=-1, keepdim=True) + eps)


# =============================================================================
# CONFIG VIEWS
# =============================================================================

def conv_config(settings: dict, in_channels: int, out_channels: int) -> ConvEncoderConfig:
    conv = settings["model"]["conv"]
    return ConvEncoderConfig(in_channels, out_channels, tuple(conv["hidden"]), int(conv["kernel_size"]))


def graph_config(settings: dict, adjacency: np.ndarray, n_states: int) -> GraphPoseEncoderConfig:
    graph = settings["model"]["graph"]
    return GraphPoseEncoderConfig(adjacency, out_dim=int(settings["model"]["pose_dim"]),
                                  widths=tuple(graph["widths"]),
                                  temporal_kernel=int(graph["temporal_kernel"]), n_states=n_states)
