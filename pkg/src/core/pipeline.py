# ==============================================================================
# GROOVESYNTH - PIPELINE
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Training stages (beats -> repletion -> trajectory), generation, evaluation
# ==============================================================================

import dataclasses
import glob
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import psutil
import torch

from src.core.errors import (ConfigError, DataError, MissingCheckpoint, MissingRoot, NoBeatsFound, NonFiniteLoss,
                             ShapeMismatch, StageOrderError, TooFewSegments, TooShortAudio,
                             TooShortSeed)
from src.core.run_state import RunState
from src.core.service_manager import ServiceManager
from src.dance.audiofeat import (AudioClip, AudioConfig, AudioFeatureSet, extract_chroma,
                                 extract_features, extract_mfcc, load_wav)
from src.dance.bps import BpsInput, BpsModel, bps_forward
from src.dance.bvh import export_bvh
from src.dance.checkpoint import (load_checkpoint, restore_model, restore_optimizer, restore_rng,
                                  save_checkpoint)
from src.dance.dataset import (DanceClip, FeatureCache, TrainingSample, WindowConfig, check_corpus,
                               load_aist_dir)
from src.dance.losses import (MSE, SMOOTH_L1, LossComponents, LossWeights, SegmentPlan, adversarial_losses,
                              component_record, leg_motion_loss, pose_motion_loss, root_translation_loss,
                              rtc_loss, select_contrast_segment, total_losses)
from src.dance.metrics import MetricsReport, evaluate_corpus, latent_dispersion_export
from src.dance.motion_io import load_motion, save_motion
from src.dance.netcore import seed_everything
from src.dance.rps import (RpsDiscriminator, RpsGenerator, TrajectoryPredictor, assemble_tensor,
                           compose_root_trajectory, latent_canvas, predict_trajectory, rps_generate)
from src.dance.skeleton import FrameIndexSets, PoseSequence, SkeletonTopology, load_topology
from src.dance.synth import SynthConfig, synth_dataset
from src.utils.config import project_root, resolve_path

logger = logging.getLogger(__name__)

STAGES = ("bps", "rps", "traj")
RTC_SKIPPED = "rtc_skipped_samples"
BAS_FALLBACK = "bas_fallback_clips"


# =============================================================================
# CONFIGURATION
# =============================================================================

@dataclass(frozen=True)
class TrainConfig:
    """ One training stage's schedule, ablation switches and checkpoint paths. """

    stage: str
    epochs: int
    batch_size: int
    lr: float
    betas: tuple
    seed: int
    checkpoint_every: int
    run_dir: str
    teacher_forcing_ratio: float = 0.0
    disable_bps: bool = False
    disable_rtc: bool = False
    fixed_reference_rtc: bool = False
    resume: Optional[str] = None
    bps_checkpoint: Optional[str] = None
    rps_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise StageOrderError(f"Unknown stage '{self.stage}', expected one of {STAGES}")
        if self.epochs < 0 or self.batch_size < 1 or self.checkpoint_every < 1:
            raise ConfigError(f"{self.stage}: epochs >= 0, batch_size >= 1 and checkpoint_every >= 1 required")
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            raise ConfigError(f"teacher_forcing_ratio must lie in [0, 1], got {self.teacher_forcing_ratio}")

    @classmethod
    def from_settings(cls, settings: dict, stage: str, **options) -> "TrainConfig":
        training = settings["training"]
        section = training[stage]
        flags = {k: section[k] for k in ("teacher_forcing_ratio", "disable_bps", "disable_rtc",
                                         "fixed_reference_rtc") if k in section}
        base = dict(
            stage=stage,
            epochs=int(section["epochs"]),
            batch_size=int(section["batch_size"]),
            lr=float(section["lr"]),
            betas=tuple(float(b) for b in section["betas"]),
            seed=int(settings["model"]["seed"]),
            checkpoint_every=int(training["checkpoint_every"]),
            run_dir=resolve_path(training["run_dir"]),
            **flags,
        )
        base.update({k: v for k, v in options.items() if v is not None})
        return cls(**base)

    @property
    def checkpoint_dir(self) -> str:
        return os.path.join(self.run_dir, "checkpoints")

    def checkpoint_path(self, epoch: Optional[int] = None) -> str:
        name = self.stage if epoch is None else f"{self.stage}_epoch{epoch:04d}"
        return os.path.join(self.checkpoint_dir, f"{name}.ckpt")


def open_run_state(settings: dict) -> RunState:
    return RunState(os.path.join(resolve_path(settings["training"]["run_dir"]), "run_state.json"))


def build_topology(settings: dict) -> SkeletonTopology:
    skeleton = settings.get("skeleton", {})
    path = skeleton.get("topology_path")
    topo = load_topology(resolve_path(path) if path else None)
    if "up_axis" in skeleton and int(skeleton["up_axis"]) != topo.up_axis:
        topo = dataclasses.replace(topo, up_axis=int(skeleton["up_axis"]))
    return topo


# =============================================================================
# DATA
# =============================================================================

def load_clips(settings: dict, topo: SkeletonTopology, data_dir: Optional[str] = None,
               split: Optional[str] = "train") -> list[DanceClip]:
    """ Clips from a dataset directory, or the synthetic set when ``data_dir`` is None. """
    if data_dir is not None:
        return load_aist_dir(data_dir, topo, split=split, sample_rate=int(settings["audio"]["sample_rate"]))
    synth = settings["data"]["synth"]
    clips = synth_dataset(int(synth["n_clips"]), int(settings["model"]["seed"]), topo,
                          SynthConfig.from_settings(settings))
    return [c for c in clips if split is None or c.split == split]


def prepare_samples(settings: dict, clips: Sequence[DanceClip], run_state: RunState,
                    use_cache: bool = True) -> list[TrainingSample]:
    """ Window clips on the producer pool; the result is ordered by (clip, window). """
    audio_cfg = AudioConfig.from_settings(settings)
    cache = FeatureCache(resolve_path(settings["data"]["cache_dir"]), audio_cfg) if use_cache else None
    manager = ServiceManager(settings, run_state, project_root())
    samples = manager.produce_samples(list(clips), WindowConfig.from_settings(settings), audio_cfg, cache)
    check_corpus(samples)
    if cache is not None:
        logger.debug(f"Feature cache: {cache.hits} hits, {cache.misses} misses")
    return samples


# =============================================================================
# SHARED TRAINING HELPERS
# =============================================================================

def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield [int(i) for i in order[start:start + batch_size]]


def _epoch_order(cfg: TrainConfig, n_samples: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([cfg.seed, epoch]).permutation(n_samples)


def _adam(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)


def _require_finite(value: torch.Tensor, stage: str, epoch: int, batch: int) -> None:
    number = float(value.detach())
    if not math.isfinite(number):
        raise NonFiniteLoss(stage, epoch, batch, number)


def _mean_record(records: list[dict]) -> dict:
    keys = records[0].keys()
    return {k: float(np.mean([r[k] for r in records])) for k in keys}


def _rss_mb() -> float:
    return psutil.Process().memory_info().rss / 2 ** 20


def _log_epoch(stage: str, epoch: int, epochs: int, record: dict) -> None:
    parts = " ".join(f"{k}={v:.5f}" for k, v in record.items() if k != "epoch")
    logger.info(f"[{stage}] epoch {epoch + 1}/{epochs} {parts} rss={_rss_mb():.0f}MB")


def _require_samples(samples: Sequence[TrainingSample], stage: str) -> None:
    if not samples:
        raise DataError(f"{stage}: training set is empty")


def _resume(cfg: TrainConfig, run_state: RunState, models: dict, optimizers: dict) -> int:
    """ Restore a checkpoint of the same stage; returns the first epoch left to run. """
    if cfg.resume is None:
        return 0
    data = load_checkpoint(cfg.resume, cfg.stage)
    for name, model in models.items():
        restore_model(data, name, model)
        restore_optimizer(data, name, model, optimizers[name])
    restore_rng(data)
    run_state.truncate_history(cfg.stage, data.epoch)
    logger.info(f"[{cfg.stage}] resumed from {cfg.resume} at epoch {data.epoch}")
    return data.epoch


def _end_epoch(cfg: TrainConfig, settings: dict, topo: SkeletonTopology, run_state: RunState,
               epoch: int, models: dict, optimizers: dict, extra: Optional[dict] = None) -> None:
    done = epoch + 1
    if done % cfg.checkpoint_every == 0 and done < cfg.epochs:
        path = cfg.checkpoint_path(done)
        save_checkpoint(path, cfg.stage, done, settings, topo.to_dict(), models, optimizers, extra)
        run_state.set_checkpoint(f"{cfg.stage}_latest", path)


def _finish(cfg: TrainConfig, settings: dict, topo: SkeletonTopology, run_state: RunState,
            models: dict, optimizers: dict, extra: Optional[dict] = None) -> str:
    path = cfg.checkpoint_path()
    save_checkpoint(path, cfg.stage, cfg.epochs, settings, topo.to_dict(), models, optimizers, extra)
    run_state.set_checkpoint(cfg.stage, path)
    return path


def _stage_checkpoint(explicit: Optional[str], run_state: RunState, stage: str, needed_by: str) -> str:
    path = explicit or run_state.get_checkpoint(stage)
    if path is None:
        raise MissingCheckpoint(f"{needed_by} needs a trained '{stage}' checkpoint; run train-{stage} first")
    return path


def _frozen(model: torch.nn.Module) -> torch.nn.Module:
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


def load_bps(settings: dict, topo: SkeletonTopology, path: str) -> BpsModel:
    model = BpsModel(settings, topo)
    restore_model(load_checkpoint(path, "bps"), "bps", model)
    return _frozen(model)


def load_rps(settings: dict, topo: SkeletonTopology, path: str) -> tuple[RpsGenerator, dict]:
    """ Frozen generator plus the checkpoint's extra record (ablation flags). """
    data = load_checkpoint(path, "rps")
    gen = RpsGenerator(settings, topo)
    restore_model(data, "generator", gen)
    return _frozen(gen), data.extra


def load_traj(settings: dict, topo: SkeletonTopology, path: str) -> TrajectoryPredictor:
    tp = TrajectoryPredictor(settings, topo)
    restore_model(load_checkpoint(path, "traj"), "traj", tp)
    return _frozen(tp)


def _tensor(array, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.asarray(array), dtype=dtype)


# =============================================================================
# STAGE 1: BEAT POSES
# =============================================================================

def train_bps(cfg: TrainConfig, samples: Sequence[TrainingSample], settings: dict,
              topo: SkeletonTopology, run_state: RunState) -> str:
    """
    Fit the beat pose model with MSE pose-motion and leg-motion losses.

    Returns the final checkpoint path (also recorded in the run state).
    """
    _require_samples(samples, "bps")
    seed_everything(cfg.seed)
    weights = LossWeights.from_settings(settings)
    model = BpsModel(settings, topo)
    optimizer = _adam(model, cfg)
    models, optimizers = {"bps": model}, {"bps": optimizer}
    start = _resume(cfg, run_state, models, optimizers)

    for epoch in range(start, cfg.epochs):
        model.train()
        records = []
        for batch_index, batch in enumerate(_batches(_epoch_order(cfg, len(samples), epoch), cfg.batch_size)):
            optimizer.zero_grad()
            pm, lm = 0.0, 0.0
            for i in batch:
                sample = samples[i]
                pred = bps_forward(model, BpsInput.build(sample.features, sample.sets, sample.seed))
                gt = _tensor(sample.beat_poses)
                pm = pm + pose_motion_loss(gt, pred, MSE, weights)
                lm = lm + leg_motion_loss(gt, pred, topo, weights)
            components = LossComponents(pm=pm / len(batch), lm=lm / len(batch))
            total, _ = total_losses(components, weights, "bps", epoch, batch_index)
            total.backward()
            optimizer.step()
            records.append(component_record(components, weights))

        record = _mean_record(records)
        _log_epoch("bps", epoch, cfg.epochs, record)
        run_state.append_history("bps", {"epoch": epoch + 1, **record})
        _end_epoch(cfg, settings, topo, run_state, epoch, models, optimizers)

    return _finish(cfg, settings, topo, run_state, models, optimizers)


# =============================================================================
# STAGE 2: REPLETION POSES
# =============================================================================

def _beat_source(sample: TrainingSample, bps: Optional[BpsModel], use_ground_truth: bool):
    """ Window partition and beat poses the generator is conditioned on. """
    if bps is None:
        sets = sample.sets.without_beats()
        return sets, np.zeros((0,) + sample.poses.shape[1:])
    if use_ground_truth:
        return sample.sets, sample.beat_poses
    with torch.no_grad():
        poses = bps_forward(bps, BpsInput.build(sample.features, sample.sets, sample.seed))
    return sample.sets, poses


def _segment_plan(settings: dict, n_frames: int) -> Optional[SegmentPlan]:
    try:
        return SegmentPlan.from_settings(settings, n_frames)
    except TooFewSegments as e:
        logger.warning(f"Temporal contrast disabled for {n_frames}-frame windows: {e}")
        return None


def train_rps(cfg: TrainConfig, samples: Sequence[TrainingSample], settings: dict,
              topo: SkeletonTopology, run_state: RunState) -> str:
    """
    Adversarial training of the repletion generator against the sequence
    discriminator, with the temporal contrast loss on the generator latents.

    Each batch runs one discriminator step, then one generator step. The
    beat model stays frozen; ``disable_bps`` folds the beats into the
    repletion set instead.
    """
    _require_samples(samples, "rps")
    bps = None
    if not cfg.disable_bps:
        bps = load_bps(settings, topo, _stage_checkpoint(cfg.bps_checkpoint, run_state, "bps", "train_rps"))

    seed_everything(cfg.seed)
    weights = LossWeights.from_settings(settings)
    if cfg.disable_rtc:
        weights = dataclasses.replace(weights, rtc=0.0)
    gen, disc = RpsGenerator(settings, topo), RpsDiscriminator(settings, topo)
    gen_opt, disc_opt = _adam(gen, cfg), _adam(disc, cfg)
    models = {"generator": gen, "discriminator": disc}
    optimizers = {"generator": gen_opt, "discriminator": disc_opt}
    extra = {"disable_bps": cfg.disable_bps, "disable_rtc": cfg.disable_rtc,
             "fixed_reference_rtc": cfg.fixed_reference_rtc}
    start = _resume(cfg, run_state, models, optimizers)
    plan = None if cfg.disable_rtc else _segment_plan(settings, samples[0].sets.n_frames)

    for epoch in range(start, cfg.epochs):
        gen.train()
        disc.train()
        rng = np.random.default_rng([cfg.seed, epoch, 1])
        records = []
        for batch_index, batch in enumerate(_batches(_epoch_order(cfg, len(samples), epoch), cfg.batch_size)):
            use_ground_truth = bool(rng.random() < cfg.teacher_forcing_ratio)
            fakes, reals, contrasts, skipped = [], [], [], 0
            for i in batch:
                sample = samples[i]
                sets, beat_poses = _beat_source(sample, bps, use_ground_truth)
                seed = _tensor(sample.seed)
                repletion, latents = rps_generate(gen, sample.features, seed, beat_poses, sets)
                fake = assemble_tensor(seed, _tensor(beat_poses), repletion, sets)
                fakes.append(fake)
                reals.append(_tensor(sample.poses))
                if plan is None:
                    skipped += int(not cfg.disable_rtc)
                    continue
                try:
                    n, n_bar = select_contrast_segment(fake, plan, rng, cfg.fixed_reference_rtc)
                except TooFewSegments:
                    skipped += 1
                    continue
                contrasts.append(rtc_loss(latent_canvas(latents, sets), n, n_bar, plan))
            if skipped:
                run_state.increment(RTC_SKIPPED, skipped)

            fake_batch, real_batch = torch.stack(fakes), torch.stack(reals)

            disc_opt.zero_grad()
            _, disc_loss = adversarial_losses(disc, real_batch, fake_batch.detach(), weights.log_clamp)
            _require_finite(disc_loss, "rps/disc", epoch, batch_index)
            disc_loss.backward()
            disc_opt.step()
            with torch.no_grad():
                p_real, p_fake = disc(real_batch), disc(fake_batch)
                accuracy = 0.5 * (float((p_real > 0.5).float().mean()) + float((p_fake < 0.5).float().mean()))

            gen_opt.zero_grad()
            gen_loss, _ = adversarial_losses(disc, real_batch, fake_batch, weights.log_clamp)
            components = LossComponents(
                pm=pose_motion_loss(real_batch, fake_batch, SMOOTH_L1, weights),
                lm=leg_motion_loss(real_batch, fake_batch, topo, weights),
                gen=gen_loss,
                rtc=torch.stack(contrasts).mean() if contrasts else 0.0,
            )
            _, total = total_losses(components, weights, "rps", epoch, batch_index)
            total.backward()
            gen_opt.step()
            records.append(component_record(components, weights,
                                            {"disc": float(disc_loss.detach()), "disc_acc": accuracy}))

        record = _mean_record(records)
        _log_epoch("rps", epoch, cfg.epochs, record)
        run_state.append_history("rps", {"epoch": epoch + 1, **record})
        _end_epoch(cfg, settings, topo, run_state, epoch, models, optimizers, extra)

    return _finish(cfg, settings, topo, run_state, models, optimizers, extra)


# =============================================================================
# STAGE 3: ROOT TRAJECTORY
# =============================================================================

def _generator_inputs(settings: dict, topo: SkeletonTopology, run_state: RunState,
                      cfg: TrainConfig) -> tuple[RpsGenerator, Optional[BpsModel]]:
    gen, extra = load_rps(settings, topo, _stage_checkpoint(cfg.rps_checkpoint, run_state, "rps", "train_traj"))
    bps = None
    if not extra.get("disable_bps", False):
        bps = load_bps(settings, topo, _stage_checkpoint(cfg.bps_checkpoint, run_state, "bps", "train_traj"))
    return gen, bps


def _noise_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def generated_repletion(gen: RpsGenerator, bps: Optional[BpsModel], sample: TrainingSample,
                        noise_seed: int) -> tuple[FrameIndexSets, np.ndarray, np.ndarray]:
    """ Detached generator output for one sample: (sets, repletion poses, latent canvas). """
    sets, beat_poses = _beat_source(sample, bps, use_ground_truth=False)
    with torch.no_grad():
        repletion, latents = rps_generate(gen, sample.features, sample.seed, beat_poses, sets, noise_seed)
    return sets, repletion.numpy(), latent_canvas(latents, sets).numpy()


def train_traj(cfg: TrainConfig, samples: Sequence[TrainingSample], settings: dict,
               topo: SkeletonTopology, run_state: RunState) -> str:
    """
    Fit the root trajectory predictor on generated (detached) repletion poses
    against ground-truth root offsets from the last seed frame.
    """
    _require_samples(samples, "traj")
    gen, bps = _generator_inputs(settings, topo, run_state, cfg)

    inputs = []
    for sample in samples:
        sets, repletion, _ = generated_repletion(gen, bps, sample, _noise_seed(cfg.seed, *sample.key))
        offsets = sample.root[list(sets.repletion)] - sample.root[sets.seed_len - 1]
        inputs.append((sets, _tensor(repletion), _tensor(offsets)))

    seed_everything(cfg.seed)
    weights = LossWeights.from_settings(settings)
    tp = TrajectoryPredictor(settings, topo)
    optimizer = _adam(tp, cfg)
    models, optimizers = {"traj": tp}, {"traj": optimizer}
    start = _resume(cfg, run_state, models, optimizers)

    for epoch in range(start, cfg.epochs):
        tp.train()
        records = []
        for batch_index, batch in enumerate(_batches(_epoch_order(cfg, len(samples), epoch), cfg.batch_size)):
            optimizer.zero_grad()
            loss = 0.0
            for i in batch:
                sets, poses, offsets = inputs[i]
                pred = predict_trajectory(tp, poses, sets.repletion, teacher=offsets)
                loss = loss + root_translation_loss(offsets, pred, weights)
            loss = loss / len(batch)
            _require_finite(loss, "traj", epoch, batch_index)
            loss.backward()
            optimizer.step()
            records.append({"rt": float(loss.detach())})

        record = _mean_record(records)
        _log_epoch("traj", epoch, cfg.epochs, record)
        run_state.append_history("traj", {"epoch": epoch + 1, **record})
        _end_epoch(cfg, settings, topo, run_state, epoch, models, optimizers)

    return _finish(cfg, settings, topo, run_state, models, optimizers)


def train_all(settings: dict, samples: Sequence[TrainingSample], topo: SkeletonTopology,
              run_state: RunState) -> dict[str, str]:
    """ Every stage from ``config/stages_list.json`` in order. """
    manager = ServiceManager(settings, run_state, project_root())
    paths = {}
    for name, stage_fn in manager.load_stages():
        stage = name.replace("train_", "")
        paths[stage] = stage_fn(TrainConfig.from_settings(settings, stage), samples, settings, topo, run_state)
    return paths


# =============================================================================
# GENERATION
# =============================================================================

@dataclass
class GenerationModels:
    gen: RpsGenerator
    traj: TrajectoryPredictor
    bps: Optional[BpsModel] = None


def load_generation_models(settings: dict, topo: SkeletonTopology, run_state: RunState,
                           bps_path: Optional[str] = None, rps_path: Optional[str] = None,
                           traj_path: Optional[str] = None) -> GenerationModels:
    gen, extra = load_rps(settings, topo, _stage_checkpoint(rps_path, run_state, "rps", "generate"))
    traj = load_traj(settings, topo, _stage_checkpoint(traj_path, run_state, "traj", "generate"))
    bps = None
    if not extra.get("disable_bps", False):
        bps = load_bps(settings, topo, _stage_checkpoint(bps_path, run_state, "bps", "generate"))
    return GenerationModels(gen, traj, bps)


def window_features(audio: AudioClip, audio_cfg: AudioConfig) -> AudioFeatureSet:
    """ Features of one generation window; silent windows get an empty beat list. """
    try:
        return extract_features(audio, audio_cfg)
    except NoBeatsFound as e:
        logger.warning(f"No beats in generation window ({e}); generating without beat poses")
        return AudioFeatureSet(extract_mfcc(audio, audio_cfg.fps, audio_cfg.n_mfcc, audio_cfg),
                               extract_chroma(audio, audio_cfg.fps, audio_cfg), (), audio_cfg.fps)


def _window_sets(feats: AudioFeatureSet, window: WindowConfig, use_beats: bool) -> FrameIndexSets:
    sets = FrameIndexSets.build(window.n_frames, window.seed_frames, feats.beats,
                                window.max_beats, window.max_seed_beats)
    if use_beats and sets.seed_beats and sets.generated_beats:
        return sets
    return sets.without_beats()


def generate_dance(settings: dict, models: GenerationModels, audio: AudioClip, seed_pose: PoseSequence,
                   seed: int) -> tuple[PoseSequence, list[int]]:
    """
    Dance for the whole audio clip, window by window.

    Windows start every T - T_S frames; each is seeded with the previous
    output at its own first T_S frames. The last window runs on
    silence-padded audio and the result is cut to round(duration * fps).

    Returns the dance and the music beat frames it was conditioned on.
    """
    window = WindowConfig.from_settings(settings)
    audio_cfg = AudioConfig.from_settings(settings)
    n_frames, seed_len = window.n_frames, window.seed_frames

    if audio.duration + 1e-9 < window.window_seconds:
        raise TooShortAudio(f"Audio lasts {audio.duration:.2f}s, generation needs {window.window_seconds}s")
    if seed_pose.n_frames < seed_len:
        raise TooShortSeed(f"Seed motion has {seed_pose.n_frames} frames, needs {seed_len}")
    if seed_pose.root is None:
        raise MissingRoot("Seed motion has no root trajectory")
    if abs(seed_pose.fps - window.fps) > 1e-9:
        raise ShapeMismatch(f"Seed motion runs at {seed_pose.fps} fps, expected {window.fps}")

    total = int(round(audio.duration * window.fps))
    step = n_frames - seed_len
    n_windows = max(1, math.ceil((total - seed_len) / step))
    span = (n_windows - 1) * step + n_frames
    vectors = np.zeros((span,) + seed_pose.line_vectors.shape[1:])
    root = np.zeros((span, 3))
    vectors[:seed_len] = seed_pose.line_vectors[:seed_len]
    root[:seed_len] = seed_pose.root[:seed_len]
    music_beats = set()

    torch.manual_seed(seed)
    for w in range(n_windows):
        start = w * step
        segment = audio.segment(start / window.fps, (start + n_frames) / window.fps)
        feats = window_features(segment, audio_cfg)
        sets = _window_sets(feats, window, models.bps is not None)
        seed_vectors = vectors[start:start + seed_len]

        with torch.no_grad():
            if sets.generated_beats:
                beat_poses = bps_forward(models.bps, BpsInput.build(feats, sets, seed_vectors)).numpy()
            else:
                beat_poses = np.zeros((0,) + seed_vectors.shape[1:])
            repletion, _ = rps_generate(models.gen, feats, seed_vectors, beat_poses, sets, _noise_seed(seed, w))
            offsets = predict_trajectory(models.traj, repletion, sets.repletion).numpy()

        full = assemble_tensor(_tensor(seed_vectors, torch.float64), _tensor(beat_poses, torch.float64),
                               _tensor(repletion.numpy(), torch.float64), sets).numpy()
        vectors[start:start + n_frames] = full
        root[start:start + n_frames] = compose_root_trajectory(root[start:start + seed_len], offsets, sets)
        # Beats inside a later window's seed span were already taken from the window before.
        first = 0 if w == 0 else seed_len
        music_beats.update(start + b for b in feats.beats if b >= first and start + b < total)
        logger.debug(f"Window {w + 1}/{n_windows}: {len(sets.generated_beats)} beat poses, "
                     f"{len(sets.repletion)} repletion poses")

    norms = np.linalg.norm(vectors[:total], axis=-1, keepdims=True)
    pose = PoseSequence(window.fps, vectors[:total] / norms, root[:total])
    return pose, sorted(music_beats)


def generate(settings: dict, audio_path: str, seed_motion_path: str, out_path: str, run_state: RunState,
             topo: Optional[SkeletonTopology] = None, bvh_path: Optional[str] = None,
             checkpoints: Optional[dict] = None, seed: Optional[int] = None) -> PoseSequence:
    """ Generate a dance for a WAV file and write it as motion JSON (plus optional BVH). """
    topo = topo or build_topology(settings)
    checkpoints = checkpoints or {}
    models = load_generation_models(settings, topo, run_state, checkpoints.get("bps"),
                                    checkpoints.get("rps"), checkpoints.get("traj"))
    audio = load_wav(audio_path, int(settings["audio"]["sample_rate"]))
    seed_pose, file_topo, _ = load_motion(seed_motion_path, topo)
    seed = int(settings["model"]["seed"]) if seed is None else seed

    pose, music_beats = generate_dance(settings, models, audio, seed_pose, seed)
    save_motion(out_path, pose, file_topo, music_beats)
    logger.info(f"Generated {pose.n_frames} frames from {audio_path} -> {out_path}")
    if bvh_path:
        export_bvh(bvh_path, pose, file_topo)
    return pose


# =============================================================================
# EVALUATION
# =============================================================================

def collect_motion_paths(paths: Sequence[str]) -> list[str]:
    """ Expand directories (and dataset roots with a ``motions/`` folder) into sorted JSON paths. """
    found = []
    for path in paths:
        if os.path.isdir(path):
            folder = os.path.join(path, "motions") if os.path.isdir(os.path.join(path, "motions")) else path
            found.extend(sorted(glob.glob(os.path.join(folder, "*.json"))))
        else:
            found.append(path)
    return found


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = str(path) + ".tmp"
    with open(tmp_path, "w") as f:
        json.dump(payload, f, indent=2)
    os.replace(tmp_path, path)


def evaluate(settings: dict, reference: Sequence[str], generated: Sequence[str],
             out_path: Optional[str] = None, run_state: Optional[RunState] = None,
             topo: Optional[SkeletonTopology] = None) -> MetricsReport:
    """ Metrics of generated motion files against reference motion files. """
    topo = topo or build_topology(settings)
    ref = [load_motion(p, topo)[0] for p in collect_motion_paths(reference)]
    gen_files = [load_motion(p, topo) for p in collect_motion_paths(generated)]
    metrics = settings["metrics"]
    report = evaluate_corpus(ref, [pose for pose, _, _ in gen_files], topo,
                             [beats for _, _, beats in gen_files], float(metrics["bas_sigma"]),
                             float(metrics["fid_eps"]), float(metrics["pfc_eps"]),
                             float(metrics.get("kinematic_smoothing", 0.0)))
    if run_state is not None and report.bas_fallback_clips:
        run_state.increment(BAS_FALLBACK, report.bas_fallback_clips)
    if out_path:
        _write_json(out_path, report.to_dict())
    return report


def export_latents(settings: dict, samples: Sequence[TrainingSample], out_path: str, run_state: RunState,
                   topo: Optional[SkeletonTopology] = None, rps_path: Optional[str] = None,
                   bps_path: Optional[str] = None) -> dict:
    """ Latent segments and their intra-clip dispersion for every sample, as JSON. """
    _require_samples(samples, "export_latents")
    topo = topo or build_topology(settings)
    cfg = TrainConfig.from_settings(settings, "traj", rps_checkpoint=rps_path, bps_checkpoint=bps_path)
    gen, bps = _generator_inputs(settings, topo, run_state, cfg)

    latents = {}
    for sample in samples:
        _, _, canvas = generated_repletion(gen, bps, sample, _noise_seed(cfg.seed, *sample.key))
        latents[f"{sample.clip_name}/{sample.window_index}"] = canvas
    plan = SegmentPlan.from_settings(settings, samples[0].sets.n_frames)
    payload = latent_dispersion_export(latents, plan)
    _write_json(out_path, payload)
    logger.info(f"Exported latents of {len(latents)} windows (mean dispersion {payload['mean_dispersion']})")
    return payload
