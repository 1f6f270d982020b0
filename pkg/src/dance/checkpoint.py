# ==============================================================================
# GROOVESYNTH - CHECKPOINTS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Single-archive model checkpoints (JSON manifest + float32 arrays)
# ==============================================================================

import io
import json
import logging
import os
import zipfile
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import torch
from torch import nn

from src.core.errors import FormatError, MissingCheckpoint

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ARRAY_DTYPE = "<f4"
ADAM_SLOTS = ("exp_avg", "exp_avg_sq")


@dataclass
class CheckpointData:
    """
    Everything read back from an archive.

    ``arrays`` maps "model/<name>/<param path>" and
    "optim/<name>/<param path>/<slot>" keys to float32 arrays.
    """

    stage: str
    epoch: int
    settings: dict
    topology: dict
    arrays: dict = field(repr=False)
    optimizers: dict = field(default_factory=dict, repr=False)
    rng_state: Optional[list] = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)


def _array_bytes(tensor: torch.Tensor) -> bytes:
    return tensor.detach().cpu().numpy().astype(ARRAY_DTYPE).tobytes()


def save_checkpoint(path: str, stage: str, epoch: int, settings: dict, topology: dict,
                    models: dict[str, nn.Module],
                    optimizers: Optional[dict[str, torch.optim.Optimizer]] = None,
                    extra: Optional[dict] = None) -> None:
    """
    Write models, optimizer moments and the global torch RNG state into one
    zip archive.

    Optimizer ``name`` must match the model it updates; its moments are keyed
    by that model's parameter paths. The archive is written to a temporary
    file first and moved into place.
    """
    optimizers = optimizers or {}
    shapes = {}
    entries = {}

    for name, model in models.items():
        for param_path, tensor in model.state_dict().items():
            key = f"model/{name}/{param_path}"
            shapes[key] = list(tensor.shape)
            entries[key] = _array_bytes(tensor.to(torch.float32))

    optim_meta = {}
    for name, optimizer in optimizers.items():
        if name not in models:
            raise FormatError(f"Optimizer '{name}' has no matching model")
        param_names = [p for p, _ in models[name].named_parameters()]
        state = optimizer.state_dict()
        steps = {}
        for index, slots in state["state"].items():
            param_path = param_names[index]
            steps[param_path] = float(slots["step"])
            for slot in ADAM_SLOTS:
                key = f"optim/{name}/{param_path}/{slot}"
                shapes[key] = list(slots[slot].shape)
                entries[key] = _array_bytes(slots[slot])
        groups = [{k: v for k, v in g.items() if k != "params"} for g in state["param_groups"]]
        optim_meta[name] = {"param_groups": groups, "steps": steps}

    manifest = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "epoch": int(epoch),
        "settings": settings,
        "topology": topology,
        "shapes": shapes,
        "optimizers": optim_meta,
        "rng_state": torch.get_rng_state().tolist(),
        "extra": extra or {},
    }

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = str(path) + ".tmp"
    with zipfile.ZipFile(tmp_path, "w", compression=zipfile.ZIP_STORED) as archive:
        archive.writestr(MANIFEST_NAME, json.dumps(manifest, indent=2))
        for key, payload in entries.items():
            archive.writestr(key, payload)
    os.replace(tmp_path, path)
    logger.info(f"Checkpoint saved: {path} (stage={stage}, epoch={epoch})")


def load_checkpoint(path: str, stage: Optional[str] = None) -> CheckpointData:
    if path is None or not os.path.exists(path):
        raise MissingCheckpoint(f"Checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path, "r") as archive:
            manifest = json.loads(archive.read(MANIFEST_NAME))
            arrays = {}
            for key, shape in manifest["shapes"].items():
                flat = np.frombuffer(archive.read(key), dtype=ARRAY_DTYPE)
                arrays[key] = flat.reshape(shape).copy()
    except (zipfile.BadZipFile, KeyError, ValueError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable checkpoint ({e})") from e

    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {manifest.get('format_version')}")
    if stage is not None and manifest["stage"] != stage:
        raise MissingCheckpoint(f"{path} holds a '{manifest['stage']}' checkpoint, expected '{stage}'")

    return CheckpointData(
        stage=manifest["stage"],
        epoch=manifest["epoch"],
        settings=manifest["settings"],
        topology=manifest["topology"],
        arrays=arrays,
        optimizers=manifest.get("optimizers", {}),
        rng_state=manifest.get("rng_state"),
        extra=manifest.get("extra", {}),
    )


def restore_model(data: CheckpointData, name: str, model: nn.Module) -> None:
    prefix = f"model/{name}/"
    state = {key[len(prefix):]: torch.from_numpy(value)
             for key, value in data.arrays.items() if key.startswith(prefix)}
    if not state:
        raise MissingCheckpoint(f"Checkpoint has no weights for model '{name}'")
    reference = model.state_dict()
    converted = {k: v.to(reference[k].dtype) if k in reference else v for k, v in state.items()}
    try:
        model.load_state_dict(converted, strict=True)
    except RuntimeError as e:
        raise FormatError(f"Weights for '{name}' do not fit the configured model: {e}") from e


def restore_optimizer(data: CheckpointData, name: str, model: nn.Module,
                      optimizer: torch.optim.Optimizer) -> None:
    meta = data.optimizers.get(name)
    if meta is None:
        raise MissingCheckpoint(f"Checkpoint has no optimizer state for '{name}'")

    param_names = [p for p, _ in model.named_parameters()]
    state = {}
    for index, param_path in enumerate(param_names):
        if param_path not in meta["steps"]:
            continue
        slots = {"step": torch.tensor(meta["steps"][param_path])}
        for slot in ADAM_SLOTS:
            slots[slot] = torch.from_numpy(data.arrays[f"optim/{name}/{param_path}/{slot}"])
        state[index] = slots

    groups = []
    offset = 0
    for group, saved in zip(optimizer.param_groups, meta["param_groups"]):
        count = len(group["params"])
        restored = dict(saved)
        restored["params"] = list(range(offset, offset + count))
        restored["betas"] = tuple(restored["betas"]) if "betas" in restored else group.get("betas")
        groups.append(restored)
        offset += count
    optimizer.load_state_dict({"state": state, "param_groups": groups})


def restore_rng(data: CheckpointData) -> None:
    if data.rng_state is not None:
        torch.set_rng_state(torch.tensor(data.rng_state, dtype=torch.uint8))


def describe(data: CheckpointData) -> dict[str, Any]:
    """ Small summary used in CLI logs. """
    models = sorted({key.split("/")[1] for key in data.arrays if key.startswith("model/")})
    return {"stage": data.stage, "epoch": data.epoch, "models": models}
