# ==============================================================================
# GROOVESYNTH - PLOTS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Kinetic velocity vs. music beat chart (SVG)
# ==============================================================================

import logging
import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.dance.metrics import kinematic_beats_or_fallback  # noqa: E402
from src.dance.skeleton import PoseSequence, SkeletonTopology, kinetic_velocity  # noqa: E402

logger = logging.getLogger(__name__)


def plot_beats(path: str, pose: PoseSequence, topo: SkeletonTopology, music_beats: Sequence[int],
               title: Optional[str] = None) -> None:
    """
    Kinetic velocity over time with music beats as vertical lines and
    kinematic beats as dots. Written as SVG.
    """
    velocity = kinetic_velocity(pose, topo)
    times = np.arange(pose.n_frames) / pose.fps
    motion_beats, fallback = kinematic_beats_or_fallback(velocity)

    fig, ax = plt.subplots(figsize=(10, 3))
    ax.plot(times, velocity, color="tab:blue", linewidth=1.2, label="kinetic velocity")
    for i, beat in enumerate(music_beats):
        ax.axvline(beat / pose.fps, color="tab:red", alpha=0.5, linewidth=0.8,
                   label="music beat" if i == 0 else None)
    ax.scatter(motion_beats / pose.fps, velocity[motion_beats], color="black", s=12, zorder=3,
               label="kinematic beat (fallback)" if fallback else "kinematic beat")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("velocity (m$^2$/s$^2$)")
    ax.set_title(title or "Kinetic velocity and music beats")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info(f"Beat plot written: {path}")
