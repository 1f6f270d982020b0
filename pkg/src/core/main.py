# ==============================================================================
# GROOVESYNTH - MAIN ENTRY POINT
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Command-line verbs, logging bootstrap and exit-code mapping
# ==============================================================================

import argparse
import logging
import sys

from src.core import pipeline
from src.core.errors import GrooveSynthError
from src.dance.audiofeat import AudioConfig, extract_features, load_wav, save_features
from src.dance.dataset import save_dataset
from src.dance.motion_io import load_motion
from src.dance.plotting import plot_beats
from src.dance.synth import SynthConfig, synth_dataset
from src.utils.config import apply_overrides, load_settings, project_root
from src.utils.logger import setup_logging

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groovesynth",
                                     description="Beat-structured music-to-dance generation")
    parser.add_argument("--config", help="Settings YAML (default: config/settings.yaml)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a setting, e.g. --set training.bps.epochs=5")
    parser.add_argument("--log-dir", help="Directory for app.log (default: logs/)")
    parser.add_argument("--quiet", action="store_true", help="Console shows warnings and errors only")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("extract", help="Audio features (MFCC, CENS, beats) of one WAV file")
    p.add_argument("audio")
    p.add_argument("--out", required=True, help="Output JSON")

    p = verbs.add_parser("synth-data", help="Write the synthetic click-track dataset")
    p.add_argument("--out", required=True, help="Dataset directory")
    p.add_argument("--clips", type=int, help="Number of clips (default: data.synth.n_clips)")
    p.add_argument("--seed", type=int, help="Random seed (default: model.seed)")

    for verb, stage in (("train-bps", "bps"), ("train-rps", "rps"), ("train-traj", "traj"),
                        ("train-all", None)):
        p = verbs.add_parser(verb, help=f"Train the {stage} stage" if stage else "Train every stage in order")
        p.add_argument("--data", help="Dataset directory (default: synthetic set)")
        p.add_argument("--no-cache", action="store_true", help="Skip the feature cache")
        if stage:
            p.add_argument("--resume", help="Checkpoint of this stage to continue from")
        if stage in ("rps", "traj"):
            p.add_argument("--bps-checkpoint")
        if stage == "traj":
            p.add_argument("--rps-checkpoint")

    p = verbs.add_parser("generate", help="Dance for a WAV file")
    p.add_argument("audio")
    p.add_argument("--seed-motion", required=True, help="Motion JSON with at least T_S frames")
    p.add_argument("--out", required=True, help="Output motion JSON")
    p.add_argument("--bvh", help="Also export BVH to this path")
    p.add_argument("--seed", type=int, help="Noise seed (default: model.seed)")
    p.add_argument("--bps-checkpoint")
    p.add_argument("--rps-checkpoint")
    p.add_argument("--traj-checkpoint")

    p = verbs.add_parser("evaluate", help="FID, diversity, BAS and PFC of generated motion")
    p.add_argument("--reference", nargs="+", required=True, help="Motion JSON files or directories")
    p.add_argument("--generated", nargs="+", required=True, help="Motion JSON files or directories")
    p.add_argument("--out", help="Report JSON")

    p = verbs.add_parser("export-latents", help="Latent segments and their intra-clip dispersion")
    p.add_argument("--data", help="Dataset directory (default: synthetic set)")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--bps-checkpoint")
    p.add_argument("--rps-checkpoint")

    p = verbs.add_parser("plot-beats", help="Kinetic velocity vs. music beats as SVG")
    p.add_argument("motion", help="Motion JSON (music beats read from its 'music_beats' field)")
    p.add_argument("--out", required=True)
    return parser


# =============================================================================
# VERBS
# =============================================================================

def _samples(settings, args, run_state, split="train"):
    topo = pipeline.build_topology(settings)
    clips = pipeline.load_clips(settings, topo, args.data, split)
    return topo, pipeline.prepare_samples(settings, clips, run_state, not getattr(args, "no_cache", False))


def cmd_extract(settings, args, logger):
    audio_cfg = AudioConfig.from_settings(settings)
    feats = extract_features(load_wav(args.audio, audio_cfg.sample_rate), audio_cfg)
    save_features(args.out, feats)
    logger.info(f"{feats.n_frames} frames, {len(feats.beats)} beats -> {args.out}")


def cmd_synth_data(settings, args, logger):
    topo = pipeline.build_topology(settings)
    n_clips = args.clips if args.clips is not None else int(settings["data"]["synth"]["n_clips"])
    seed = args.seed if args.seed is not None else int(settings["model"]["seed"])
    save_dataset(args.out, synth_dataset(n_clips, seed, topo, SynthConfig.from_settings(settings)), topo)


def cmd_train(settings, args, logger):
    run_state = pipeline.open_run_state(settings)
    topo, samples = _samples(settings, args, run_state)
    if args.verb == "train-all":
        paths = pipeline.train_all(settings, samples, topo, run_state)
        logger.info(f"Training complete: {paths}")
        return

    stage = args.verb.replace("train-", "")
    cfg = pipeline.TrainConfig.from_settings(
        settings, stage, resume=args.resume,
        bps_checkpoint=getattr(args, "bps_checkpoint", None),
        rps_checkpoint=getattr(args, "rps_checkpoint", None))
    trainer = {"bps": pipeline.train_bps, "rps": pipeline.train_rps, "traj": pipeline.train_traj}[stage]
    path = trainer(cfg, samples, settings, topo, run_state)
    logger.info(f"Stage {stage} finished: {path}")


def cmd_generate(settings, args, logger):
    pipeline.generate(settings, args.audio, args.seed_motion, args.out, pipeline.open_run_state(settings),
                      bvh_path=args.bvh, seed=args.seed,
                      checkpoints={"bps": args.bps_checkpoint, "rps": args.rps_checkpoint,
                                   "traj": args.traj_checkpoint})


def cmd_evaluate(settings, args, logger):
    report = pipeline.evaluate(settings, args.reference, args.generated, args.out,
                               pipeline.open_run_state(settings))
    if not args.out:
        for key, value in report.to_dict().items():
            print(f"{key}: {value}")


def cmd_export_latents(settings, args, logger):
    run_state = pipeline.open_run_state(settings)
    topo, samples = _samples(settings, args, run_state, args.split)
    pipeline.export_latents(settings, samples, args.out, run_state, topo,
                            rps_path=args.rps_checkpoint, bps_path=args.bps_checkpoint)


def cmd_plot_beats(settings, args, logger):
    topo = pipeline.build_topology(settings)
    pose, file_topo, music_beats = load_motion(args.motion, topo)
    if music_beats is None:
        logger.warning(f"{args.motion} carries no music beats; plotting velocity only")
    plot_beats(args.out, pose, file_topo, music_beats or [])


COMMANDS = {
    "extract": cmd_extract,
    "synth-data": cmd_synth_data,
    "train-bps": cmd_train,
    "train-rps": cmd_train,
    "train-traj": cmd_train,
    "train-all": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "export-latents": cmd_export_latents,
    "plot-beats": cmd_plot_beats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    root = project_root()

    # 1. Start the Black Box (Logging System)
    listener = setup_logging(root, args.log_dir, "WARNING" if args.quiet else None)
    logger = logging.getLogger("Main")

    try:
        # 2. Load the Manual (Configuration)
        settings = apply_overrides(load_settings(args.config), args.overrides)
        logger.info(f"GrooveSynth '{args.verb}' starting")
        COMMANDS[args.verb](settings, args, logger)
        logger.info(f"'{args.verb}' finished")
        return EXIT_OK
    except GrooveSynthError as e:
        logger.critical(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("User interruption detected. Shutting down...")
        return EXIT_UNEXPECTED
    except Exception as e:
        logger.critical(f"UNEXPECTED SYSTEM CRASH: {e}", exc_info=True)
        return EXIT_UNEXPECTED
    finally:
        listener.stop()


if __name__ == "__main__":
    sys.exit(main())
