import os

import pytest

from src.core import pipeline
from src.dance.metrics import evaluate_corpus
from src.tests.conftest import small_settings_for
from src.utils.config import apply_overrides

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
SCHEDULE = ["training.bps.epochs=40", "training.rps.epochs=60", "training.traj.epochs=20"]
VARIANTS = {
    "full": {},
    "no_rtc": {"disable_rtc": True},
    "no_bps": {"disable_bps": True},
    "fixed_reference": {"fixed_reference_rtc": True},
}


def train_variants(run_dir, seed, samples, clips, topo):
    """
    Beat model once, then one repletion model per variant, all scored on the
    same clips. The trajectory model of the full variant serves every variant.
    """
    settings = apply_overrides(small_settings_for(run_dir), SCHEDULE + [f"model.seed={seed}"])
    run_state = pipeline.open_run_state(settings)
    bps_path = pipeline.train_bps(pipeline.TrainConfig.from_settings(settings, "bps"), samples, settings, topo,
                                  run_state)

    results, traj_path = {}, None
    for name, flags in VARIANTS.items():
        variant_dir = os.path.join(run_dir, name)
        cfg = pipeline.TrainConfig.from_settings(settings, "rps", bps_checkpoint=bps_path, run_dir=variant_dir,
                                                 **flags)
        rps_path = pipeline.train_rps(cfg, samples, settings, topo, run_state)
        if traj_path is None:
            traj_cfg = pipeline.TrainConfig.from_settings(settings, "traj", bps_checkpoint=bps_path,
                                                          rps_checkpoint=rps_path, run_dir=variant_dir)
            traj_path = pipeline.train_traj(traj_cfg, samples, settings, topo, run_state)

        models = pipeline.load_generation_models(settings, topo, run_state, bps_path, rps_path, traj_path)
        dances = [pipeline.generate_dance(settings, models, clip.audio, clip.pose.slice(0, 20), seed)
                  for clip in clips]
        report = evaluate_corpus([clip.pose for clip in clips], [pose for pose, _ in dances], topo,
                                 [beats for _, beats in dances])
        latents = pipeline.export_latents(settings, samples, os.path.join(variant_dir, "latents.json"),
                                          run_state, topo, rps_path=rps_path, bps_path=bps_path)
        results[name] = (report, latents["mean_dispersion"])
    return results


@pytest.fixture(scope="module")
def ablations(tmp_path_factory, synth_samples, synth_clips, topo):
    """ {seed: {variant: (MetricsReport, mean latent |cossim|)}} """
    return {seed: train_variants(str(tmp_path_factory.mktemp(f"seed{seed}")), seed, synth_samples,
                                 synth_clips, topo)
            for seed in SEEDS}


def majority(votes):
    return sum(votes) * 2 > len(votes)


def test_without_contrast_loss_diversity_drops(ablations):
    votes = [runs["no_rtc"][0].md_k < 0.9 * runs["full"][0].md_k for runs in ablations.values()]
    assert majority(votes), votes


def test_without_beat_poses_alignment_drops(ablations):
    votes = [runs["no_bps"][0].bas < 0.9 * runs["full"][0].bas for runs in ablations.values()]
    assert majority(votes), votes


def test_contrast_loss_spreads_the_latents(ablations):
    votes = [runs["full"][1] < runs["no_rtc"][1] for runs in ablations.values()]
    assert majority(votes), votes


def test_fixed_reference_segment_raises_fid(ablations):
    votes = [runs["fixed_reference"][0].fid_k > runs["full"][0].fid_k for runs in ablations.values()]
    assert majority(votes), votes


def test_every_variant_is_scored(ablations):
    for runs in ablations.values():
        for report, dispersion in runs.values():
            assert report.n_gen == 5
            assert dispersion is not None
