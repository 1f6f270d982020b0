import json
from unittest.mock import MagicMock, patch

import pytest
import torch

from src.core import main as cli
from src.core.errors import NonFiniteLoss
from src.dance.motion_io import save_motion
from src.tests.conftest import SMALL_MODEL, random_pose


@pytest.fixture
def listener(mocker):
    """ Keeps main() from touching the real logging setup. """
    mock_listener = MagicMock()
    mock_setup = mocker.patch("src.core.main.setup_logging", return_value=mock_listener)
    return mock_listener, mock_setup


def test_plot_beats_exits_zero(listener, tmp_path, topo, rng):
    motion = tmp_path / "dance.json"
    save_motion(str(motion), random_pose(rng, 30), topo, music_beats=[4, 14, 24])
    out = tmp_path / "beats.svg"

    assert cli.main(["plot-beats", str(motion), "--out", str(out)]) == cli.EXIT_OK
    assert out.exists()
    listener[0].stop.assert_called_once()


def test_quiet_flag_reaches_logging(listener, tmp_path, topo, rng):
    motion = tmp_path / "dance.json"
    save_motion(str(motion), random_pose(rng, 10), topo)
    cli.main(["--quiet", "--log-dir", str(tmp_path / "logs"), "plot-beats", str(motion),
              "--out", str(tmp_path / "x.svg")])
    _, log_dir, level = listener[1].call_args[0]
    assert (log_dir, level) == (str(tmp_path / "logs"), "WARNING")


def test_synth_data_writes_a_manifest(listener, tmp_path):
    out = tmp_path / "data"
    code = cli.main(["--set", "data.synth.clip_seconds=2", "synth-data", "--out", str(out), "--clips", "2"])

    assert code == cli.EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert [entry["split"] for entry in manifest["clips"]] == ["train", "train"]


def test_bad_override_is_a_config_error(listener):
    assert cli.main(["--set", "no.such.key=1", "plot-beats", "x.json", "--out", "x.svg"]) == 2


def test_missing_checkpoint_is_a_config_error(listener, tmp_path):
    code = cli.main(["--set", f"training.run_dir={tmp_path}", "generate", "song.wav",
                     "--seed-motion", "seed.json", "--out", str(tmp_path / "out.json")])
    assert code == 2


def test_missing_audio_is_a_data_error(listener, tmp_path):
    assert cli.main(["extract", str(tmp_path / "missing.wav"), "--out", str(tmp_path / "f.json")]) == 3


def test_unexpected_crash_exits_one(listener):
    with patch.dict(cli.COMMANDS, {"extract": MagicMock(side_effect=RuntimeError("boom"))}):
        assert cli.main(["extract", "a.wav", "--out", "b.json"]) == cli.EXIT_UNEXPECTED
    listener[0].stop.assert_called_once()


def test_verb_is_required():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])


def test_non_finite_loss_exits_four(listener, tmp_path, mocker):
    nan_loss = mocker.patch("src.core.pipeline.pose_motion_loss", return_value=torch.tensor(float("nan")))
    overrides = SMALL_MODEL + [f"training.run_dir={tmp_path / 'run'}", "training.bps.epochs=2",
                               "data.synth.n_clips=1", "data.synth.clip_seconds=8"]
    argv = [arg for key in overrides for arg in ("--set", key)] + ["train-bps", "--no-cache"]

    assert cli.main(argv) == NonFiniteLoss.exit_code == 4
    nan_loss.assert_called()
    listener[0].stop.assert_called_once()
    assert not (tmp_path / "run" / "checkpoints" / "bps.ckpt").exists()
