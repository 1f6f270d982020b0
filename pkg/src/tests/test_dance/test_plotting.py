from unittest.mock import patch

import numpy as np

from src.dance.plotting import plot_beats
from src.tests.conftest import random_pose


def test_svg_written_with_title(tmp_path, topo, rng):
    path = tmp_path / "plots" / "beats.svg"
    plot_beats(str(path), random_pose(rng, 40), topo, [3, 13, 23], title="clip 7")

    text = path.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text
    assert "clip 7" in text


def test_plot_without_music_beats(tmp_path, topo, rng):
    path = tmp_path / "velocity.svg"
    plot_beats(str(path), random_pose(rng, 10), topo, [])
    assert path.stat().st_size > 0


@patch("src.dance.plotting.plt.close")
def test_figure_is_released(mock_close, tmp_path, topo, rng):
    plot_beats(str(tmp_path / "x.svg"), random_pose(rng, 10), topo, [np.int64(2)])
    mock_close.assert_called_once()
