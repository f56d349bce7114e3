import warnings

import numpy as np
import pytest

from depthfusion.core import DisparityField, FusionParams, OcclusionMasks
from depthfusion.evaluation import Texture, builtin_scene, render_scene

# numba may complain about the missing TBB threading layer; irrelevant here
warnings.filterwarnings("ignore", message=".*TBB.*")

CRITERIA_LINES = []


def record_criterion(line: str):
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)


def shifted_pair(h=40, w=56, shift=3.4, seed=3, amplitude=0.15):
    """Left/right views of one textured fronto-parallel plane: right(x) = left(x - shift)."""
    tex = Texture(0.5, amplitude, seed=seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return tex(xx, yy), tex(xx - shift, yy)


def flat_context_inputs(h, w, d0_value):
    d0 = DisparityField(np.full((h, w), float(d0_value)), np.ones((h, w), bool))
    return d0, OcclusionMasks.none((h, w))


@pytest.fixture(scope="session")
def two_planes():
    return render_scene(builtin_scene("two_planes"))


@pytest.fixture(scope="session")
def single_plane():
    return render_scene(builtin_scene("single_plane"))


@pytest.fixture(scope="session")
def low_texture():
    return render_scene(builtin_scene("two_planes_low_texture"))


@pytest.fixture
def small_params():
    return FusionParams(d_min=0, d_max=8)
