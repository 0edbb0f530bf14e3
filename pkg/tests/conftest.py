import numpy as np
import pytest

from trdopen import radar_sim as rs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def params():
    return rs.RadarParams()


def single_scatterer_signal(params, r, v=0.0, amplitude=1.0, antenna_id=0, noise_std=0.0):
    scene = rs.Scene(0, (rs.Scatterer(amplitude, r, v),), noise_std)
    return rs.synthesize_beat_signal(scene, params, antenna_id, rng_seed=0)


def tiny_recipe(num_tests=8, antennas=2, seed=0):
    return rs.DatasetRecipe(
        scene_config=rs.SceneConfig(rs.SMOKE_CLASSES), num_tests=num_tests,
        params=rs.RadarParams(bandwidth_hz=250e6, samples_per_chirp=16, chirps_per_frame=8,
                              frames=16, antenna_count=antennas),
        crop_len=8, crop_count=3, seed=seed)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """4 classes x 2 tests x 2 antennas x 3 crops of 8x16x8 cubes."""
    root = tmp_path_factory.mktemp("tiny")
    rs.generate_dataset(tiny_recipe(), root)
    return root / "manifest.tsv"


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, title, ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} ({detail})")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
