import numpy as np
import pytest

from beamselect import ArrayGeometry
from beamselect.pipeline import PipelineConfig, run_full_pipeline


@pytest.fixture(scope="session")
def geometry():
    return ArrayGeometry()


@pytest.fixture(scope="session")
def small_geometry():
    """A 6x6 grid of 2x2 subarrays: cheap enough for brute-force oracles."""
    return ArrayGeometry(subarray_grid=(6, 6), element_grid_per_subarray=(2, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """200 samples, K=4, budget 100: the smoke-scale pipeline."""
    cfg = PipelineConfig(n_samples=200, n_clusters=4, budget=100, n_eval=10,
                         out_dir=str(tmp_path_factory.mktemp("tiny")))
    run_full_pipeline(cfg)
    return cfg


@pytest.fixture(scope="session")
def standard_run(tmp_path_factory):
    """Default configuration: 5000 samples, K=20, 7-64-64-20 classifier, 200 held-out requirements."""
    import time

    cfg = PipelineConfig(out_dir=str(tmp_path_factory.mktemp("standard")))
    start = time.process_time()
    run_full_pipeline(cfg)
    cfg.cpu_seconds = time.process_time() - start
    return cfg


ACCEPTANCE_LINES = []


def record_acceptance(line):
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
