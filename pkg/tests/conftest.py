"""Root pytest configuration for rigstable tests."""
import numpy as np
import pytest

from rigstable.rig_types import Skeleton
from rigstable.synthgen import SynthConfig, generate_clip, perturb_clip


# Configure pytest markers
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers",
        "slow: mark test as slow (runs the toy training loop)"
    )


# Set up test environment variables
@pytest.fixture(autouse=True)
def test_env(monkeypatch):
    """Pin the environment so settings never leak in from the host."""
    for key in ("RIGSTABLE_SEED", "RIGSTABLE_N_DISC", "RIGSTABLE_FLOAT_DIGITS"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("RIGSTABLE_THREADS", "1")
    monkeypatch.setenv("RIGSTABLE_LOG_LEVEL", "WARNING")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def chain_skeleton():
    """Four joints along +x, each hanging off the previous one."""
    joints = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.2, 0.05, 0.0], [0.3, 0.05, 0.1]]
    return Skeleton(joints, [0, 1, 2, 3])


@pytest.fixture(scope="session")
def synth_clip():
    """Default synthetic clip (6 joints, two branches, 3 frames)."""
    return generate_clip(SynthConfig())


@pytest.fixture(scope="session")
def static_clip():
    """Synthetic clip whose frames all equal the anchor."""
    return generate_clip(SynthConfig(amplitude=0.0, clip_id="static"))


@pytest.fixture(scope="session")
def noisy_clip(synth_clip):
    """Default clip with sigma = 0.02 noise on the non-anchor frames."""
    return perturb_clip(synth_clip, 0.02, seed=42)
