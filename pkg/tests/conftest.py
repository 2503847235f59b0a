"""
Shared fixtures
Seeded streams and per-test settings with an isolated cache directory
"""

import numpy as np
import pytest

from agb_feedback.utils.random_streams import make_stream
from agb_feedback.utils.settings_config import get_settings


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("AGB_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("AGB_PACKING_ITERATIONS", "50")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return make_stream(1234)


def random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)
