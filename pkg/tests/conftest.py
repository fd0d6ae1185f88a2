import numpy as np
import pytest

from agroval.synth import Driver, SynthConfig, synth_generate


@pytest.fixture(scope="session")
def small_panels():
    cfg = SynthConfig(
        n_regions=4,
        year_range=(1979, 2022),
        seed=5,
        drivers=(Driver("tmean", 6, -0.8), Driver("precip", 5, 0.4, "sum")),
    )
    weather, yields, truth = synth_generate(cfg)
    return weather, yields, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
