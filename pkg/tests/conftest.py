import pytest

from wavesel.chanmodels import ScenarioConfig
from wavesel.transforms import GridConfig


@pytest.fixture
def tiny_scenario():
    """Stock channel families on a 4 x 16 grid, fast enough for unit tests."""
    return ScenarioConfig(grid=GridConfig.make(4, 16))
