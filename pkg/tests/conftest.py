import pytest

from aerialsplat.scenegen import CityConfig, TrajectoryConfig, generate_city, make_dataset, sample_aerial_cameras


@pytest.fixture(scope="session")
def default_city():
    return generate_city(CityConfig())


@pytest.fixture(scope="session")
def default_cameras():
    return sample_aerial_cameras(TrajectoryConfig())


@pytest.fixture(scope="session")
def default_bundle(default_city, default_cameras):
    return make_dataset(default_city, default_cameras)


@pytest.fixture(scope="session")
def small_bundle():
    """A coarse 2x2-lot city seen by 16 views at 32x32 (fast training tests)."""
    city = generate_city(CityConfig(grid=(2, 2), cell_size=0.16))
    return make_dataset(city, sample_aerial_cameras(TrajectoryConfig(width=32, height=32)))
