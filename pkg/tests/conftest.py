import numpy as np
import pytest

from beamgen.channel import RfParams, make_hex_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def desk_geometry():
    return make_hex_geometry(16, 8, beam_spacing=0.01, beam_radius=0.006,
                             feed_pattern_width=0.008, orbit_altitude=35786e3)


@pytest.fixture
def small_geometry():
    return make_hex_geometry(4, 2, beam_spacing=0.01, beam_radius=0.004,
                             feed_pattern_width=0.008, orbit_altitude=35786e3)


@pytest.fixture
def rf_params():
    return RfParams(carrier_freq=30e9, bandwidth=500e6, rx_antenna_gain=100.0,
                    rx_noise_temp=300.0)


def random_complex(shape, rng):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
