import math

import numpy as np
import pytest

from ofdm_dfrc.config import TargetSpec, desk_config
from ofdm_dfrc.frame import random_frame
from ofdm_dfrc.gsm import AntennaPattern
from ofdm_dfrc.radar_sim import (RadarCube, SimulationError, add_noise, dump_cube, simulate_rx,
                                 simulate_rx_timedomain)
from ofdm_dfrc.frame import load_csv


def _unit_frame(cfg, antenna=0):
    """Frame with a single active antenna carrying d_tx = 1 everywhere."""
    frame = random_frame(cfg.replace(N_x=1), np.random.default_rng(0))
    frame.patterns = [AntennaPattern((antenna,))] * cfg.N_p
    frame.d_tx[:] = 0
    frame.d_tx[antenna] = 1.0
    return frame


@pytest.fixture
def small():
    return desk_config(N_s=32, N_p=8, N_r=6, N_t=8, N_x=3)


def test_zero_target_has_no_phase(small, rng):
    frame = random_frame(small, rng)
    cube = simulate_rx(frame, [TargetSpec(0.0, 0.0, 0.0)], small)
    expected = frame.d_tx.sum(axis=0)
    assert cube.shape == (small.N_r, small.N_s, small.N_p)
    for m in range(small.N_r):
        np.testing.assert_allclose(cube.d_rx[m], expected, atol=1e-12)


def test_single_antenna_phase_progression(small):
    cfg = small.replace(N_x=1)
    frame = _unit_frame(cfg)
    theta = 17.0
    cube = simulate_rx(frame, [TargetSpec(theta, 20.0, 3.0)], cfg)
    np.testing.assert_allclose(np.abs(cube.d_rx), 1.0, atol=1e-12)
    lam = cfg.c / cfg.f_c
    i = np.arange(cfg.N_s)
    step = -2 * np.pi * cfg.d_r * lam * math.sin(math.radians(theta)) * (cfg.f_c + i * cfg.delta) / cfg.c
    ratio = cube.d_rx[1:, :, 0] / cube.d_rx[:-1, :, 0]
    np.testing.assert_allclose(ratio, np.broadcast_to(np.exp(1j * step), ratio.shape), atol=1e-10)


def test_negated_angle_conjugates_spatial_phase(small):
    cfg = small.replace(N_x=1)
    frame = _unit_frame(cfg)
    a = simulate_rx(frame, [TargetSpec(12.0, 0.0, 0.0)], cfg).d_rx
    b = simulate_rx(frame, [TargetSpec(-12.0, 0.0, 0.0)], cfg).d_rx
    np.testing.assert_allclose(a[1:] / a[:-1], np.conj(b[1:] / b[:-1]), atol=1e-10)


def test_superposition(small, rng):
    frame = random_frame(small, rng)
    A = TargetSpec(10.0, 30.0, 4.0)
    B = TargetSpec(-25.0, 70.0, -8.0)
    both = simulate_rx(frame, [A, B], small).d_rx
    np.testing.assert_allclose(both, simulate_rx(frame, [A], small).d_rx + simulate_rx(frame, [B], small).d_rx,
                               atol=1e-12)


def test_errors(small, rng):
    frame = random_frame(small, rng)
    with pytest.raises(SimulationError):
        simulate_rx(frame, [], small)
    with pytest.raises(SimulationError):
        simulate_rx(frame, [TargetSpec(0, 0, 0)], small.replace(N_s=64))


def test_noise_infinite_snr_is_identity(small, rng):
    cube = simulate_rx(random_frame(small, rng), [TargetSpec(5.0, 10.0, 1.0)], small)
    np.testing.assert_array_equal(add_noise(cube, math.inf, 1).d_rx, cube.d_rx)
    with pytest.raises(SimulationError):
        add_noise(cube, math.nan, 1)


def test_noise_empirical_snr():
    rng = np.random.default_rng(5)
    d = np.exp(2j * np.pi * rng.random((50, 1024, 256)))
    cube = RadarCube(d)
    noisy = add_noise(cube, 10.0, 7)
    noise = noisy.d_rx - d
    snr = 10 * np.log10(np.mean(np.abs(d) ** 2) / np.mean(np.abs(noise) ** 2))
    assert abs(snr - 10.0) < 0.1
    # circular: real and imaginary halves carry equal power
    assert np.var(noise.real) == pytest.approx(np.var(noise.imag), rel=0.01)


def test_noise_is_seeded(small, rng):
    cube = simulate_rx(random_frame(small, rng), [TargetSpec(5.0, 10.0, 1.0)], small)
    np.testing.assert_array_equal(add_noise(cube, 3.0, 11).d_rx, add_noise(cube, 3.0, 11).d_rx)
    assert not np.array_equal(add_noise(cube, 3.0, 11).d_rx, add_noise(cube, 3.0, 12).d_rx)


def test_timedomain_zero_case(small, rng):
    frame = random_frame(small, rng)
    tgt = [TargetSpec(0.0, 0.0, 0.0)]
    a = simulate_rx(frame, tgt, small).d_rx
    b = simulate_rx_timedomain(frame, tgt, small).d_rx
    assert np.linalg.norm(b - a) / np.linalg.norm(a) <= 1e-9


def test_timedomain_moving_target(small, rng):
    frame = random_frame(small, rng)
    tgt = [TargetSpec(19.0, 50.0, 5.0), TargetSpec(-7.0, 120.0, -10.0)]
    a = simulate_rx(frame, tgt, small).d_rx
    b = simulate_rx_timedomain(frame, tgt, small).d_rx
    assert np.linalg.norm(b - a) / np.linalg.norm(a) <= 5e-2


def test_timedomain_rejects_delay_beyond_cp(table1):
    frame = random_frame(table1.replace(N_p=1), np.random.default_rng(0))
    # 2 * 400 / c = 2.67 us > 2.5 us cyclic prefix
    with pytest.raises(SimulationError, match="cyclic prefix"):
        simulate_rx_timedomain(frame, [TargetSpec(0.0, 400.0, 0.0)], table1.replace(N_p=1))


def test_cube_dump_round_trip(small, rng, tmp_path):
    cube = simulate_rx(random_frame(small, rng), [TargetSpec(5.0, 10.0, 1.0)], small)
    path = tmp_path / "cube.csv"
    dump_cube(cube, path)
    assert path.read_text().splitlines()[0] == "m,i,mu,re,im"
    np.testing.assert_array_equal(load_csv(path, cube.shape), cube.d_rx)
