import math

import numpy as np
import pytest

from ofdm_dfrc.comm import CommChannel, ber, decode_private, decode_ssr, gen_channel, transmit
from ofdm_dfrc.config import desk_config
from ofdm_dfrc.frame import random_frame


@pytest.fixture
def comm_cfg():
    return desk_config(N_s=64, N_c=16, N_t=32, N_x=5, N_p=1)


def test_single_tap_is_flat(comm_cfg):
    H = gen_channel(comm_cfg, L=1, seed=3).H
    np.testing.assert_allclose(H, np.broadcast_to(H[0], H.shape), atol=1e-12)


def test_unit_average_power():
    cfg = desk_config(N_s=16, N_c=1, N_t=1, N_x=1, N_p=1)
    power = np.mean([np.mean(np.abs(gen_channel(cfg, L=4, seed=s).H) ** 2) for s in range(10_000)])
    assert power == pytest.approx(1.0, abs=0.05)


def test_channel_seeded(comm_cfg):
    np.testing.assert_array_equal(gen_channel(comm_cfg, 8, 5).H, gen_channel(comm_cfg, 8, 5).H)
    with pytest.raises(ValueError):
        gen_channel(comm_cfg, L=0)
    with pytest.raises(ValueError):
        gen_channel(comm_cfg, L=65)


def _identity_channel(cfg):
    H = np.broadcast_to(np.eye(cfg.N_t, dtype=complex), (cfg.N_s, cfg.N_t, cfg.N_t)).copy()
    return CommChannel(H, H[:1].copy())


def test_identity_channel_noiseless(rng):
    cfg = desk_config(N_s=16, N_c=8, N_t=8, N_x=3, N_p=1)
    frame = random_frame(cfg, rng)
    obs = transmit(frame, _identity_channel(cfg), 0, math.inf)
    np.testing.assert_array_equal(obs.Y, frame.d_tx[:, :, 0])
    assert obs.noise_var == 0.0


def test_pure_noise_variance(rng):
    cfg = desk_config(N_s=1024, N_c=16, N_t=8, N_x=3, N_p=1)
    frame = random_frame(cfg, rng)
    frame.d_tx[:] = 0
    obs = transmit(frame, gen_channel(cfg, 8, 1), 0, 0.0, seed=9, noise_var=0.5)
    assert np.mean(np.abs(obs.Y) ** 2) == pytest.approx(0.5, rel=0.05)


def test_snr_calibration(comm_cfg, rng):
    frame = random_frame(comm_cfg, rng)
    chan = gen_channel(comm_cfg, 8, 2)
    clean = transmit(frame, chan, 0, math.inf).Y
    noisy = transmit(frame, chan, 0, 10.0, seed=4)
    signal = np.mean(np.abs(clean) ** 2)
    assert noisy.noise_var == pytest.approx(signal / 10.0)


def test_linearity(comm_cfg):
    f1 = random_frame(comm_cfg, np.random.default_rng(1))
    f2 = random_frame(comm_cfg, np.random.default_rng(2))
    chan = gen_channel(comm_cfg, 8, 3)
    y1 = transmit(f1, chan, 0, math.inf).Y
    y2 = transmit(f2, chan, 0, math.inf).Y
    f1.d_tx = f1.d_tx + f2.d_tx
    np.testing.assert_allclose(transmit(f1, chan, 0, math.inf).Y, y1 + y2, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_noiseless_exact_decoding(comm_cfg, seed):
    rng = np.random.default_rng(seed)
    frame = random_frame(comm_cfg, rng)
    chan = gen_channel(comm_cfg, 8, seed + 100)
    obs = transmit(frame, chan, 0, math.inf)
    truth = (frame.payload_bits, frame.index_bits)
    for dec in (decode_ssr(obs, chan, comm_cfg), decode_private(obs, chan, comm_cfg)):
        assert dec.pattern_hat.indices == frame.patterns[0].indices
        assert ber(truth, (dec.payload_bits_hat, dec.index_bits_hat)) == (0.0, 0.0)
        np.testing.assert_allclose(dec.symbols_hat, frame.d_tx[:, :, 0], atol=1e-9)
    dec = decode_private(obs, chan, comm_cfg)
    assert set(dec.private_set_hat) == set(range(comm_cfg.N_x))
    assert not dec.fallback


def test_ssr_support_scale_invariant(comm_cfg, rng):
    frame = random_frame(comm_cfg, rng)
    chan = gen_channel(comm_cfg, 8, 7)
    obs = transmit(frame, chan, 0, 5.0, seed=1)
    ref = decode_ssr(obs, chan, comm_cfg).pattern_hat
    c = 2.5 * np.exp(0.7j)
    obs.Y = obs.Y * c
    scaled = CommChannel(chan.H * c, chan.taps * c)
    assert decode_ssr(obs, scaled, comm_cfg).pattern_hat == ref


def test_low_snr_is_worse(comm_cfg):
    errs = {0.0: 0.0, 20.0: 0.0}
    for trial in range(10):
        frame = random_frame(comm_cfg, np.random.default_rng(trial))
        chan = gen_channel(comm_cfg, 8, 1000 + trial)
        for snr in errs:
            dec = decode_ssr(transmit(frame, chan, 0, snr, seed=trial), chan, comm_cfg)
            errs[snr] += ber((frame.payload_bits, frame.index_bits),
                             (dec.payload_bits_hat, dec.index_bits_hat))[0]
    assert errs[0.0] > errs[20.0]


def test_ber_examples(rng):
    bits = rng.integers(0, 2, 10_000, dtype=np.uint8)
    idx = rng.integers(0, 2, 17, dtype=np.uint8)
    assert ber((bits, idx), (bits, idx)) == (0.0, 0.0)
    assert ber((bits, idx), (1 - bits, idx))[0] == 1.0
    flipped = bits.copy()
    flipped[123] ^= 1
    assert ber((bits, idx), (flipped, idx))[0] == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        ber((bits, idx), (bits[:-1], idx))
