"""Radar echo synthesis in the symbol domain, with a time-domain cross-check."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import SystemConfig, TargetSpec, derive
from .frame import SymbolFrame, dump_csv, frame_sample_times, sample_rate, synthesize_sum


class SimulationError(ValueError):
    pass


@dataclass
class RadarCube:
    """Received radar symbols ``d_rx[m, i, mu]``."""

    d_rx: np.ndarray
    snr_db: Optional[float] = None

    @property
    def shape(self):
        return self.d_rx.shape


def _check_frame(frame: SymbolFrame, cfg: SystemConfig) -> None:
    if frame.d_tx.shape != (cfg.N_t, cfg.N_s, cfg.N_p):
        raise SimulationError(
            f"frame shape {frame.d_tx.shape} does not match config {(cfg.N_t, cfg.N_s, cfg.N_p)}")


def subcarrier_wavenumbers(cfg: SystemConfig) -> np.ndarray:
    """``(f_c + i*delta) / c`` for every subcarrier, in 1/m."""
    return (cfg.f_c + np.arange(cfg.N_s) * cfg.delta) / cfg.c


def transmit_steering(cfg: SystemConfig, sin_theta: float, antennas=None) -> np.ndarray:
    """``exp(-j 2 pi n d_t sin(theta) (f_c + i delta)/c)`` with shape (n, i)."""
    n = np.arange(cfg.N_t) if antennas is None else np.asarray(antennas)
    d_t = cfg.d_t * derive(cfg).lambda0
    return np.exp(-2j * np.pi * np.outer(n * d_t * sin_theta, subcarrier_wavenumbers(cfg)))


def receive_steering(cfg: SystemConfig, sin_theta: float) -> np.ndarray:
    """Receive-array phase progression with shape (m, i)."""
    d_r = cfg.d_r * derive(cfg).lambda0
    return np.exp(-2j * np.pi * np.outer(np.arange(cfg.N_r) * d_r * sin_theta,
                                         subcarrier_wavenumbers(cfg)))


def range_doppler_phase(cfg: SystemConfig, target: TargetSpec) -> np.ndarray:
    """``exp(-j 2 pi i delta 2R/c) * exp(j 2 pi mu T_p f_d)`` with shape (i, mu)."""
    rng = np.exp(-2j * np.pi * np.arange(cfg.N_s) * cfg.delta * 2.0 * target.R / cfg.c)
    dop = np.exp(2j * np.pi * np.arange(cfg.N_p) * cfg.T_p * target.doppler(cfg))
    return np.outer(rng, dop)


def simulate_rx(frame: SymbolFrame, targets: Sequence[TargetSpec], cfg: SystemConfig) -> RadarCube:
    """Noiseless receive symbols of unit-reflectivity point targets."""
    _check_frame(frame, cfg)
    if not targets:
        raise SimulationError("at least one target is required")
    used = sorted({n for p in frame.patterns for n in p.indices})
    d_tx = frame.d_tx[used]
    cube = np.zeros((cfg.N_r, cfg.N_s, cfg.N_p), dtype=complex)
    for tgt in targets:
        s = math.sin(math.radians(tgt.theta))
        amp = np.einsum("nip,ni->ip", d_tx, transmit_steering(cfg, s, used))
        amp *= range_doppler_phase(cfg, tgt)
        cube += receive_steering(cfg, s)[:, :, None] * amp[None, :, :]
    return RadarCube(cube)


def add_noise(cube: RadarCube, snr_db: float, rng_seed) -> RadarCube:
    """Add circular complex Gaussian noise at ``mean|d_rx|^2 / 10^(snr/10)``.

    ``snr_db = inf`` returns the cube unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return RadarCube(cube.d_rx.copy(), snr_db)
    if not math.isfinite(snr_db):
        raise SimulationError(f"invalid SNR {snr_db}")
    rng = np.random.default_rng(rng_seed)
    var = np.mean(np.abs(cube.d_rx) ** 2) / 10.0 ** (snr_db / 10.0)
    shape = cube.d_rx.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return RadarCube(cube.d_rx + math.sqrt(var / 2.0) * noise, snr_db)


def roundtrip_delays(target: TargetSpec, cfg: SystemConfig) -> np.ndarray:
    """Delays ``2R/c + (n d_t + m d_r) sin(theta)/c`` with shape (n, m)."""
    lam = derive(cfg).lambda0
    s = math.sin(math.radians(target.theta))
    geom = (np.arange(cfg.N_t)[:, None] * cfg.d_t + np.arange(cfg.N_r)[None, :] * cfg.d_r) * lam
    return 2.0 * target.R / cfg.c + geom * s / cfg.c


def simulate_rx_timedomain(frame: SymbolFrame, targets: Sequence[TargetSpec],
                           cfg: SystemConfig) -> RadarCube:
    """Receive cube obtained by sampling the echo waveform and demodulating.

    Each echo is the transmitted baseband waveform delayed by the full
    roundtrip delay, rotated by the carrier phase of the array-geometry
    delay and modulated by ``exp(j 2 pi f_d t)``.  Doppler time is referenced
    to the centre of the useful interval of symbol 0, so the per-symbol
    Doppler phase matches ``exp(j 2 pi mu T_p f_d)``.  CP samples are dropped
    and an ``N_s``-point DFT is taken per symbol; intra-symbol Doppler
    (inter-carrier interference) is therefore retained.
    """
    _check_frame(frame, cfg)
    if not targets:
        raise SimulationError("at least one target is required")
    fs = sample_rate(cfg)
    per_symbol = int(round(cfg.T_p * fs))
    n_cp = int(round(cfg.T_cp * fs))
    if not (math.isclose(per_symbol, cfg.T_p * fs) and math.isclose(n_cp, cfg.T_cp * fs, abs_tol=1e-9)):
        raise SimulationError("T_p and T_cp must be integer multiples of the sample period")
    for tgt in targets:
        tau = roundtrip_delays(tgt, cfg)
        if tau.min() < 0 or tau.max() > cfg.T_cp:
            raise SimulationError(
                f"cyclic prefix {cfg.T_cp:g} s does not cover roundtrip delays "
                f"[{tau.min():g}, {tau.max():g}] s of target {tgt}")

    t = frame_sample_times(cfg)
    t_ref = cfg.T_cp + (cfg.N_s - 1) / (2.0 * fs)
    used = sorted({n for p in frame.patterns for n in p.indices})
    y = np.zeros((cfg.N_r, t.size), dtype=complex)
    for tgt in targets:
        tau = roundtrip_delays(tgt, cfg)[used]  # (n, m)
        tau0 = 2.0 * tgt.R / cfg.c
        carrier = np.exp(-2j * np.pi * cfg.f_c * (tau - tau0))
        echo = synthesize_sum(frame, used, tau, carrier, t, cfg)
        echo *= np.exp(2j * np.pi * tgt.doppler(cfg) * (t - t_ref))[None, :]
        y += echo
    y = y.reshape(cfg.N_r, cfg.N_p, per_symbol)[:, :, n_cp:n_cp + cfg.N_s]
    spectrum = np.fft.fft(y, axis=2) / cfg.N_s
    return RadarCube(np.ascontiguousarray(spectrum.transpose(0, 2, 1)))


def dump_cube(cube: RadarCube, path) -> None:
    """Debug dump of ``d_rx`` as rows ``m,i,mu,re,im``."""
    dump_csv(cube.d_rx, path, first="m")
