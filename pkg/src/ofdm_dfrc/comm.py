"""Communication side: frequency-selective MIMO channel and the two GSM
receivers (joint sparse recovery, and private-subcarrier identification
followed by least squares)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import SystemConfig
from .frame import SymbolFrame, assign_private, demap_qam, payload_mask
from .gsm import AntennaPattern, PatternError, bits_per_pattern, decode_pattern, int_to_bits
from .sparse import group_omp


@dataclass
class CommChannel:
    H: np.ndarray  # (N_s, N_c, N_t)
    taps: np.ndarray  # (L, N_c, N_t)
    seed: object = None

    @property
    def L(self) -> int:
        return self.taps.shape[0]


@dataclass
class CommObservation:
    Y: np.ndarray  # (N_c, N_s)
    snr_db: float
    noise_var: float
    mu: int = 0


@dataclass
class DecodedFrame:
    pattern_hat: AntennaPattern
    symbols_hat: np.ndarray  # (N_t, N_s), zero outside the detected pattern
    payload_bits_hat: np.ndarray
    index_bits_hat: np.ndarray
    private_set_hat: tuple = ()
    index_error: bool = False  # detected support is not a valid codeword
    fallback: bool = False  # private decoder fell back to joint recovery


def gen_channel(cfg: SystemConfig, L: int = 8, seed=None) -> CommChannel:
    """L-tap Rayleigh MIMO channel, unit average power per entry of ``H``."""
    if not 1 <= L <= cfg.N_s:
        raise ValueError(f"tap count {L} outside [1, {cfg.N_s}]")
    rng = np.random.default_rng(seed)
    shape = (L, cfg.N_c, cfg.N_t)
    taps = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0 * L)
    H = np.fft.fft(taps, n=cfg.N_s, axis=0)
    return CommChannel(H, taps, seed)


def transmit(frame: SymbolFrame, channel: CommChannel, mu: int, snr_db: float, seed=None,
             noise_var: Optional[float] = None) -> CommObservation:
    """``Y_i = H_i A_i + N_i`` for every subcarrier of OFDM symbol `mu`.

    SNR is measured at the receiver: the noise variance is the mean
    per-antenna received power over subcarriers that carry data, divided by
    ``10^(snr/10)``.  Passing `noise_var` fixes the variance directly and
    ignores `snr_db`.  The unit noise draw depends only on `seed`.
    """
    A = frame.d_tx[:, :, mu]  # (N_t, N_s)
    if channel.H.shape[0] != A.shape[1] or channel.H.shape[2] != A.shape[0]:
        raise ValueError(f"channel {channel.H.shape} does not match frame {A.shape}")
    HA = np.einsum("irt,ti->ri", channel.H, A)
    n_c = HA.shape[0]
    if noise_var is None:
        if math.isinf(snr_db) and snr_db > 0:
            return CommObservation(HA, snr_db, 0.0, mu)
        active = np.any(A != 0, axis=0)
        power = np.sum(np.abs(HA[:, active]) ** 2) / (n_c * max(int(active.sum()), 1))
        var = power / 10.0 ** (snr_db / 10.0)
    else:
        var = float(noise_var)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(HA.shape) + 1j * rng.standard_normal(HA.shape)
    return CommObservation(HA + math.sqrt(var / 2.0) * noise, snr_db, var, mu)


def _finish(support, symbols: np.ndarray, cfg: SystemConfig, with_private: bool,
            fixed_endpoints: bool, private_set=(), fallback=False) -> DecodedFrame:
    """Demap the payload in the layout implied by the detected pattern and
    recover the index bits.  A support that is not a codeword (missing
    endpoints, or rank beyond ``2**B``) is flagged and its index bits zeroed."""
    idx = tuple(sorted(int(n) for n in support))
    B = bits_per_pattern(cfg.N_t, cfg.N_x, fixed_endpoints)
    valid = not fixed_endpoints or (idx[0] == 0 and idx[-1] == cfg.N_t - 1)
    pattern = AntennaPattern(idx, fixed_endpoints and valid)
    private = assign_private(pattern) if with_private else None
    mask = payload_mask(pattern, symbols.shape[1], private)
    rows, cols = np.nonzero(mask)
    payload = demap_qam(symbols[np.asarray(idx)[rows], cols], cfg.qam_order)
    index = np.zeros(B, dtype=np.uint8)
    if valid:
        try:
            index = np.array(int_to_bits(decode_pattern(pattern, cfg.N_t), B), dtype=np.uint8)
        except PatternError:
            valid = False
    return DecodedFrame(pattern, symbols, payload, index, tuple(private_set), not valid, fallback)


def _ls_on_support(H: np.ndarray, Y: np.ndarray, support) -> np.ndarray:
    """Per-subcarrier least squares restricted to `support`; returns (N_t, N_s)."""
    support = list(support)
    coef = np.einsum("ikr,ri->ik", np.linalg.pinv(H[:, :, support]), Y)
    out = np.zeros((H.shape[2], H.shape[0]), dtype=complex)
    out[support] = coef.T
    return out


def decode_ssr(obs: CommObservation, channel: CommChannel, cfg: SystemConfig,
               with_private: bool = True, fixed_endpoints: bool = False) -> DecodedFrame:
    """Joint-support recovery over all subcarriers (active antennas are shared)."""
    sol = group_omp(channel.H, obs.Y.T, K=cfg.N_x)
    symbols = _ls_on_support(channel.H, obs.Y, sol.support)
    return _finish(sol.support, symbols, cfg, with_private, fixed_endpoints)


def singleton_test(obs: CommObservation, channel: CommChannel, gamma: float = 0.1,
                   noise_sigmas: float = 3.0):
    """First OMP steps on every subcarrier, with residual stopping.

    The stopping tolerance is ``max(gamma*||Y_i||, tau)`` where ``tau^2`` is
    the noise energy ``N_c sigma^2`` plus `noise_sigmas` standard
    deviations.  A subcarrier is 1-sparse when OMP takes exactly one atom:
    ``||Y_i||`` is above the tolerance (otherwise no atom is taken) and the
    residual after the best atom is below it.

    Returns ``(is_single, antenna, coefficient)`` per subcarrier.
    """
    H, Y = channel.H, obs.Y
    col_energy = np.sum(np.abs(H) ** 2, axis=1)  # (N_s, N_t)
    corr = np.einsum("irt,ri->it", H.conj(), Y)
    score = np.abs(corr) ** 2 / col_energy
    best = np.argmax(score, axis=1)
    idx = np.arange(Y.shape[1])
    y_energy = np.sum(np.abs(Y) ** 2, axis=0)
    resid_sq = np.maximum(y_energy - score[idx, best], 0.0)
    n_c = Y.shape[0]
    noise_sq = obs.noise_var * (n_c + noise_sigmas * math.sqrt(n_c))
    tol_sq = np.maximum(gamma ** 2 * y_energy, noise_sq)
    coef = corr[idx, best] / col_energy[idx, best]
    return (y_energy > tol_sq) & (resid_sq <= tol_sq), best, coef


def decode_private(obs: CommObservation, channel: CommChannel, cfg: SystemConfig,
                   gamma: float = 0.1, noise_sigmas: float = 3.0, fit_sigmas: float = 1.0,
                   fixed_endpoints: bool = False) -> DecodedFrame:
    """Identify private subcarriers as the 1-sparse ones, vote the active set
    from them, then least squares.

    Once the pattern is known the private pairing follows from it, so each
    private subcarrier is fitted on its owner's column alone and every other
    subcarrier on all pattern columns.  The voted pattern is accepted only
    if the total residual of that fit is consistent with the noise level
    (within `fit_sigmas` standard deviations).  Otherwise, or when fewer
    than ``N_x`` distinct antennas were voted, the joint support of
    :func:`decode_ssr` is used instead and ``fallback`` is set.
    """
    single, best, _ = singleton_test(obs, channel, gamma, noise_sigmas)
    votes = np.bincount(best[single], minlength=cfg.N_t)
    fallback = np.count_nonzero(votes) < cfg.N_x
    if not fallback:
        # most votes first; ties go to the larger correlation energy summed
        # over all subcarriers
        energy = np.sum(np.abs(np.einsum("irt,ri->it", channel.H.conj(), obs.Y)) ** 2
                        / np.sum(np.abs(channel.H) ** 2, axis=1), axis=0)
        chosen = sorted(int(n) for n in np.lexsort((-energy, -votes))[:cfg.N_x])
        symbols, resid_sq, dof = _fit_with_layout(channel, obs.Y, chosen)
        bound = obs.noise_var * (dof + fit_sigmas * math.sqrt(dof))
        fallback = resid_sq > max(bound, 1e-12 * float(np.sum(np.abs(obs.Y) ** 2)))
    if fallback:
        chosen = sorted(int(n) for n in group_omp(channel.H, obs.Y.T, K=cfg.N_x).support)
        symbols, _, _ = _fit_with_layout(channel, obs.Y, chosen)
    private_set = tuple(int(i) for i in np.flatnonzero(single) if best[i] in chosen)
    return _finish(chosen, symbols, cfg, True, fixed_endpoints, private_set, fallback)


def _fit_with_layout(channel: CommChannel, Y: np.ndarray, chosen):
    """LS symbols for pattern `chosen` with its private pairing; returns
    ``(symbols, residual energy, residual degrees of freedom)``."""
    H = channel.H
    symbols = _ls_on_support(H, Y, chosen)
    pairs = assign_private(AntennaPattern(tuple(chosen)))
    for i, owner in pairs:
        h = H[i, :, owner]
        symbols[:, i] = 0.0
        symbols[owner, i] = np.vdot(h, Y[:, i]) / np.vdot(h, h).real
    resid = Y - np.einsum("irt,ti->ri", H, symbols)
    n_c, n_s = Y.shape
    dof = n_s * (n_c - len(chosen)) + len(pairs) * (len(chosen) - 1)
    return symbols, float(np.sum(np.abs(resid) ** 2)), dof


def ber(bits_true, bits_hat) -> tuple[float, float]:
    """(payload BER, index BER) from ``(payload, index)`` stream pairs."""
    rates = []
    for t, h in zip(bits_true, bits_hat):
        t = np.asarray(t, dtype=np.uint8).ravel()
        h = np.asarray(h, dtype=np.uint8).ravel()
        if t.size != h.size:
            raise ValueError(f"stream length mismatch: {t.size} vs {h.size}")
        rates.append(float(np.count_nonzero(t != h)) / t.size if t.size else 0.0)
    return rates[0], rates[1]
