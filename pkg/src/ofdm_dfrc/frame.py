"""Transmit symbol tensor construction, QAM mapping and waveform synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import SystemConfig
from .gsm import (AntennaPattern, bits_per_ordered_pattern, bits_per_pattern,
                  bits_to_int, encode_pattern)


class FrameError(ValueError):
    pass


# ---------------------------------------------------------------------------
# QAM
# ---------------------------------------------------------------------------

def _axis_tables(order: int):
    side = math.isqrt(order)
    if side * side != order or side < 2 or side & (side - 1):
        raise FrameError(f"unsupported QAM order {order}")
    k = side.bit_length() - 1
    # Gray label g sits at level index gray_decode(g)
    levels_of_label = np.empty(side, dtype=int)
    for g in range(side):
        idx, shift = g, g >> 1
        while shift:
            idx ^= shift
            shift >>= 1
        levels_of_label[g] = idx
    label_of_level = np.argsort(levels_of_label)
    amplitude = 2.0 * np.arange(side) - (side - 1)
    scale = math.sqrt(2.0 * (order - 1) / 3.0)
    return side, k, levels_of_label, label_of_level, amplitude / scale


def constellation(order: int = 16) -> np.ndarray:
    """All points indexed by their integer label (I bits are the MSBs)."""
    side, k, lvl, _, amp = _axis_tables(order)
    labels = np.arange(order)
    return amp[lvl[labels >> k]] + 1j * amp[lvl[labels & (side - 1)]]


def map_qam(bits, order: int = 16) -> np.ndarray:
    """Gray-labelled square QAM with unit average energy.

    The first half of each group of ``log2(order)`` bits selects the in-phase
    level, the second half the quadrature level.
    """
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    side, k, lvl, _, amp = _axis_tables(order)
    bps = 2 * k
    if bits.size % bps:
        raise FrameError(f"bit count {bits.size} not divisible by {bps}")
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(k - 1, -1, -1)
    i_label = groups[:, :k] @ weights
    q_label = groups[:, k:] @ weights
    return amp[lvl[i_label]] + 1j * amp[lvl[q_label]]


def _decide_axis(x: np.ndarray, amp: np.ndarray, label_of_level: np.ndarray) -> np.ndarray:
    dist = np.abs(x[:, None] - amp[None, :])
    best = dist.min(axis=1, keepdims=True)
    tie = dist <= best + 1e-12
    # among equidistant levels take the smallest label
    cand = np.where(tie, label_of_level[None, :], np.iinfo(np.int64).max)
    return cand.min(axis=1)


def demap_qam(symbols, order: int = 16) -> np.ndarray:
    """Hard-decision inverse of :func:`map_qam`."""
    s = np.asarray(symbols, dtype=complex).ravel()
    side, k, _, label_of_level, amp = _axis_tables(order)
    i_label = _decide_axis(s.real, amp, label_of_level)
    q_label = _decide_axis(s.imag, amp, label_of_level)
    shifts = np.arange(k - 1, -1, -1)
    out = np.empty((s.size, 2 * k), dtype=np.uint8)
    out[:, :k] = (i_label[:, None] >> shifts) & 1
    out[:, k:] = (q_label[:, None] >> shifts) & 1
    return out.ravel()


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

PrivatePairs = tuple[tuple[int, int], ...]


@dataclass
class SymbolFrame:
    """Transmitted data symbols ``d_tx[n, i, mu]`` and their bookkeeping.

    ``slots[k] = (n, i, mu)`` is the position of payload symbol ``k``;
    payload bits ``4k .. 4k+3`` (16-QAM) were mapped there.
    """

    d_tx: np.ndarray
    patterns: list[AntennaPattern]
    private_map: list[Optional[PrivatePairs]]
    payload_bits: np.ndarray
    index_bits: np.ndarray
    slots: np.ndarray
    qam_order: int = 16
    fixed_endpoints: bool = False

    @property
    def shape(self):
        return self.d_tx.shape

    def active(self, mu: int) -> tuple[int, ...]:
        return self.patterns[mu].indices

    def payload_symbols(self) -> np.ndarray:
        n, i, mu = self.slots.T
        return self.d_tx[n, i, mu]


def assign_private(pattern: AntennaPattern, cfg: Optional[SystemConfig] = None) -> PrivatePairs:
    """Pair subcarrier ``j`` with the ``j``-th smallest active antenna."""
    return tuple((j, n) for j, n in enumerate(pattern.indices))


def payload_mask(pattern: AntennaPattern, N_s: int, private: Optional[PrivatePairs]) -> np.ndarray:
    """Boolean (N_x, N_s) mask of data-carrying slots, rows in pattern order."""
    mask = np.ones((len(pattern), N_s), dtype=bool)
    if private:
        for i_n, owner in private:
            mask[:, i_n] = False
            mask[pattern.position(owner), i_n] = True
    return mask


def symbols_per_ofdm_symbol(cfg: SystemConfig, with_private: bool) -> int:
    loss = cfg.N_x * (cfg.N_x - 1) if with_private else 0
    return cfg.N_x * cfg.N_s - loss


def _has_private(mu: int, private_every_M) -> bool:
    if private_every_M is None or (isinstance(private_every_M, float) and math.isinf(private_every_M)):
        return False
    return mu % int(private_every_M) == 0


def frame_bit_budget(cfg: SystemConfig, private_every_M=1, fixed_endpoints: bool = False) -> tuple[int, int]:
    """(payload bits, index bits) consumed by :func:`build_frame`."""
    bps = int(math.log2(cfg.qam_order))
    n_sym = sum(symbols_per_ofdm_symbol(cfg, _has_private(mu, private_every_M))
                for mu in range(cfg.N_p))
    B = bits_per_pattern(cfg.N_t, cfg.N_x, fixed_endpoints)
    return n_sym * bps, B * cfg.N_p


def build_frame(payload_bits, index_bits, cfg: SystemConfig, private_every_M=1,
                fixed_endpoints: bool = False) -> SymbolFrame:
    """Assemble ``d_tx`` for one frame of ``N_p`` OFDM symbols.

    Each OFDM symbol takes ``B`` index bits for its antenna pattern, then
    fills the active antennas' subcarriers (antenna-major) with QAM symbols.
    Private subcarriers are attached on symbols with ``mu % M == 0``; pass
    ``None`` to disable them.
    """
    payload_bits = np.asarray(payload_bits, dtype=np.uint8).ravel()
    index_bits = np.asarray(index_bits, dtype=np.uint8).ravel()
    need_payload, need_index = frame_bit_budget(cfg, private_every_M, fixed_endpoints)
    if payload_bits.size < need_payload:
        raise FrameError(f"bit underrun: payload needs {need_payload} bits, got {payload_bits.size}")
    if index_bits.size < need_index:
        raise FrameError(f"bit underrun: index needs {need_index} bits, got {index_bits.size}")
    payload_bits = payload_bits[:need_payload]
    index_bits = index_bits[:need_index]

    B = bits_per_pattern(cfg.N_t, cfg.N_x, fixed_endpoints)
    symbols = map_qam(payload_bits, cfg.qam_order)
    d_tx = np.zeros((cfg.N_t, cfg.N_s, cfg.N_p), dtype=complex)
    patterns, privates, slots = [], [], []
    pos = 0
    for mu in range(cfg.N_p):
        value = bits_to_int(index_bits[mu * B:(mu + 1) * B]) if B else 0
        pattern = encode_pattern(value, cfg.N_t, cfg.N_x, fixed_endpoints)
        private = assign_private(pattern, cfg) if _has_private(mu, private_every_M) else None
        mask = payload_mask(pattern, cfg.N_s, private)
        rows, cols = np.nonzero(mask)
        ants = np.asarray(pattern.indices)[rows]
        count = rows.size
        d_tx[ants, cols, mu] = symbols[pos:pos + count]
        slots.append(np.column_stack([ants, cols, np.full(count, mu)]))
        pos += count
        patterns.append(pattern)
        privates.append(private)
    return SymbolFrame(d_tx=d_tx, patterns=patterns, private_map=privates,
                       payload_bits=payload_bits, index_bits=index_bits,
                       slots=np.concatenate(slots).astype(np.int64),
                       qam_order=cfg.qam_order, fixed_endpoints=fixed_endpoints)


def random_frame(cfg: SystemConfig, rng: np.random.Generator, private_every_M=1,
                 fixed_endpoints: bool = False) -> SymbolFrame:
    n_payload, n_index = frame_bit_budget(cfg, private_every_M, fixed_endpoints)
    payload = rng.integers(0, 2, n_payload, dtype=np.uint8)
    index = rng.integers(0, 2, n_index, dtype=np.uint8)
    return build_frame(payload, index, cfg, private_every_M, fixed_endpoints)


def bit_rate(cfg: SystemConfig, with_private: bool) -> float:
    """Peak bit rate in bits/s for one OFDM symbol every ``T_p``.

    Without private subcarriers the pattern carries ``floor(log2 C(N_t, N_x))``
    bits.  With private subcarriers in every symbol ``N_x(N_x-1)`` data
    symbols are lost, while the ordered assignment of the private
    subcarriers to the active antennas is an additional index degree of
    freedom: ``floor(log2(N_t! / (N_t-N_x)!))`` bits.
    """
    bps = math.log2(cfg.qam_order)
    data = cfg.N_x * cfg.N_s * bps
    if with_private:
        data -= cfg.N_x * (cfg.N_x - 1) * bps
        index = bits_per_ordered_pattern(cfg.N_t, cfg.N_x)
    else:
        index = bits_per_pattern(cfg.N_t, cfg.N_x, False)
    return (data + index) / cfg.T_p


# ---------------------------------------------------------------------------
# Time-domain waveform (validation path)
# ---------------------------------------------------------------------------

def sample_rate(cfg: SystemConfig) -> float:
    return cfg.N_s * cfg.delta


def frame_sample_times(cfg: SystemConfig) -> np.ndarray:
    """Uniform sample instants covering the whole frame, CP included."""
    per_symbol = int(round(cfg.T_p * sample_rate(cfg)))
    return np.arange(cfg.N_p * per_symbol) / sample_rate(cfg)


def synthesize_waveform(frame: SymbolFrame, n: int, t_samples, cfg: SystemConfig) -> np.ndarray:
    """Baseband waveform of antenna ``n`` evaluated at arbitrary instants.

    Symbol ``mu`` occupies ``[mu*T_p, (mu+1)*T_p)``; its subcarrier phases are
    referenced to the start of the useful interval ``mu*T_p + T_cp``, so the
    first ``T_cp`` seconds are the cyclic extension of the last ones.

    `t_samples` may be 2-D; rows that lie on a (shifted) grid of the sample
    rate ``N_s * delta`` are evaluated exactly through an IFFT, anything else
    by direct summation over the subcarriers.
    """
    t = np.asarray(t_samples, dtype=float)
    rows = t.reshape(-1, t.shape[-1]) if t.ndim else t.reshape(1, 1)
    out = np.zeros(rows.shape, dtype=complex)
    for r, row in enumerate(rows):
        out[r] = _synthesize_row(frame.d_tx[n], row, cfg)
    return out.reshape(t.shape)


def _synthesize_row(d: np.ndarray, t: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    out = np.zeros(t.shape, dtype=complex)
    mu = np.floor(t / cfg.T_p).astype(np.int64)
    inside = (mu >= 0) & (mu < cfg.N_p)
    if not inside.any():
        return out
    fs = sample_rate(cfg)
    mus = mu[inside]
    u = t[inside] - mus * cfg.T_p - cfg.T_cp
    s = u * fs
    r = s - s[0]
    if np.all(np.abs(r - np.round(r)) < 1e-6):
        base = np.floor(s[0])
        frac = s[0] - base
        q = (np.round(r).astype(np.int64) + int(base)) % cfg.N_s
        ramp = np.exp(2j * np.pi * np.arange(cfg.N_s) * frac / cfg.N_s)
        periods = np.fft.ifft(d * ramp[:, None], axis=0) * cfg.N_s  # (N_s, N_p)
        out[inside] = periods[q, mus]
        return out
    freqs = np.arange(cfg.N_s) * cfg.delta
    vals = np.empty(u.size, dtype=complex)
    for start in range(0, u.size, 2048):
        sl = slice(start, start + 2048)
        phase = np.exp(2j * np.pi * u[sl, None] * freqs[None, :])
        vals[sl] = np.einsum("si,is->s", phase, d[:, mus[sl]])
    out[inside] = vals
    return out


def synthesize_sum(frame: SymbolFrame, antennas: Sequence[int], delays: np.ndarray,
                   weights: np.ndarray, t_samples, cfg: SystemConfig) -> np.ndarray:
    """``out[r](t) = sum_n weights[n, r] * x(antennas[n], t - delays[n, r])``.

    Exact for a uniform sample grid as long as every delayed copy falls in
    the same symbol at every sample; otherwise falls back to per-antenna
    :func:`synthesize_waveform` calls.
    """
    t = np.asarray(t_samples, dtype=float)
    delays = np.atleast_2d(np.asarray(delays, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    fs = sample_rate(cfg)
    ant = list(antennas)
    R = delays.shape[1]
    out = np.zeros((R, t.size), dtype=complex)

    s = t * fs
    steps = s - s[0]
    uniform = np.all(np.abs(steps - np.round(steps)) < 1e-6)
    mu_lo = np.floor((t - delays.max()) / cfg.T_p)
    mu_hi = np.floor((t - delays.min()) / cfg.T_p)
    if not uniform or np.any(mu_lo != mu_hi):
        for r in range(R):
            for k, n in enumerate(ant):
                out[r] += weights[k, r] * synthesize_waveform(frame, n, t - delays[k, r], cfg)
        return out

    mu = mu_lo.astype(np.int64)
    inside = (mu >= 0) & (mu < cfg.N_p)
    mus = mu[inside]
    u = (t[inside] - mus * cfg.T_p - cfg.T_cp) * fs  # nominal sample offsets, zero delay
    base = np.floor(u[0])
    frac = u[0] - base
    q = (np.round(u - u[0]).astype(np.int64) + int(base)) % cfg.N_s
    i = np.arange(cfg.N_s)
    ramp = np.exp(2j * np.pi * i * frac / cfg.N_s)
    # per-antenna, per-row delay as a phase ramp over subcarriers
    shift = weights[:, :, None] * np.exp(-2j * np.pi * delays[:, :, None] * fs * i[None, None, :] / cfg.N_s)
    d = frame.d_tx[ant]  # (n, i, mu)
    for r in range(R):
        spec = np.einsum("ni,nip->ip", shift[:, r, :], d) * ramp[:, None]
        periods = np.fft.ifft(spec, axis=0) * cfg.N_s
        out[r, inside] = periods[q, mus]
    return out


# ---------------------------------------------------------------------------
# Debug dumps
# ---------------------------------------------------------------------------

def dump_csv(tensor: np.ndarray, path, first: str = "n", nonzero_only: bool = False) -> None:
    """Write a complex (antenna, i, mu) tensor as rows ``first,i,mu,re,im``."""
    tensor = np.asarray(tensor)
    idx = np.argwhere(tensor != 0) if nonzero_only else np.argwhere(np.ones(tensor.shape, dtype=bool))
    vals = tensor[tuple(idx.T)]
    table = np.column_stack([idx, vals.real, vals.imag])
    np.savetxt(path, table, delimiter=",", header=f"{first},i,mu,re,im", comments="",
               fmt=["%d", "%d", "%d", "%.17g", "%.17g"])


def load_csv(path, shape) -> np.ndarray:
    """Inverse of :func:`dump_csv`; entries not listed are zero."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.zeros(shape, dtype=complex)
    if table.size:
        idx = table[:, :3].astype(np.int64)
        out[idx[:, 0], idx[:, 1], idx[:, 2]] = table[:, 3] + 1j * table[:, 4]
    return out
