"""Radar processing chain: coarse angle, data removal, range-Doppler and
virtual-array angle refinement."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .config import SystemConfig, derive
from .frame import SymbolFrame
from .radar_sim import RadarCube, receive_steering, transmit_steering
from .sparse import SparseSolution, fista_bpdn, group_omp, omp


class EstimationError(ValueError):
    pass


class IllConditionedDivision(RuntimeWarning):
    pass


class SpatialAliasing(RuntimeWarning):
    pass


@dataclass
class AngleSpectrum:
    magnitudes: np.ndarray  # length n_fft
    sines: np.ndarray  # sin(theta) of each bin at the analysed subcarrier
    valid: np.ndarray  # False where |sin| >= 1 (aliased bins)


@dataclass
class CoarseAngle:
    angle_bin: int
    theta_hat: float  # degrees
    magnitude: float


@dataclass
class TargetEstimate:
    theta_hat: float
    R_hat: float
    v_hat: float
    angle_bin: int
    l_q: int
    p_q: int
    refined: bool = False
    magnitude: float = 0.0

    def as_tuple(self, digits: int = 2):
        return (round(self.theta_hat, digits), round(self.R_hat, digits), round(self.v_hat, digits))


@dataclass
class VirtualSnapshot:
    v: np.ndarray
    mu: int
    pairs: tuple  # ((i_n, n), ...) in stacking order


@dataclass
class VirtualDictionary:
    matrix: np.ndarray  # unit-norm columns, index = angle_idx * len(ranges) + range_idx
    norms: np.ndarray  # column norms before normalisation
    angles: np.ndarray  # degrees
    ranges: np.ndarray  # metres

    def split(self, column: int) -> tuple[int, int]:
        return divmod(int(column), len(self.ranges))


@dataclass
class RefinedAngle:
    theta: float
    R: float
    magnitude: float
    grid_index: int


@dataclass
class Refinement:
    angles: list  # RefinedAngle
    beta_grid: np.ndarray  # per grid angle, max |beta| over ranges
    grid: np.ndarray
    solution: SparseSolution


# ---------------------------------------------------------------------------
# Coarse angle
# ---------------------------------------------------------------------------

def bin_sines(cfg: SystemConfig, n_fft: int, i: int = 0) -> np.ndarray:
    """sin(theta) of each spatial-frequency bin at subcarrier `i`.

    Bins are read as signed frequencies; with ``d_r > 0.5`` some bins map
    outside [-1, 1) and are invalid.
    """
    l = np.arange(n_fft)
    signed = np.where(l < (n_fft + 1) // 2, l, l - n_fft)
    return signed / (n_fft * cfg.d_r) * cfg.f_c / (cfg.f_c + i * cfg.delta)


def angle_spectrum(cube: RadarCube, cfg: SystemConfig, i: int = 0, mu: int = 0,
                   n_fft: Optional[int] = None, noncoherent: bool = False) -> AngleSpectrum:
    """Receive-array DFT magnitude at one subcarrier (or averaged over all)."""
    n_fft = n_fft or cfg.N_r
    if noncoherent:
        spec = np.fft.ifft(cube.d_rx[:, :, mu], n=n_fft, axis=0) * (n_fft / cfg.N_r)
        mags = np.sqrt(np.mean(np.abs(spec) ** 2, axis=1))
    else:
        spec = np.fft.ifft(cube.d_rx[:, i, mu], n=n_fft) * (n_fft / cfg.N_r)
        mags = np.abs(spec)
    sines = bin_sines(cfg, n_fft, 0 if noncoherent else i)
    return AngleSpectrum(mags, sines, np.abs(sines) < 1.0)


def local_maxima_1d(x: np.ndarray, circular: bool = True) -> np.ndarray:
    if circular:
        left, right = np.roll(x, 1), np.roll(x, -1)
    else:
        left = np.concatenate([[-np.inf], x[:-1]])
        right = np.concatenate([x[1:], [-np.inf]])
    return np.flatnonzero((x > left) & (x >= right) & (x > 0))


def coarse_angles(cube: RadarCube, cfg: SystemConfig, i: int = 0, mu: int = 0,
                  expected_k: Optional[int] = None, rel_threshold: float = 0.3,
                  n_fft: Optional[int] = None, noncoherent: bool = False) -> list[CoarseAngle]:
    """Peaks of the receive-array spectrum converted to angles.

    Returns the `expected_k` strongest local maxima when given, otherwise
    every local maximum at or above ``rel_threshold`` times the largest one.
    Bins outside the visible region are dropped with a
    :class:`SpatialAliasing` warning.
    """
    spec = angle_spectrum(cube, cfg, i, mu, n_fft, noncoherent)
    peaks = local_maxima_1d(spec.magnitudes)
    if peaks.size == 0:
        return []
    aliased = peaks[~spec.valid[peaks]]
    if aliased.size:
        warnings.warn(f"angle bins {aliased.tolist()} map outside [-1, 1) in sine; dropped",
                      SpatialAliasing)
    peaks = peaks[spec.valid[peaks]]
    peaks = peaks[np.argsort(-spec.magnitudes[peaks], kind="stable")]
    if expected_k is not None:
        peaks = peaks[:expected_k]
    elif peaks.size:
        peaks = peaks[spec.magnitudes[peaks] >= rel_threshold * spec.magnitudes[peaks[0]]]
    return [CoarseAngle(int(l), math.degrees(math.asin(spec.sines[l])), float(spec.magnitudes[l]))
            for l in peaks]


# ---------------------------------------------------------------------------
# Amplitudes and data removal
# ---------------------------------------------------------------------------

def _mu_slice(cube_or_array, mu):
    return slice(None) if mu is None else slice(mu, mu + 1)


def extract_amplitudes(cube: RadarCube, cfg: SystemConfig, angle_bins: Sequence[int],
                       mu: Optional[int] = None, n_fft: Optional[int] = None):
    """DFT-bin amplitude of each coarse angle on every subcarrier.

    The bin follows the spatial frequency as it drifts with the subcarrier
    frequency.  Returns ``(A, off_grid)`` where ``A`` has shape
    ``(k, N_s, n_mu)`` and ``off_grid[k]`` flags a peak with substantial energy
    in a neighbouring bin (scalloping likely).
    """
    n_fft = n_fft or cfg.N_r
    d = cube.d_rx[:, :, _mu_slice(cube, mu)]
    m = np.arange(cfg.N_r)
    scale = (cfg.f_c + np.arange(cfg.N_s) * cfg.delta) / cfg.f_c
    sines0 = bin_sines(cfg, n_fft, 0)
    out = np.empty((len(angle_bins), cfg.N_s, d.shape[2]), dtype=complex)
    off_grid = np.zeros(len(angle_bins), dtype=bool)
    for k, b in enumerate(angle_bins):
        bins = np.round(sines0[b] * n_fft * cfg.d_r * scale).astype(np.int64) % n_fft
        kernel = np.exp(2j * np.pi * np.outer(m, bins) / n_fft)  # (m, i)
        out[k] = np.einsum("mi,mip->ip", kernel, d) / cfg.N_r
        spec0 = np.abs(np.fft.ifft(d[:, 0, 0], n=n_fft))
        peak = spec0[b]
        off_grid[k] = peak > 0 and max(spec0[(b - 1) % n_fft], spec0[(b + 1) % n_fft]) > 0.1 * peak
    return out, off_grid


def steered_amplitudes(cube: RadarCube, cfg: SystemConfig, theta_deg: float,
                       mu: Optional[int] = None) -> np.ndarray:
    """Matched receive beam at an arbitrary angle, shape ``(N_s, n_mu)``."""
    w = receive_steering(cfg, math.sin(math.radians(theta_deg))).conj()  # (m, i)
    return np.einsum("mi,mip->ip", w, cube.d_rx[:, :, _mu_slice(cube, mu)]) / cfg.N_r


def reference_amplitude(frame: SymbolFrame, cfg: SystemConfig, theta_deg: float,
                        mu: Optional[int] = None) -> np.ndarray:
    """Known-data amplitude ``sum_n d_tx(n,i,mu) exp(-j2pi n d_t sin(theta)(f_c+i delta)/c)``."""
    used = sorted({n for p in frame.patterns for n in p.indices})
    steer = transmit_steering(cfg, math.sin(math.radians(theta_deg)), used)
    return np.einsum("nip,ni->ip", frame.d_tx[used][:, :, _mu_slice(frame, mu)], steer)


def divide_out(A: np.ndarray, A_ref: np.ndarray, eps_rel: float = 1e-6,
               max_masked: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise ``A / A_ref``; entries with ``|A_ref| < eps_rel * median|A_ref|``
    are zeroed and reported in the returned mask."""
    A = np.asarray(A)
    A_ref = np.asarray(A_ref)
    if A.shape != A_ref.shape:
        raise EstimationError(f"shape mismatch {A.shape} vs {A_ref.shape}")
    mag = np.abs(A_ref)
    eps = eps_rel * np.median(mag)
    mask = mag < eps if eps > 0 else mag == 0
    out = np.zeros_like(A, dtype=complex)
    np.divide(A, A_ref, out=out, where=~mask)
    frac = mask.mean() if mask.size else 0.0
    if frac > max_masked:
        warnings.warn(f"ill-conditioned division: {frac:.0%} of entries masked", IllConditionedDivision)
    return out, mask


# ---------------------------------------------------------------------------
# Range-Doppler
# ---------------------------------------------------------------------------

def range_doppler_map(d: np.ndarray) -> np.ndarray:
    """|DFT_mu(IDFT_i(d))| for ``d`` of shape ``(N_s, N_p)``."""
    r = np.fft.ifft(d, axis=0)
    return np.abs(np.fft.fft(r, axis=1))


def signed_doppler_index(p: int, N_p: int) -> int:
    return p if p <= N_p // 2 else p - N_p


def detect_targets(rd_map: np.ndarray, expected: Optional[int] = None,
                   rel_threshold: float = 0.5) -> list[tuple[int, int]]:
    """2-D circular local maxima as ``(l, p_signed)``, strongest first."""
    peak = rd_map.max() if rd_map.size else 0.0
    if not peak > 0:
        return []
    is_max = (rd_map == maximum_filter(rd_map, size=3, mode="wrap")) & (rd_map > 0)
    ls, ps = np.nonzero(is_max)
    vals = rd_map[ls, ps]
    order = np.argsort(-vals, kind="stable")
    ls, ps, vals = ls[order], ps[order], vals[order]
    if expected is not None:
        keep = slice(0, expected)
    else:
        keep = vals >= rel_threshold * peak
    N_p = rd_map.shape[1]
    return [(int(l), signed_doppler_index(int(p), N_p)) for l, p in zip(ls[keep], ps[keep])]


# ---------------------------------------------------------------------------
# Virtual array
# ---------------------------------------------------------------------------

def build_virtual(cube: RadarCube, frame: SymbolFrame, cfg: SystemConfig, mu: int) -> VirtualSnapshot:
    """Stack ``d_rx(m, i_n, mu) / d_tx(n, i_n, mu)`` over all m for each active n."""
    pairs = frame.private_map[mu]
    if not pairs:
        raise EstimationError(f"OFDM symbol {mu} carries no private subcarriers")
    pattern = frame.patterns[mu]
    ordered = sorted(pairs, key=lambda p: pattern.position(p[1]))
    v = np.empty(len(ordered) * cfg.N_r, dtype=complex)
    for pos, (i_n, n) in enumerate(ordered):
        v[pos * cfg.N_r:(pos + 1) * cfg.N_r] = cube.d_rx[:, i_n, mu] / frame.d_tx[n, i_n, mu]
    return VirtualSnapshot(v, mu, tuple(ordered))


def angle_grid(N_a: int = 181) -> np.ndarray:
    return np.linspace(-90.0, 90.0, N_a)


def build_dictionary(cfg: SystemConfig, pairs, ranges: Sequence[float],
                     grid: Optional[np.ndarray] = None) -> VirtualDictionary:
    """Virtual-array atoms ``[D(R) . a_t(theta)] kron a_r(theta)`` on the active rows.

    `pairs` are the ``(i_n, n)`` private pairs in stacking order.
    """
    ranges = np.asarray(list(ranges), dtype=float)
    if ranges.size == 0:
        raise EstimationError("at least one range is required")
    grid = angle_grid() if grid is None else np.asarray(grid, dtype=float)
    sub = np.array([p[0] for p in pairs], dtype=float)
    ant = np.array([p[1] for p in pairs], dtype=float)
    s = np.sin(np.radians(grid))
    m = np.arange(cfg.N_r)
    tx = np.exp(-2j * np.pi * cfg.d_t * np.outer(s, ant))  # (a, n)
    rx = np.exp(-2j * np.pi * cfg.d_r * np.outer(s, m))  # (a, m)
    rng = np.exp(-2j * np.pi * np.outer(ranges, sub) * cfg.delta * 2.0 / cfg.c)  # (j, n)
    atoms = (tx[:, None, :, None] * rng[None, :, :, None]) * rx[:, None, None, :]  # (a, j, n, m)
    cols = atoms.reshape(grid.size * ranges.size, -1).T
    norms = np.linalg.norm(cols, axis=0)
    return VirtualDictionary(cols / norms, norms, grid, ranges)


def refine_angles(snapshots: Sequence[VirtualSnapshot], dictionaries: Sequence[VirtualDictionary],
                  solver: str = "omp", max_atoms: Optional[int] = None, rtol: float = 1e-2,
                  min_rel_coef: float = 0.25, fista_lambda_rel: float = 0.05) -> Refinement:
    """Sparse recovery over the angle/range dictionary.

    Several snapshots are solved jointly (shared support, per-snapshot
    coefficients).  Angles are the local maxima, over the grid, of the
    largest coefficient magnitude per angle, kept when at least
    ``min_rel_coef`` times the strongest.
    """
    if len(snapshots) != len(dictionaries) or not snapshots:
        raise EstimationError("need one dictionary per snapshot")
    D0 = dictionaries[0]
    n_cols = D0.matrix.shape[1]
    if solver == "omp":
        K = max_atoms or min(D0.matrix.shape)
        if len(snapshots) == 1:
            v = snapshots[0].v
            sol = omp(D0.matrix, v, K=K, tol=rtol * np.linalg.norm(v))
            coef = sol.dense(n_cols)[:, None]
        else:
            V = np.stack([s.v for s in snapshots])
            sol = group_omp(np.stack([d.matrix for d in dictionaries]), V, K=K,
                            tol=rtol * np.linalg.norm(V))
            coef = sol.dense(n_cols)
    elif solver == "fista":
        cols = []
        for snap, dic in zip(snapshots, dictionaries):
            lam = fista_lambda_rel * np.max(np.abs(dic.matrix.conj().T @ snap.v))
            sol = fista_bpdn(dic.matrix, snap.v, lam)
            cols.append(sol.x)
        coef = np.stack(cols, axis=1)
    else:
        raise EstimationError(f"unknown solver {solver!r}")

    beta = coef / D0.norms[:, None]
    per_col = np.sqrt(np.mean(np.abs(beta) ** 2, axis=1))
    n_r = len(D0.ranges)
    per_atom = per_col.reshape(len(D0.angles), n_r)
    beta_grid = per_atom.max(axis=1)
    angles = []
    if beta_grid.max() > 0:
        peaks = local_maxima_1d(beta_grid, circular=False)
        peaks = peaks[beta_grid[peaks] >= min_rel_coef * beta_grid.max()]
        for a in peaks[np.argsort(-beta_grid[peaks], kind="stable")]:
            j = int(np.argmax(per_atom[a]))
            angles.append(RefinedAngle(float(D0.angles[a]), float(D0.ranges[j]),
                                       float(beta_grid[a]), int(a)))
    return Refinement(angles, beta_grid, D0.angles, sol)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineOptions:
    coarse_subcarrier: int = 0
    coarse_symbol: int = 0
    coarse_noncoherent: bool = False
    coarse_rel_threshold: float = 0.3
    expected_angles: Optional[int] = None
    n_fft: Optional[int] = None
    detect_rel_threshold: float = 0.5
    expected_per_angle: Optional[int] = None
    eps_div_rel: float = 1e-6
    refine: bool = True
    grid_size: int = 181
    solver: str = "omp"
    refine_symbols: Optional[Sequence[int]] = None
    refine_rtol: float = 1e-2
    refine_max_atoms: Optional[int] = None
    refine_min_coef: float = 0.25
    fista_lambda_rel: float = 0.05


@dataclass
class PipelineResult:
    coarse: list
    refined: list
    spectrum: AngleSpectrum
    refinement: Optional[Refinement] = None


def _estimates_from_map(rd_map, cfg, theta, angle_bin, refined, opts) -> list[TargetEstimate]:
    der = derive(cfg)
    out = []
    for l, p in detect_targets(rd_map, opts.expected_per_angle, opts.detect_rel_threshold):
        out.append(TargetEstimate(theta, l * der.range_bin, p * der.velocity_bin, angle_bin, l, p,
                                  refined, float(rd_map[l, p % cfg.N_p])))
    return out


def run_pipeline(cube: RadarCube, frame: SymbolFrame, cfg: SystemConfig,
                 options: Optional[PipelineOptions] = None) -> PipelineResult:
    """Coarse angle -> data removal -> range/Doppler -> virtual-array
    refinement -> range/Doppler again at the refined angles."""
    opts = options or PipelineOptions()
    spectrum = angle_spectrum(cube, cfg, opts.coarse_subcarrier, opts.coarse_symbol,
                              opts.n_fft, opts.coarse_noncoherent)
    peaks = coarse_angles(cube, cfg, opts.coarse_subcarrier, opts.coarse_symbol,
                          opts.expected_angles, opts.coarse_rel_threshold, opts.n_fft,
                          opts.coarse_noncoherent)
    coarse: list[TargetEstimate] = []
    if peaks:
        amps, _ = extract_amplitudes(cube, cfg, [pk.angle_bin for pk in peaks], None, opts.n_fft)
        for pk, A in zip(peaks, amps):
            ref = reference_amplitude(frame, cfg, pk.theta_hat)
            d, _ = divide_out(A, ref, opts.eps_div_rel)
            coarse += _estimates_from_map(range_doppler_map(d), cfg, pk.theta_hat, pk.angle_bin,
                                          False, opts)
    result = PipelineResult(coarse, [], spectrum)
    private_symbols = [mu for mu, pm in enumerate(frame.private_map) if pm]
    if not coarse or not opts.refine or not private_symbols:
        return result

    symbols = list(opts.refine_symbols) if opts.refine_symbols is not None else private_symbols[:1]
    ranges = sorted({round(e.R_hat, 9) for e in coarse})
    grid = angle_grid(opts.grid_size)
    snaps = [build_virtual(cube, frame, cfg, mu) for mu in symbols]
    dicts = [build_dictionary(cfg, s.pairs, ranges, grid) for s in snaps]
    refinement = refine_angles(snaps, dicts, opts.solver, opts.refine_max_atoms, opts.refine_rtol,
                               opts.refine_min_coef, opts.fista_lambda_rel)
    result.refinement = refinement
    for ang in refinement.angles:
        A = steered_amplitudes(cube, cfg, ang.theta)
        ref = reference_amplitude(frame, cfg, ang.theta)
        d, _ = divide_out(A, ref, opts.eps_div_rel)
        result.refined += _estimates_from_map(range_doppler_map(d), cfg, ang.theta, ang.grid_index,
                                              True, opts)
    return result
