"""System parameters for the OFDM-MIMO DFRC simulator.

All antenna spacings are expressed in multiples of the carrier wavelength
``lambda0 = c / f_c``.  Angles are degrees at the API boundary.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 3.0e8


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


@dataclass(frozen=True)
class SystemConfig:
    f_c: float = 24e9  # carrier frequency [Hz]
    delta: float = 100e3  # subcarrier spacing [Hz]
    T_p: float = 12.5e-6  # OFDM symbol duration incl. CP [s]
    T_cp: float = 2.5e-6  # cyclic prefix duration [s]
    N_s: int = 1024
    N_p: int = 256
    N_t: int = 32
    N_x: int = 5
    N_r: int = 50
    N_c: int = 16
    d_t: float = 1.0  # [lambda0]
    d_r: float = 0.5  # [lambda0]
    c: float = SPEED_OF_LIGHT
    qam_order: int = 16

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    lambda0: float
    range_bin: float
    velocity_bin: float
    max_unambiguous_range: float
    coarse_sine_bin: float


@dataclass(frozen=True)
class TargetSpec:
    """Point target: angle in degrees, range in metres, radial velocity in m/s."""

    theta: float
    R: float
    v: float

    def doppler(self, cfg: SystemConfig) -> float:
        return 2.0 * self.v * cfg.f_c / cfg.c


def table1_config() -> SystemConfig:
    """The full-scale radar parameter set."""
    return SystemConfig()


def desk_config(**overrides) -> SystemConfig:
    """Reduced profile used for CI-speed runs."""
    base = SystemConfig(N_s=128, N_p=32, N_r=16, N_t=16, N_x=4)
    return base.replace(**overrides) if overrides else base


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return `cfg` unchanged if every invariant holds.

    Raises
    ------
    ConfigError
        Naming the first invariant that fails.
    """
    positive = ("f_c", "delta", "T_p", "c", "d_t", "d_r")
    for name in positive:
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.T_cp < 0:
        raise ConfigError("T_cp must be non-negative")
    useful = cfg.T_p - cfg.T_cp
    if not math.isclose(useful, 1.0 / cfg.delta, rel_tol=1e-9):
        raise ConfigError(
            f"CP/symbol-duration mismatch: T_p - T_cp = {useful:g} s but 1/delta = {1.0 / cfg.delta:g} s"
        )
    for name in ("N_s", "N_p", "N_t", "N_x", "N_r", "N_c"):
        value = getattr(cfg, name)
        if int(value) != value or value < 1:
            raise ConfigError(f"{name} must be a positive integer")
    if cfg.N_x > cfg.N_t:
        raise ConfigError("N_x exceeds N_t")
    if cfg.N_s < cfg.N_x:
        raise ConfigError("N_s must be at least N_x")
    q = cfg.qam_order
    side = math.isqrt(q)
    if side * side != q or side < 2 or side & (side - 1):
        raise ConfigError("qam_order must be a square power of two (4, 16, 64, ...)")
    return cfg


def derive(cfg: SystemConfig) -> DerivedParams:
    lambda0 = cfg.c / cfg.f_c
    return DerivedParams(
        lambda0=lambda0,
        range_bin=cfg.c / (2.0 * cfg.N_s * cfg.delta),
        velocity_bin=cfg.c / (2.0 * cfg.f_c * cfg.N_p * cfg.T_p),
        max_unambiguous_range=cfg.c / (2.0 * cfg.delta),
        coarse_sine_bin=1.0 / (cfg.N_r * cfg.d_r),
    )


def validate_target(target: TargetSpec, cfg: SystemConfig) -> TargetSpec:
    if not abs(target.theta) < 90.0:
        raise ConfigError(f"target angle {target.theta} outside (-90, 90) degrees")
    r_max = derive(cfg).max_unambiguous_range
    if not 0.0 <= target.R < r_max:
        raise ConfigError(f"target range {target.R} outside [0, {r_max})")
    return target
