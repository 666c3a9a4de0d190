"""Large-scale SNR, Rayleigh fading and Shannon rates per resource block."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

RB_BANDWIDTH_HZ = 180e3
MIN_DISTANCE_M = 10.0
# Rates use log base 2 (Shannon capacity in bits/s).
RATE_LOG_BASE = 2.0


@dataclass(frozen=True)
class ChannelConfig:
    tx_power_dbm: float = 43.0
    noise_dbm: float = -80.0
    f_l_hz: float = 2.1e9
    f_u_hz: float = 5.8e9
    shadow_var: float = 3.0
    rb_bandwidth_hz: float = RB_BANDWIDTH_HZ
    m_l: int = 100
    m_u: int = 100

    def __post_init__(self):
        if self.f_l_hz <= 0 or self.f_u_hz <= 0:
            raise DomainError("carrier frequencies must be positive")
        if self.rb_bandwidth_hz <= 0:
            raise DomainError("rb_bandwidth_hz must be positive")
        if self.m_l < 1 or self.m_u < 1:
            raise DomainError("m_l and m_u must be >= 1")
        if self.shadow_var < 0:
            raise DomainError("shadow_var must be >= 0")


@dataclass(frozen=True)
class UePlacement:
    position: tuple[float, float]

    @property
    def distance(self) -> float:
        return math.hypot(*self.position)


@dataclass(frozen=True)
class SnrPair:
    snr_l_db: float
    snr_u_db: float


def fspl_db(distance, freq):
    """Free-space path loss in dB for distance in metres and frequency in Hz."""
    distance = np.asarray(distance, dtype=float)
    freq = np.asarray(freq, dtype=float)
    if np.any(distance <= 0) or np.any(freq <= 0):
        raise DomainError("distance and frequency must be positive")
    out = 20.0 * (np.log10(distance) + np.log10(freq) - 7.378)
    return float(out) if out.ndim == 0 else out


def large_scale_snr(config: ChannelConfig, distance, shadow_draw=0.0):
    """Per-carrier SNR (dB) from path loss and one shadowing draw shared by both carriers.

    Accepts scalars or arrays of distances/draws; returns an SnrPair whose fields
    have the same shape as the inputs.
    """
    snr_l = config.tx_power_dbm - fspl_db(distance, config.f_l_hz) - shadow_draw - config.noise_dbm
    snr_u = config.tx_power_dbm - fspl_db(distance, config.f_u_hz) - shadow_draw - config.noise_dbm
    return SnrPair(snr_l, snr_u)


def per_si_snr(avg_snr_db, fading_draw):
    """Apply a unit-mean exponential power gain to an average SNR in dB."""
    return np.asarray(avg_snr_db) + 10.0 * np.log10(fading_draw)


def db_to_linear(snr_db):
    return np.power(10.0, np.asarray(snr_db, dtype=float) / 10.0)


def spectral_efficiency(snr_db):
    """log2(1 + SNR) with SNR given in dB; -inf dB gives 0."""
    return np.log2(1.0 + db_to_linear(snr_db))


def rate_per_rb(snr_db, rb_bandwidth_hz=RB_BANDWIDTH_HZ):
    if np.any(np.asarray(rb_bandwidth_hz) <= 0):
        raise DomainError("bandwidth must be positive")
    out = rb_bandwidth_hz * spectral_efficiency(snr_db)
    return float(out) if np.ndim(out) == 0 else out


def qsi_average_snr(per_si_snrs, axis=0):
    """Arithmetic mean of per-SI SNR values taken in dB."""
    arr = np.asarray(per_si_snrs, dtype=float)
    if arr.size == 0 or arr.shape[axis] == 0:
        raise DomainError("cannot average an empty SNR sequence")
    out = arr.mean(axis=axis)
    return float(out) if np.ndim(out) == 0 else out


def place_ues(rng: np.random.Generator, num_ues: int, side_m: float = 2000.0, min_distance: float = MIN_DISTANCE_M):
    """Uniform positions in a square centred on the eNodeB, redrawing any closer than ``min_distance``."""
    pos = np.empty((num_ues, 2))
    filled = 0
    while filled < num_ues:
        cand = rng.uniform(-side_m / 2, side_m / 2, size=(num_ues, 2))
        cand = cand[np.hypot(cand[:, 0], cand[:, 1]) >= min_distance]
        take = min(len(cand), num_ues - filled)
        pos[filled:filled + take] = cand[:take]
        filled += take
    return pos
