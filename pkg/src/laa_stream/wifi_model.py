"""Unlicensed-band occupancy: 802.11 DCF fixed point and the per-QSI idle process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError

# 802.11n short-GI physical rates (bits/s) and the matching transmission
# durations of a 1.5 KB packet in 9 us slots, as reported for the evaluation.
WIFI_PHY_RATES = (7.2e6, 14.4e6, 21.7e6, 28.9e6, 43.3e6, 57.8e6, 65.0e6, 72.2e6)
WIFI_TX_SLOTS = (186, 94, 62, 47, 32, 24, 22, 19)
WIFI_SLOT_US = 9.0
WIFI_PACKET_BYTES = 1500

P_OFF_FLOOR = 0.01
P_OFF_CEIL = 0.99


@dataclass(frozen=True)
class WifiParams:
    n: int
    w_min: int = 16
    max_doublings: int = 6
    mean_pkt_slots: float = 19.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.w_min < 2:
            raise DomainError(f"w_min must be >= 2, got {self.w_min}")
        if self.max_doublings < 0:
            raise DomainError(f"max_doublings must be >= 0, got {self.max_doublings}")
        if not (math.isfinite(self.mean_pkt_slots) and self.mean_pkt_slots > 0):
            raise DomainError(f"mean_pkt_slots must be finite and > 0, got {self.mean_pkt_slots}")


@dataclass(frozen=True)
class WifiOccupancy:
    gamma: float
    p_coll: float
    p_tx: float
    mean_idle_slots: float
    p_off: float

    @property
    def p_on(self) -> float:
        return 1.0 - self.p_off


@dataclass(frozen=True)
class OccupancyProcess:
    mu: float
    sigma2: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise DomainError(f"mu must lie in [0, 1], got {self.mu}")
        if self.sigma2 < 0:
            raise DomainError(f"sigma2 must be >= 0, got {self.sigma2}")


def estimate_p_off_from_samples(n_busy: int, n_idle: int) -> float:
    """Fraction of energy-detector samples that fell below the busy threshold."""
    if n_busy < 0 or n_idle < 0:
        raise DomainError("sample counts must be non-negative")
    total = n_busy + n_idle
    if total == 0:
        raise DomainError("no samples collected")
    return n_idle / total


def transmit_probability(p: float, w_min: int, max_doublings: int) -> float:
    """Per-slot transmit probability of a saturated station given collision probability ``p``.

    The window-growth term ``1 - (2p)^i`` is expanded as ``(1 - 2p) * sum((2p)^j)``
    and the common ``(1 - 2p)`` factor cancelled, which removes the 0/0 at p = 1/2.
    """
    growth = sum((2.0 * p) ** j for j in range(max_doublings))
    return 2.0 / ((w_min + 1) + p * w_min * growth)


def collision_probability(gamma: float, n: int) -> float:
    return 1.0 - (1.0 - gamma) ** (n - 1)


def solve_dcf_fixed_point(params: WifiParams, tol: float = 1e-12, max_iter: int = 200) -> WifiOccupancy:
    """Solve the coupled transmit/collision equations by bisection on gamma.

    The residual ``gamma - tx(coll(gamma))`` is strictly increasing on (0, 1)
    and changes sign there, so bisection always brackets the unique root.
    """
    n, w, m = params.n, params.w_min, params.max_doublings

    def residual(g):
        return g - transmit_probability(collision_probability(g, n), w, m)

    lo, hi = 0.0, 1.0
    gamma = 0.5 * (lo + hi)
    res = residual(gamma)
    for _ in range(max_iter):
        if abs(res) <= tol or hi - lo <= 1e-16:
            break
        if res < 0:
            lo = gamma
        else:
            hi = gamma
        gamma = 0.5 * (lo + hi)
        res = residual(gamma)
    if abs(res) > 1e-10:
        raise SolverError("DCF fixed point did not converge", residual=abs(res), iterations=max_iter)

    p_coll = collision_probability(gamma, n)
    p_tx = 1.0 - (1.0 - gamma) ** n
    mean_idle = 1.0 / p_tx - 1.0
    p_off = mean_idle / (mean_idle + params.mean_pkt_slots)
    return WifiOccupancy(gamma=gamma, p_coll=p_coll, p_tx=p_tx, mean_idle_slots=mean_idle, p_off=p_off)


def packet_duration_slots(pkt_bytes: float, phy_rate: float, slot_us: float = WIFI_SLOT_US) -> int:
    if pkt_bytes <= 0 or phy_rate <= 0 or slot_us <= 0:
        raise DomainError("packet size, rate and slot duration must be positive")
    return math.ceil(pkt_bytes * 8.0 / phy_rate / (slot_us * 1e-6))


def sample_qsi_p_off(process: OccupancyProcess, qsi_index: int) -> float:
    """Idle probability for one QSI: a clamped Gaussian draw keyed on (seed, qsi_index).

    With zero variance the mean is returned unclamped, so 0 and 1 stay reachable.
    """
    if process.sigma2 == 0:
        return float(process.mu)
    rng = np.random.default_rng([process.seed, qsi_index])
    draw = rng.normal(process.mu, math.sqrt(process.sigma2))
    return float(np.clip(draw, P_OFF_FLOOR, P_OFF_CEIL))


def sample_qsi_p_off_dcf(
    seed: int,
    qsi_index: int,
    n_range: tuple[int, int],
    w_min: int = 16,
    max_doublings: int = 6,
    mean_pkt_slots: float | None = None,
) -> float:
    """Idle probability for one QSI from the DCF model with a random station count.

    ``n`` is uniform on ``n_range`` (inclusive). When ``mean_pkt_slots`` is None
    the packet duration is drawn uniformly from the reported slot set.
    """
    rng = np.random.default_rng([seed, qsi_index, 1])
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    pkt = float(rng.choice(WIFI_TX_SLOTS)) if mean_pkt_slots is None else mean_pkt_slots
    occ = solve_dcf_fixed_point(WifiParams(n=n, w_min=w_min, max_doublings=max_doublings, mean_pkt_slots=pkt))
    return float(np.clip(occ.p_off, P_OFF_FLOOR, P_OFF_CEIL))
