"""Per-QSI quality selection: buffer dynamics, the ADMM rate allocation and level mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelConfig, spectral_efficiency
from .errors import DomainError, SolverError

SEGMENT_SECONDS = 10.0
# Table of recommended bitrates for 360p..2160p, in bits/s.
DEFAULT_ENCODING_RATES = (1.0e6, 2.5e6, 5.0e6, 8.0e6, 10.0e6, 35.0e6)
DEFAULT_ALPHA = 1e6


@dataclass(frozen=True)
class VideoProfile:
    encoding_rates: tuple[float, ...] = DEFAULT_ENCODING_RATES
    segment_duration: float = SEGMENT_SECONDS

    def __post_init__(self):
        rates = tuple(float(r) for r in self.encoding_rates)
        if not rates:
            raise DomainError("encoding_rates must be non-empty")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise DomainError("encoding_rates must be strictly increasing")
        if rates[0] <= 0:
            raise DomainError("encoding rates must be positive")
        object.__setattr__(self, "encoding_rates", rates)

    @property
    def num_levels(self) -> int:
        return len(self.encoding_rates)


@dataclass(frozen=True)
class BufferState:
    seconds_buffered: float = SEGMENT_SECONDS
    pending_segment_bits: float = 0.0
    freeze_active: bool = False
    freeze_elapsed: float = 0.0


def _buffer_full(b: float) -> bool:
    return abs(b - SEGMENT_SECONDS) <= 1e-9


def next_buffer_level(buffered: float, downloaded: float) -> float:
    """Seconds of video buffered at the next QSI.

    ``downloaded`` is the seconds of playable video fetched during this QSI.
    A full buffer means the previous segment arrived on time and is handed to
    playback, so the new level is just what was fetched. Otherwise the late
    segment either completed this QSI (consume 10 s) or still has not.
    """
    if downloaded < 0:
        raise DomainError(f"downloaded duration must be >= 0, got {downloaded}")
    if _buffer_full(buffered):
        return downloaded
    total = buffered + downloaded
    if total < SEGMENT_SECONDS:
        return total
    return total - SEGMENT_SECONDS


def update_buffer(state: BufferState, downloaded_duration: float) -> BufferState:
    b_next = next_buffer_level(state.seconds_buffered, downloaded_duration)
    freeze = not _buffer_full(b_next)
    return replace(
        state,
        seconds_buffered=b_next,
        freeze_active=freeze,
        freeze_elapsed=state.freeze_elapsed if freeze else 0.0,
    )


@dataclass(frozen=True)
class UtilityInputs:
    snr_l_db: np.ndarray
    snr_u_db: np.ndarray
    buffer: np.ndarray
    p_off: float
    alpha: float = DEFAULT_ALPHA
    channel_cfg: ChannelConfig = field(default_factory=ChannelConfig)

    def __post_init__(self):
        for name in ("snr_l_db", "snr_u_db", "buffer"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        k = len(self.snr_l_db)
        if len(self.snr_u_db) != k or len(self.buffer) != k:
            raise DomainError("per-UE inputs must have equal length")
        if not 0.0 <= self.p_off <= 1.0:
            raise DomainError(f"p_off must lie in [0, 1], got {self.p_off}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise DomainError(f"alpha must be finite and >= 0, got {self.alpha}")

    @property
    def num_ues(self) -> int:
        return len(self.snr_l_db)

    def licensed_capacity(self) -> np.ndarray:
        """Rate each UE would get with the whole licensed carrier (bits/s)."""
        cfg = self.channel_cfg
        return cfg.m_l * cfg.rb_bandwidth_hz * spectral_efficiency(self.snr_l_db)

    def unlicensed_capacity(self) -> np.ndarray:
        """Expected rate with the whole unlicensed carrier, weighted by the idle probability."""
        cfg = self.channel_cfg
        return self.p_off * cfg.m_u * cfg.rb_bandwidth_hz * spectral_efficiency(self.snr_u_db)


def achievable_rate(x_l, x_u, inputs: UtilityInputs, ue=None):
    """Expected download rate for the given carrier fractions (bits/s)."""
    x_l = np.asarray(x_l, dtype=float)
    x_u = np.asarray(x_u, dtype=float)
    if np.any((x_l < 0) | (x_l > 1) | (x_u < 0) | (x_u > 1)):
        raise DomainError("fractions must lie in [0, 1]")
    a, b = inputs.licensed_capacity(), inputs.unlicensed_capacity()
    if ue is not None:
        a, b = a[ue], b[ue]
    out = x_l * a + x_u * b
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AllocationSolution:
    x_l: np.ndarray
    x_u: np.ndarray
    lam: float
    mu_mult: float
    rho: float
    iterations: int
    rates: np.ndarray
    utility: float
    primal_residual: float
    dual_residual: float


def _block_argmax(coef, offset, mult, rho):
    """Exact maximiser over x in [0,1]^K of
    sum(log(coef*x + offset)) - mult*(sum(x) - 1) - rho/2*(sum(x) - 1)^2.

    For a common slope nu = mult + rho*(s - 1) each coordinate solves
    coef/(coef*x + offset) = nu in closed form, clipped to the box; the
    consistency s = sum(x(nu)) is a monotone scalar equation in nu.
    """
    active = coef > 0

    def x_of(nu):
        x = np.zeros_like(coef)
        if nu <= 0:
            x[active] = 1.0
        else:
            x[active] = np.clip(1.0 / nu - offset[active] / coef[active], 0.0, 1.0)
        return x

    def gap(nu):
        return nu - mult - rho * (x_of(nu).sum() - 1.0)

    k_active = int(active.sum())
    lo, hi = mult - rho, mult + rho * (k_active - 1)
    if gap(lo) >= 0:
        return x_of(lo)
    if gap(hi) <= 0:
        return x_of(hi)
    nu = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x_of(nu)


def _projected_gradient(x, grad):
    g = grad.copy()
    g[(x <= 0) & (g < 0)] = 0.0
    g[(x >= 1) & (g > 0)] = 0.0
    return g


def _split_ues(x_l, x_u, eps=1e-9):
    inner = lambda v: (v > eps) & (v < 1.0 - eps)
    return np.flatnonzero(inner(x_l) & inner(x_u))


def _price_response(a, b, c, lam, mu, pivot):
    """Unlicensed fractions implied by the multipliers when only ``pivot`` may use both carriers.

    Every other UE fills its cheaper carrier (price lam/a vs mu/b per unit rate)
    up to where the marginal utility meets the price, spilling onto the other
    carrier only once the first is exhausted. The pivot takes what is left.
    """
    k = len(a)
    x = np.zeros(k)
    y = np.zeros(k)
    theta = lam / mu
    for j in range(k):
        if j == pivot:
            continue
        if b[j] <= 0 or a[j] / b[j] >= theta:
            x[j] = min(max((a[j] / lam - c[j]) / a[j], 0.0), 1.0)
            if x[j] >= 1.0 and b[j] > 0:
                y[j] = min(max((b[j] / mu - a[j] - c[j]) / b[j], 0.0), 1.0)
        else:
            y[j] = min(max((b[j] / mu - c[j]) / b[j], 0.0), 1.0)
            if y[j] >= 1.0 and a[j] > 0:
                x[j] = min(max((a[j] / lam - b[j] - c[j]) / a[j], 0.0), 1.0)
    y[pivot] = min(max(1.0 - y.sum(), 0.0), 1.0)
    return y


def solve_p1(
    inputs: UtilityInputs,
    rho: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    stall_window: int = 20,
) -> AllocationSolution:
    """Maximise sum(log(R_k + alpha*B_k)) over licensed/unlicensed fractions with ADMM.

    Each iteration maximises the augmented Lagrangian exactly over the licensed
    block, then the unlicensed block, then takes a multiplier step per
    constraint. Stops once both simplex residuals and the projected gradient
    of the Lagrangian are within ``tol``.

    When two UEs have nearly equal licensed/unlicensed rate ratios the
    alternating blocks crawl along an almost flat ridge. If the constraints
    have been met for ``stall_window`` iterations without stationarity and
    more than one UE is split across both carriers, the unlicensed block is
    restarted from the split implied by the current multipliers. At most K
    such restarts are made, so the plain iteration always has the last word.
    """
    if rho <= 0:
        raise DomainError("rho must be positive")
    k = inputs.num_ues
    if k < 1:
        raise DomainError("need at least one UE")
    a = inputs.licensed_capacity()
    b = inputs.unlicensed_capacity()
    c = inputs.alpha * inputs.buffer
    if not np.any(a > 0):
        raise DomainError("all licensed rate coefficients are zero")
    # Work in Mbit/s; the optimiser is invariant to a common scale of a, b, c.
    scale = 1e-6
    a, b, c = a * scale, b * scale, c * scale
    has_u = bool(np.any(b > 0))

    x_l = np.full(k, 1.0 / k)
    x_u = np.full(k, 1.0 / k)
    lam = mu = 0.0
    primal = dual = math.inf
    stalled = restarts = 0
    it = 0
    while it < max_iter:
        it += 1
        x_l = _block_argmax(a, b * x_u + c, lam, rho)
        x_u = _block_argmax(b, a * x_l + c, mu, rho) if has_u else _spread(x_u)
        r_l = x_l.sum() - 1.0
        r_u = x_u.sum() - 1.0
        lam += rho * r_l
        mu += rho * r_u

        total = a * x_l + b * x_u + c
        with np.errstate(divide="ignore"):
            inv = np.where(total > 0, 1.0 / total, np.inf)
        g_l = _projected_gradient(x_l, a * inv - lam)
        g_u = _projected_gradient(x_u, b * inv - mu) if has_u else np.zeros(k)
        primal = max(abs(r_l), abs(r_u))
        dual = float(max(np.abs(g_l).max(), np.abs(g_u).max()))
        if primal <= tol and dual <= tol:
            break

        stalled = stalled + 1 if primal <= tol else 0
        if stalled >= stall_window and restarts < k and has_u and lam > 0 and mu > 0:
            split = _split_ues(x_l, x_u)
            if len(split) > 1:
                ratio = a[split] / b[split]
                pivot = split[np.argmin(np.abs(np.log(ratio * mu / lam)))]
                x_u = _price_response(a, b, c, lam, mu, pivot)
                restarts += 1
            stalled = 0
    else:
        raise SolverError(
            f"ADMM did not converge in {max_iter} iterations "
            f"(primal residual {primal:.3g}, dual residual {dual:.3g})",
            residual=max(primal, dual),
            iterations=it,
        )

    rates = (a * x_l + b * x_u) / scale
    utility = float(np.sum(np.log(rates + inputs.alpha * inputs.buffer)))
    return AllocationSolution(
        x_l=x_l,
        x_u=x_u,
        lam=lam,
        mu_mult=mu,
        rho=rho,
        iterations=it,
        rates=rates,
        utility=utility,
        primal_residual=primal,
        dual_residual=dual,
    )


def _spread(x):
    # With no usable unlicensed capacity the fractions are irrelevant; keep them feasible.
    return np.full_like(x, 1.0 / len(x))


def select_quality(rate: float, profile: VideoProfile) -> float:
    """Highest encoding rate not above ``rate``; the lowest level when none fits."""
    levels = profile.encoding_rates
    idx = np.searchsorted(levels, rate, side="right") - 1
    return levels[max(int(idx), 0)]


def select_qualities(rates, profile: VideoProfile) -> np.ndarray:
    levels = np.asarray(profile.encoding_rates)
    idx = np.searchsorted(levels, np.asarray(rates, dtype=float), side="right") - 1
    return levels[np.maximum(idx, 0)]


def segment_bits(encoding_rate: float, duration: float = SEGMENT_SECONDS) -> float:
    if encoding_rate <= 0:
        raise DomainError("encoding rate must be positive")
    return encoding_rate * duration
