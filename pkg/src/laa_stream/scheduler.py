"""Per-SI resource block scheduling: BCASP, PFS and the AVIS-style enforcer.

Feedback is wide-band, so every RB of a carrier has the same per-UE rate
within an SI. Ties in any argmax go to the lowest UE index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .channel import ChannelConfig, rate_per_rb

SIS_PER_SECOND = 100.0
PFS_EPSILON = 1.0  # bits/s, average-rate seed before a UE has been served


@dataclass(frozen=True)
class SiChannelView:
    snr_l_db: np.ndarray
    snr_u_db: np.ndarray
    a_u: int

    def __post_init__(self):
        if self.a_u not in (0, 1):
            raise ValueError("a_u must be 0 or 1")


@dataclass
class RateHistory:
    """Running sum of per-SI rates; the average before any SI is PFS_EPSILON."""

    rate_sum: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, num_ues: int) -> "RateHistory":
        return cls(np.zeros(num_ues), 0)

    def average(self) -> np.ndarray:
        if self.count == 0:
            return np.full(len(self.rate_sum), PFS_EPSILON)
        return np.maximum(self.rate_sum / self.count, PFS_EPSILON)

    def record(self, per_ue_rate) -> None:
        self.rate_sum = self.rate_sum + np.asarray(per_ue_rate, dtype=float)
        self.count += 1


@dataclass(frozen=True)
class ScheduleDecision:
    assignment: np.ndarray  # UE index per RB, licensed RBs first; -1 = not scheduled
    per_ue_rate: np.ndarray
    num_licensed: int

    @property
    def per_ue_bits(self) -> np.ndarray:
        return self.per_ue_rate / SIS_PER_SECOND


@njit(cache=True)
def _bcasp_si(queue, r_l, r_u, m_l, m_u, a_u, assign, rate_l_out, rate_u_out):
    """One SI of BCASP. Mutates ``queue`` (bits) and fills ``assign`` and the rate outputs."""
    k = queue.shape[0]
    rr = 0
    total = m_l + (m_u if a_u else 0)
    for m in range(total):
        licensed = m < m_l
        best = -1
        best_val = 0.0
        for j in range(k):
            r = r_l[j] if licensed else r_u[j]
            v = queue[j] * r
            if v > best_val:
                best_val = v
                best = j
        if best < 0:
            # all backlogs empty: filler RBs cycle through the UEs
            best = rr % k
            rr += 1
        r = r_l[best] if licensed else r_u[best]
        assign[m] = best
        if licensed:
            rate_l_out[best] += r
        else:
            rate_u_out[best] += r
        q = queue[best] - r / 100.0
        queue[best] = q if q > 0.0 else 0.0


@njit(cache=True)
def _pfs_si(avg, r_l, r_u, m_l, m_u, a_u, assign, rate_l_out, rate_u_out):
    k = avg.shape[0]
    best_l = 0
    best_u = 0
    for j in range(1, k):
        if r_l[j] / avg[j] > r_l[best_l] / avg[best_l]:
            best_l = j
        if r_u[j] / avg[j] > r_u[best_u] / avg[best_u]:
            best_u = j
    for m in range(m_l):
        assign[m] = best_l
    rate_l_out[best_l] += m_l * r_l[best_l]
    if a_u:
        for m in range(m_u):
            assign[m_l + m] = best_u
        rate_u_out[best_u] += m_u * r_u[best_u]


def _per_rb_rates(view: SiChannelView, cfg: ChannelConfig):
    r_l = np.atleast_1d(rate_per_rb(view.snr_l_db, cfg.rb_bandwidth_hz)).astype(float)
    r_u = np.atleast_1d(rate_per_rb(view.snr_u_db, cfg.rb_bandwidth_hz)).astype(float)
    return r_l, r_u


def schedule_bcasp(view: SiChannelView, queues, cfg: ChannelConfig) -> tuple[ScheduleDecision, np.ndarray]:
    """Assign every RB to argmax backlog x rate, draining the winner's backlog as it goes.

    Returns the decision and the backlog left after this SI.
    """
    r_l, r_u = _per_rb_rates(view, cfg)
    q = np.array(queues, dtype=float)
    assign = np.full(cfg.m_l + cfg.m_u, -1, dtype=np.int64)
    rate_l, rate_u = np.zeros(len(q)), np.zeros(len(q))
    _bcasp_si(q, r_l, r_u, cfg.m_l, cfg.m_u, view.a_u, assign, rate_l, rate_u)
    return ScheduleDecision(assign, rate_l + rate_u, cfg.m_l), q


def schedule_pfs(view: SiChannelView, history: RateHistory, cfg: ChannelConfig, update: bool = True) -> ScheduleDecision:
    """Assign every RB to argmax instantaneous rate / average rate; then record the SI."""
    r_l, r_u = _per_rb_rates(view, cfg)
    assign = np.full(cfg.m_l + cfg.m_u, -1, dtype=np.int64)
    rate_l, rate_u = np.zeros(len(r_l)), np.zeros(len(r_l))
    _pfs_si(history.average(), r_l, r_u, cfg.m_l, cfg.m_u, view.a_u, assign, rate_l, rate_u)
    rate = rate_l + rate_u
    if update:
        history.record(rate)
    return ScheduleDecision(assign, rate, cfg.m_l)


def schedule_avis(view: SiChannelView, queues, history: RateHistory, cfg: ChannelConfig) -> ScheduleDecision:
    """AVIS-style enforcer: the PFS allocation, queue-blind."""
    return schedule_pfs(view, history, cfg)


def drain_queues(decision: ScheduleDecision, queues) -> np.ndarray:
    return np.maximum(np.asarray(queues, dtype=float) - decision.per_ue_bits, 0.0)


# -- whole-QSI kernels used by the simulation loop -------------------------


@njit(cache=True)
def run_qsi_bcasp(queue, r_l, r_u, avail, m_l, m_u):
    """Run all SIs of a QSI under BCASP.

    ``r_l``/``r_u`` are (SIs, K) per-RB rates, ``avail`` the per-SI a_u.
    Returns (licensed rate, unlicensed rate, backlog after the SI), each (SIs, K).
    """
    n_si, k = r_l.shape
    rate_l = np.zeros((n_si, k))
    rate_u = np.zeros((n_si, k))
    backlog = np.zeros((n_si, k))
    assign = np.empty(m_l + m_u, dtype=np.int64)
    q = queue.copy()
    for t in range(n_si):
        _bcasp_si(q, r_l[t], r_u[t], m_l, m_u, avail[t], assign, rate_l[t], rate_u[t])
        backlog[t] = q
    return rate_l, rate_u, backlog


@njit(cache=True)
def run_qsi_pfs(queue, r_l, r_u, avail, m_l, m_u, eps):
    """Run all SIs of a QSI under PFS with the average rate restarted at the QSI start."""
    n_si, k = r_l.shape
    rate_l = np.zeros((n_si, k))
    rate_u = np.zeros((n_si, k))
    backlog = np.zeros((n_si, k))
    assign = np.empty(m_l + m_u, dtype=np.int64)
    rate_sum = np.zeros(k)
    avg = np.full(k, eps)
    q = queue.copy()
    for t in range(n_si):
        _pfs_si(avg, r_l[t], r_u[t], m_l, m_u, avail[t], assign, rate_l[t], rate_u[t])
        for j in range(k):
            r = rate_l[t, j] + rate_u[t, j]
            q[j] = max(q[j] - r / 100.0, 0.0)
            rate_sum[j] += r
            avg[j] = max(rate_sum[j] / (t + 1), eps)
        backlog[t] = q
    return rate_l, rate_u, backlog
