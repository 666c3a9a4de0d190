"""Two-timescale simulation: quality selection per QSI, RB scheduling per SI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .channel import ChannelConfig
from .errors import DomainError, SolverError
from .quality import (
    DEFAULT_ALPHA,
    SEGMENT_SECONDS,
    UtilityInputs,
    VideoProfile,
    next_buffer_level,
    select_qualities,
    solve_p1,
)
from .scheduler import PFS_EPSILON, run_qsi_bcasp, run_qsi_pfs
from .wifi_model import (
    P_OFF_CEIL,
    P_OFF_FLOOR,
    WIFI_TX_SLOTS,
    OccupancyProcess,
    WifiParams,
    sample_qsi_p_off,
    sample_qsi_p_off_dcf,
    solve_dcf_fixed_point,
)

POLICIES = ("BCASP", "PFS_LICENSED", "PFS_LAA", "AVIS")
SI_SECONDS = 0.01


@dataclass(frozen=True)
class OccupancyConfig:
    model: str = "gaussian"  # or "dcf"
    mu: float = 0.5
    sigma2: float = 0.1
    n_min: int = 1
    n_max: int = 20
    w_min: int = 16
    max_doublings: int = 6
    mean_pkt_slots: float | None = None  # None: drawn from the slot set each QSI

    def __post_init__(self):
        if self.model not in ("gaussian", "dcf"):
            raise DomainError(f"unknown occupancy model {self.model!r}")
        if not 0.0 <= self.mu <= 1.0:
            raise DomainError(f"mu must lie in [0, 1], got {self.mu}")
        if self.sigma2 < 0:
            raise DomainError("sigma2 must be >= 0")
        if not 1 <= self.n_min <= self.n_max:
            raise DomainError("need 1 <= n_min <= n_max")
        # validates the remaining WiFi fields
        WifiParams(n=self.n_min, w_min=self.w_min, max_doublings=self.max_doublings,
                   mean_pkt_slots=self.mean_pkt_slots or WIFI_TX_SLOTS[-1])

    def mean_p_off(self) -> float:
        """Long-run mean idle probability of the per-QSI process."""
        if self.model == "gaussian":
            return self.mu
        pkts = WIFI_TX_SLOTS if self.mean_pkt_slots is None else (self.mean_pkt_slots,)
        vals = [
            solve_dcf_fixed_point(WifiParams(n, self.w_min, self.max_doublings, p)).p_off
            for n in range(self.n_min, self.n_max + 1)
            for p in pkts
        ]
        return float(np.clip(np.mean(vals), P_OFF_FLOOR, P_OFF_CEIL))


@dataclass(frozen=True)
class PlacementConfig:
    side_m: float = 2000.0
    fixed_distance_m: float | None = None  # all UEs at this distance when set

    def __post_init__(self):
        if self.side_m <= 0:
            raise DomainError("side_m must be positive")
        if self.fixed_distance_m is not None and self.fixed_distance_m < ch.MIN_DISTANCE_M:
            raise DomainError(f"fixed_distance_m must be >= {ch.MIN_DISTANCE_M}")


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    tol: float = 1e-6
    max_iter: int = 10_000

    def __post_init__(self):
        if self.rho <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise DomainError("solver settings must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    num_ues: int = 10
    num_qsis: int = 100
    sis_per_qsi: int = 1000
    policy: str = "BCASP"
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    fading: bool = True
    occupancy: OccupancyConfig = field(default_factory=OccupancyConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    video: VideoProfile = field(default_factory=VideoProfile)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.num_ues < 1:
            raise DomainError("num_ues must be >= 1")
        if self.num_qsis < 1:
            raise DomainError("num_qsis must be >= 1")
        if self.sis_per_qsi < 1:
            raise DomainError("sis_per_qsi must be >= 1")
        if self.policy not in POLICIES:
            raise DomainError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise DomainError("alpha must be finite and >= 0")

    @property
    def qsi_seconds(self) -> float:
        return self.sis_per_qsi * SI_SECONDS


@dataclass
class MetricsRecord:
    """Per (QSI, UE) observables of one run plus per-QSI solver data."""

    policy: str
    levels: np.ndarray
    quality: np.ndarray
    delivered_on_time: np.ndarray
    freeze_occurred: np.ndarray
    freeze_duration: np.ndarray
    avg_rate: np.ndarray
    delivered_bits: np.ndarray
    requested_bits: np.ndarray
    unlicensed_bits: np.ndarray
    p_off: np.ndarray
    admm_iterations: np.ndarray

    @property
    def num_qsis(self) -> int:
        return self.quality.shape[0]

    def quality_counts(self) -> np.ndarray:
        return np.array([(self.quality == lv).sum() for lv in self.levels])

    def quality_cdf(self) -> np.ndarray:
        counts = self.quality_counts()
        return np.cumsum(counts) / counts.sum()

    @property
    def mean_quality(self) -> float:
        return float(self.quality.mean())

    @property
    def freeze_probability(self) -> float:
        # no freeze is possible in the first QSI (initial buffer is full)
        f = self.freeze_occurred[1:]
        return float(f.mean()) if f.size else 0.0

    @property
    def mean_freeze_duration(self) -> float:
        d = self.freeze_duration[self.freeze_occurred]
        return float(d.mean()) if d.size else 0.0

    @property
    def mean_rate(self) -> float:
        return float(self.avg_rate.mean())

    @property
    def on_time_fraction(self) -> float:
        return float(self.delivered_on_time.mean())

    @property
    def mean_admm_iterations(self) -> float:
        it = self.admm_iterations[self.admm_iterations > 0]
        return float(it.mean()) if it.size else 0.0

    def summary(self) -> dict:
        return {
            "mean_quality_bps": self.mean_quality,
            "mean_rate_bps": self.mean_rate,
            "freeze_prob": self.freeze_probability,
            "mean_freeze_dur_s": self.mean_freeze_duration,
            "on_time_frac": self.on_time_fraction,
            "mean_admm_iters": self.mean_admm_iterations,
        }


def compute_freeze(completion_s, qsi_seconds: float = SEGMENT_SECONDS):
    """Freeze flags and durations per QSI from segment completion times.

    ``completion_s[T]`` is when the segment fetched during QSI T finished,
    measured from the start of QSI T (``inf`` if never). That segment plays in
    QSI T+1, so QSI T+1 stalls from its start until completion, at most one
    whole QSI. Entry 0 of the result never freezes.
    """
    c = np.asarray(completion_s, dtype=float)
    lateness = np.clip(c - qsi_seconds, 0.0, qsi_seconds)
    dur = np.zeros_like(c)
    dur[1:] = lateness[:-1]
    return dur > 0, dur


def avis_allocator(snr_l_db, snr_u_db, p_off_mean, cfg: ChannelConfig, profile: VideoProfile):
    """Buffer-blind quality choice from an equal share of each UE's expected capacity."""
    snr_l_db = np.atleast_1d(np.asarray(snr_l_db, dtype=float))
    snr_u_db = np.atleast_1d(np.asarray(snr_u_db, dtype=float))
    k = len(snr_l_db)
    cap = cfg.rb_bandwidth_hz * (
        cfg.m_l * ch.spectral_efficiency(snr_l_db) + p_off_mean * cfg.m_u * ch.spectral_efficiency(snr_u_db)
    )
    return select_qualities(cap / k, profile)


def _streams(seed: int):
    names = ("placement", "shadowing", "fading", "availability", "occupancy")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


class _Playout:
    """FIFO of per-UE segments still queued at the eNodeB."""

    def __init__(self, num_ues):
        # each entry: [remaining_bits, encoding_rate, qsi_index]
        self.pending = [[] for _ in range(num_ues)]

    def backlog(self):
        return np.array([sum(s[0] for s in q) for q in self.pending])

    def push(self, k, bits, rate, qsi):
        self.pending[k].append([bits, rate, qsi])

    def deliver(self, k, bits_by_si, si_seconds, qsi_seconds, qsi_index, completion):
        """Consume delivered bits in FIFO order; returns playable seconds fetched."""
        cum = np.cumsum(bits_by_si)
        used = 0.0
        seconds = 0.0
        queue = self.pending[k]
        total = cum[-1] if len(cum) else 0.0
        while queue:
            bits, rate, qsi = queue[0]
            avail = total - used
            tol = 1e-9 * max(bits, 1.0)
            if avail + tol >= bits:
                t = int(np.searchsorted(cum, used + bits - tol))
                t = min(t, len(cum) - 1)
                # measured from the start of the QSI the segment was requested in
                completion[qsi] = (qsi_index - qsi) * qsi_seconds + (t + 1) * si_seconds
                used += bits
                seconds += bits / rate
                queue.pop(0)
            else:
                queue[0][0] = bits - avail
                seconds += avail / rate
                used = total
                break
        return seconds


def run_scenario(config: ScenarioConfig) -> MetricsRecord:
    cfg = config
    k, n_qsi, n_si = cfg.num_ues, cfg.num_qsis, cfg.sis_per_qsi
    ccfg = cfg.channel
    profile = cfg.video
    levels = np.asarray(profile.encoding_rates)
    qsi_seconds = cfg.qsi_seconds
    streams = _streams(cfg.seed)

    rng_place = np.random.default_rng(streams["placement"])
    if cfg.placement.fixed_distance_m is not None:
        distance = np.full(k, float(cfg.placement.fixed_distance_m))
    else:
        pos = ch.place_ues(rng_place, k, cfg.placement.side_m)
        distance = np.hypot(pos[:, 0], pos[:, 1])
    rng_shadow = np.random.default_rng(streams["shadowing"])
    shadow = rng_shadow.normal(0.0, math.sqrt(ccfg.shadow_var), size=(n_qsi, k))
    rng_fade = np.random.default_rng(streams["fading"])
    rng_avail = np.random.default_rng(streams["availability"])
    occ_seed = int(streams["occupancy"].generate_state(1)[0])
    process = OccupancyProcess(cfg.occupancy.mu, cfg.occupancy.sigma2, occ_seed)
    p_off_mean = cfg.occupancy.mean_p_off()

    quality = np.zeros((n_qsi, k))
    avg_rate = np.zeros((n_qsi, k))
    delivered = np.zeros((n_qsi, k))
    requested = np.zeros((n_qsi, k))
    unlicensed_bits = np.zeros((n_qsi, k))
    p_off_trace = np.zeros(n_qsi)
    admm_iters = np.zeros(n_qsi, dtype=np.int64)
    completion_by_ue = np.full((k, n_qsi), np.inf)

    buffer = np.full(k, SEGMENT_SECONDS)
    playout = _Playout(k)
    report_l = report_u = None
    experienced = None
    use_unlicensed = cfg.policy != "PFS_LICENSED"

    for q in range(n_qsi):
        if cfg.occupancy.model == "gaussian":
            p_off = sample_qsi_p_off(process, q)
        else:
            o = cfg.occupancy
            p_off = sample_qsi_p_off_dcf(occ_seed, q, (o.n_min, o.n_max), o.w_min, o.max_doublings, o.mean_pkt_slots)
        p_off_trace[q] = p_off

        ls = ch.large_scale_snr(ccfg, distance, shadow[q])
        if cfg.fading:
            gains = rng_fade.exponential(1.0, size=(2, n_si, k))
            snr_l = ch.per_si_snr(ls.snr_l_db, gains[0])
            snr_u = ch.per_si_snr(ls.snr_u_db, gains[1])
        else:
            snr_l = np.broadcast_to(ls.snr_l_db, (n_si, k))
            snr_u = np.broadcast_to(ls.snr_u_db, (n_si, k))
        avail = rng_avail.random(n_si) < p_off
        if report_l is None:
            report_l, report_u = ls.snr_l_db, ls.snr_u_db

        # quality selection for this QSI
        if cfg.policy == "BCASP":
            inputs = UtilityInputs(report_l, report_u, buffer, p_off, cfg.alpha, ccfg)
            try:
                sol = solve_p1(inputs, cfg.solver.rho, cfg.solver.tol, cfg.solver.max_iter)
            except SolverError as exc:
                raise SolverError(f"QSI {q}: {exc}", exc.residual, exc.iterations) from exc
            admm_iters[q] = sol.iterations
            chosen = select_qualities(sol.rates, profile)
        elif cfg.policy == "AVIS":
            chosen = avis_allocator(report_l, report_u, p_off_mean, ccfg, profile)
        elif experienced is None:
            chosen = np.full(k, levels[0])
        else:
            chosen = select_qualities(experienced, profile)
        quality[q] = chosen

        for j in range(k):
            playout.push(j, chosen[j] * SEGMENT_SECONDS, chosen[j], q)
        q0 = playout.backlog()
        requested[q] = q0

        r_l = ccfg.rb_bandwidth_hz * ch.spectral_efficiency(snr_l)
        r_u = ccfg.rb_bandwidth_hz * ch.spectral_efficiency(snr_u)
        run_avail = avail if use_unlicensed else np.zeros(n_si, dtype=bool)
        if cfg.policy == "BCASP":
            rate_l, rate_u, backlog = run_qsi_bcasp(q0, r_l, r_u, run_avail, ccfg.m_l, ccfg.m_u)
        else:
            rate_l, rate_u, backlog = run_qsi_pfs(q0, r_l, r_u, run_avail, ccfg.m_l, ccfg.m_u, PFS_EPSILON)
        rates = rate_l + rate_u

        prev = np.vstack([q0[None, :], backlog[:-1]])
        bits_by_si = prev - backlog
        delivered[q] = q0 - backlog[-1]
        avg_rate[q] = rates.mean(axis=0)
        # bits carried on the unlicensed carrier, attributed pro rata within each SI
        with np.errstate(divide="ignore", invalid="ignore"):
            frac_u = np.where(rates > 0, rate_u / rates, 0.0)
        unlicensed_bits[q] = (bits_by_si * frac_u).sum(axis=0)

        downloaded = np.zeros(k)
        for j in range(k):
            downloaded[j] = playout.deliver(j, bits_by_si[:, j], SI_SECONDS, qsi_seconds, q, completion_by_ue[j])
            buffer[j] = next_buffer_level(buffer[j], downloaded[j])

        report_l = ch.qsi_average_snr(snr_l)
        report_u = ch.qsi_average_snr(snr_u)
        experienced = avg_rate[q]

    freeze = np.zeros((n_qsi, k), dtype=bool)
    freeze_dur = np.zeros((n_qsi, k))
    for j in range(k):
        freeze[:, j], freeze_dur[:, j] = compute_freeze(completion_by_ue[j], qsi_seconds)
    on_time = completion_by_ue.T <= qsi_seconds + 1e-9

    return MetricsRecord(
        policy=cfg.policy,
        levels=levels,
        quality=quality,
        delivered_on_time=on_time,
        freeze_occurred=freeze,
        freeze_duration=freeze_dur,
        avg_rate=avg_rate,
        delivered_bits=delivered,
        requested_bits=requested,
        unlicensed_bits=unlicensed_bits,
        p_off=p_off_trace,
        admm_iterations=admm_iters,
    )


def aggregate_metrics(records) -> dict:
    """Mean and standard error across runs for each summary metric."""
    records = list(records)
    if not records:
        raise DomainError("need at least one record")
    rows = [r.summary() if isinstance(r, MetricsRecord) else r for r in records]
    out = {}
    for key in rows[0]:
        vals = np.array([row[key] for row in rows], dtype=float)
        out[key] = float(vals.mean())
        out[key + "_stderr"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    out["n_runs"] = len(rows)
    return out
