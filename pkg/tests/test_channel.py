import numpy as np
import pytest

import oracles
from laa_stream.channel import (
    ChannelConfig,
    UePlacement,
    db_to_linear,
    fspl_db,
    large_scale_snr,
    per_si_snr,
    place_ues,
    qsi_average_snr,
    rate_per_rb,
)
from laa_stream.errors import DomainError

FSPL_1KM_2G1 = 98.88438589467839
FSPL_1KM_5G8 = 107.70855987125873
RATE_24DB = 1443252.0098908236  # 180 kHz * log2(1 + 10^2.412)


def test_fspl_examples():
    assert fspl_db(1000, 2.1e9) == pytest.approx(FSPL_1KM_2G1, abs=1e-9)
    assert fspl_db(1000, 5.8e9) == pytest.approx(FSPL_1KM_5G8, abs=1e-9)
    assert round(fspl_db(1000, 2.1e9), 2) == 98.88
    assert fspl_db(1, 2.1e10) - fspl_db(1, 2.1e9) == pytest.approx(20.0, abs=1e-12)


def test_fspl_matches_reference_on_grid():
    d = np.geomspace(10, 3000, 10)
    f = np.geomspace(7e8, 6e9, 10)
    dd, ff = np.meshgrid(d, f)
    got = fspl_db(dd.ravel(), ff.ravel())
    ref = np.array([oracles.fspl_reference(x, y) for x, y in zip(dd.ravel(), ff.ravel())])
    assert np.max(np.abs(got - ref)) <= 1e-9


@pytest.mark.parametrize("d,f", [(0, 2e9), (-5, 2e9), (100, 0)])
def test_fspl_domain(d, f):
    with pytest.raises(DomainError):
        fspl_db(d, f)


def test_large_scale_snr_examples():
    snr = large_scale_snr(ChannelConfig(), 1000.0)
    assert snr.snr_l_db == pytest.approx(24.11561410532161, abs=1e-9)
    assert snr.snr_u_db == pytest.approx(15.291440128741272, abs=1e-9)
    shadowed = large_scale_snr(ChannelConfig(), 1000.0, 3.0)
    assert snr.snr_l_db - shadowed.snr_l_db == pytest.approx(3.0, abs=1e-12)
    assert snr.snr_u_db - shadowed.snr_u_db == pytest.approx(3.0, abs=1e-12)


def test_large_scale_snr_decreasing_in_distance():
    d = np.linspace(10, 1500, 200)
    snr = large_scale_snr(ChannelConfig(), d)
    assert np.all(np.diff(snr.snr_l_db) < 0)
    assert np.all(snr.snr_l_db > snr.snr_u_db)


def test_per_si_snr():
    assert per_si_snr(20.0, 1.0) == pytest.approx(20.0)
    assert per_si_snr(20.0, 0.1) == pytest.approx(10.0)


def test_unit_mean_fading_preserves_linear_mean():
    rng = np.random.default_rng(0)
    g = rng.exponential(1.0, 100_000)
    lin = db_to_linear(per_si_snr(20.0, g))
    assert lin.mean() == pytest.approx(100.0, rel=0.02)


def test_rate_per_rb():
    assert rate_per_rb(-np.inf) == 0.0
    assert rate_per_rb(24.12, 180e3) == pytest.approx(RATE_24DB, rel=1e-12)
    assert rate_per_rb(13.0, 360e3) == pytest.approx(2 * rate_per_rb(13.0, 180e3))
    r = rate_per_rb(np.linspace(-10, 40, 100))
    assert np.all(np.diff(r) > 0)
    with pytest.raises(DomainError):
        rate_per_rb(10.0, 0.0)


def test_qsi_average():
    assert qsi_average_snr([7.0] * 5) == 7.0
    assert qsi_average_snr([10.0, 20.0]) == 15.0
    rng = np.random.default_rng(2)
    draws = 20.0 + rng.normal(0, 3, 1000)
    assert abs(qsi_average_snr(draws) - 20.0) <= 0.5
    with pytest.raises(DomainError):
        qsi_average_snr([])


def test_placement_within_square_and_exclusion():
    pos = place_ues(np.random.default_rng(5), 500, side_m=2000, min_distance=10)
    assert pos.shape == (500, 2)
    assert np.all(np.abs(pos) <= 1000)
    assert np.all(np.hypot(pos[:, 0], pos[:, 1]) >= 10)
    assert UePlacement((3.0, 4.0)).distance == 5.0


def test_config_validation():
    with pytest.raises(DomainError):
        ChannelConfig(f_l_hz=0)
    with pytest.raises(DomainError):
        ChannelConfig(m_l=0)
    cfg = ChannelConfig()
    assert (cfg.tx_power_dbm, cfg.noise_dbm, cfg.shadow_var, cfg.m_l, cfg.m_u) == (43.0, -80.0, 3.0, 100, 100)
    assert cfg.rb_bandwidth_hz == 180e3
