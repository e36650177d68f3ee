"""Link-math tests.

Expected airtime values are frozen from an independent symbol-count
oracle (_airtime_oracle below) evaluated by hand for the fixed cases;
data-rate table values are the published link-test figures.
"""

import math

import pytest

from loramesh import phy
from loramesh.phy import ChannelPlan, RadioConfig, us915_plan


def cfg(**kw) -> RadioConfig:
    return RadioConfig(**kw)


# -- construction invariants ---------------------------------------------------

def test_rejects_out_of_band_frequency():
    with pytest.raises(ValueError):
        cfg(center_freq_hz=868e6)


def test_rejects_power_above_limit():
    with pytest.raises(ValueError):
        cfg(tx_power_dbm=30.5)


def test_rejects_bad_bandwidth_sf_cr():
    with pytest.raises(ValueError):
        cfg(bandwidth_hz=200_000)
    with pytest.raises(ValueError):
        cfg(spreading_factor=6)
    with pytest.raises(ValueError):
        cfg(coding_rate="4/9")


def test_plan_requires_discovery_in_plan():
    with pytest.raises(ValueError):
        ChannelPlan((903e6, 904e6), discovery_freq_hz=905e6)


def test_default_plan_has_52_distinct_channels():
    plan = us915_plan()
    assert len(plan) == 52
    assert len(set(plan.frequencies_hz)) == 52
    assert all(902e6 <= f <= 928e6 for f in plan.frequencies_hz)
    assert plan.discovery_freq_hz in plan.frequencies_hz


# -- data rate -----------------------------------------------------------------

@pytest.mark.parametrize("bw,sf,cr,expected", [
    (500_000, 8, "4/5", 12500.0),          # published table value 12.5 kbps
    (250_000, 8, "4/6", 5208.333333333333),  # published 5.208 kbps
    (500_000, 7, "4/5", 21875.0),          # published 21.875 kbps
    (125_000, 12, "4/8", 183.10546875),    # hand evaluation of the formula
])
def test_data_rate_table(bw, sf, cr, expected):
    c = cfg(bandwidth_hz=bw, spreading_factor=sf, coding_rate=cr)
    assert phy.data_rate(c) == pytest.approx(expected, abs=1.0)


def test_data_rate_monotone_in_bw_and_cr_decreasing_in_sf():
    base = phy.data_rate(cfg())
    assert phy.data_rate(cfg(bandwidth_hz=250_000)) < base
    assert phy.data_rate(cfg(coding_rate="4/6")) < base
    for sf in range(7, 12):
        faster = phy.data_rate(cfg(spreading_factor=sf))
        slower = phy.data_rate(cfg(spreading_factor=sf + 1))
        assert slower < faster


# -- airtime --------------------------------------------------------------------

def _airtime_oracle(bw, sf, cr_den, preamble, payload, crc=True, explicit=True,
                    ldro=False):
    """Independent symbol-count evaluation, kept deliberately naive."""
    de = 1 if ldro else 0
    ih = 0 if explicit else 1
    numer = 8 * payload - 4 * sf + 28 + (16 if crc else 0) - 20 * ih
    groups = max(0, math.ceil(numer / (4 * (sf - 2 * de))))
    n_payload = 8 + groups * cr_den
    return (preamble + 4.25 + n_payload) * (2 ** sf) / bw


def test_airtime_20_byte_reference():
    # oracle: groups=ceil(172/32)=6 -> 38 payload symbols -> 50.25 total
    assert _airtime_oracle(500e3, 8, 5, 8, 20) == pytest.approx(25.728e-3)
    assert phy.airtime(cfg(), 20) == pytest.approx(25.728e-3, abs=1e-9)


def test_airtime_empty_payload():
    # oracle: groups=ceil(12/32)=1 -> 13 payload symbols -> 25.25 total
    assert _airtime_oracle(500e3, 8, 5, 8, 0) == pytest.approx(12.928e-3)
    assert phy.airtime(cfg(), 0) == pytest.approx(12.928e-3, abs=1e-9)


def test_airtime_halves_when_bandwidth_doubles():
    for payload in (0, 20, 100, 255):
        slow = phy.airtime(cfg(bandwidth_hz=250_000), payload)
        fast = phy.airtime(cfg(bandwidth_hz=500_000), payload)
        assert slow / fast == pytest.approx(2.0)


def test_airtime_monotone_in_payload():
    c = cfg()
    times = [phy.airtime(c, n) for n in range(0, 256)]
    assert all(t1 >= t0 for t0, t1 in zip(times, times[1:]))


def test_airtime_matches_oracle_across_grid():
    for bw in (125_000, 250_000, 500_000):
        for sf in (7, 8, 10, 12):
            for den in (5, 8):
                for payload in (0, 1, 16, 64, 255):
                    c = cfg(bandwidth_hz=bw, spreading_factor=sf,
                            coding_rate=f"4/{den}")
                    ldro = sf >= 11 and bw == 125_000
                    assert phy.airtime(c, payload) == pytest.approx(
                        _airtime_oracle(bw, sf, den, 8, payload, ldro=ldro),
                        rel=1e-12)


def test_airtime_rejects_oversize_frames():
    with pytest.raises(ValueError):
        phy.airtime(cfg(), 256)


# -- sensitivity ----------------------------------------------------------------

def test_sensitivity_anchor_sf8_500k():
    assert phy.sensitivity(cfg(), 6.0) == pytest.approx(-121.0, abs=0.1)


def test_sensitivity_derived_points():
    assert phy.sensitivity(cfg(bandwidth_hz=125_000, spreading_factor=7), 6.0) \
        == pytest.approx(-124.5, abs=0.05)
    assert phy.sensitivity(cfg(spreading_factor=7), 6.0) \
        == pytest.approx(-118.5, abs=0.05)


def test_sensitivity_improves_3db_per_halved_bandwidth():
    for sf in range(7, 13):
        wide = phy.sensitivity(cfg(bandwidth_hz=500_000, spreading_factor=sf))
        narrow = phy.sensitivity(cfg(bandwidth_hz=250_000, spreading_factor=sf))
        assert wide - narrow == pytest.approx(10 * math.log10(2), abs=1e-9)


# -- link margin -----------------------------------------------------------------

@pytest.mark.parametrize("tx,g,pl,sens,expected", [
    (27, 0, 148, -121, 0.0),
    (27, 3, 120, -121, 31.0),
    (19, 0, 141, -121, -1.0),
])
def test_link_margin(tx, g, pl, sens, expected):
    assert phy.link_margin(tx, g, pl, sens) == pytest.approx(expected)


# -- regulatory checks -------------------------------------------------------------

def test_single_frequency_500k_compliant():
    verdict = phy.fcc_check(cfg(), us915_plan(), "single_frequency")
    assert verdict.compliant and not verdict.violations


def test_single_frequency_narrow_bw_violation():
    verdict = phy.fcc_check(cfg(bandwidth_hz=125_000), us915_plan(),
                            "single_frequency")
    assert not verdict.compliant
    assert [v[0] for v in verdict.violations] == ["bandwidth-too-narrow"]


def test_hopping_needs_25_channels():
    verdict = phy.fcc_check(cfg(), us915_plan(24), "hopping")
    assert [v[0] for v in verdict.violations] == ["too-few-channels"]
    assert phy.fcc_check(cfg(), us915_plan(25), "hopping").compliant


def test_hopping_dwell_limit():
    plan = us915_plan(26)
    sched = [(plan.frequencies_hz[0], 0.39), (plan.frequencies_hz[1], 0.41)]
    verdict = phy.fcc_check(cfg(), plan, "hopping", dwell_schedule=sched)
    assert [v[0] for v in verdict.violations] == ["dwell-exceeded"]


def test_verdict_flag_must_match_violations():
    with pytest.raises(ValueError):
        phy.FccVerdict(compliant=True, violations=(("x", "y"),))
