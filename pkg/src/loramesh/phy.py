"""LoRa physical-layer math: data rate, airtime, sensitivity, link budget,
and US 902-928 MHz regulatory checks.

All functions are pure; configuration invariants are enforced once at
RadioConfig construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

BAND_LOW_HZ = 902e6
BAND_HIGH_HZ = 928e6

VALID_BANDWIDTHS_HZ = (125_000, 250_000, 500_000)
VALID_SPREADING_FACTORS = tuple(range(7, 13))
VALID_CODING_RATES = (Fraction(4, 5), Fraction(4, 6), Fraction(4, 7), Fraction(4, 8))

MAX_TX_POWER_DBM = 30.0     # regulatory ceiling
HW_TX_POWER_DBM = 27.0      # radio + amplifier chain limit, used as default

# Demodulation SNR floor per spreading factor, dB.  Standard SX127x values;
# together with a 6 dB receiver noise figure they put SF8 at 500 kHz at
# -121 dBm sensitivity.
SNR_FLOOR_DB = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}

# Single-frequency operation in this band requires at least this occupied
# bandwidth; frequency-hopping operation requires at least this many
# channels and bounded per-channel dwell.
SINGLE_FREQ_MIN_BW_HZ = 500_000
HOPPING_MIN_CHANNELS = 25
DEFAULT_DWELL_LIMIT_S = 0.4     # per frequency, within the rolling window
DEFAULT_DWELL_WINDOW_S = 20.0   # no numeric bound is published; configurable


def _parse_coding_rate(cr) -> Fraction:
    if isinstance(cr, str):
        num, _, den = cr.partition("/")
        cr = Fraction(int(num), int(den))
    else:
        cr = Fraction(cr)
    if cr not in VALID_CODING_RATES:
        raise ValueError(f"coding_rate must be one of 4/5, 4/6, 4/7, 4/8, got {cr}")
    return cr


@dataclass(frozen=True)
class RadioConfig:
    """One LoRa operating point (frequency, bandwidth, SF, CR, power)."""

    center_freq_hz: float = 915e6
    bandwidth_hz: int = 500_000
    spreading_factor: int = 8
    coding_rate: Fraction = Fraction(4, 5)
    tx_power_dbm: float = HW_TX_POWER_DBM
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coding_rate", _parse_coding_rate(self.coding_rate))
        if not BAND_LOW_HZ <= self.center_freq_hz <= BAND_HIGH_HZ:
            raise ValueError(
                f"center_freq_hz {self.center_freq_hz} outside 902-928 MHz band")
        if self.bandwidth_hz not in VALID_BANDWIDTHS_HZ:
            raise ValueError(f"bandwidth_hz must be one of {VALID_BANDWIDTHS_HZ}")
        if self.spreading_factor not in VALID_SPREADING_FACTORS:
            raise ValueError("spreading_factor must be an integer in [7, 12]")
        if self.tx_power_dbm > MAX_TX_POWER_DBM:
            raise ValueError(f"tx_power_dbm exceeds {MAX_TX_POWER_DBM} dBm limit")
        if self.preamble_symbols < 6:
            raise ValueError("preamble_symbols must be >= 6")

    @property
    def symbol_time_s(self) -> float:
        return (1 << self.spreading_factor) / self.bandwidth_hz

    def replace(self, **kw) -> "RadioConfig":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass(frozen=True)
class ChannelPlan:
    """Ordered channel list plus the fixed neighbor-discovery frequency.

    The discovery frequency never changes under adaptation so that nodes
    that missed a reconfiguration can always be reached again.
    """

    frequencies_hz: tuple
    channel_width_hz: float = 500e3
    discovery_freq_hz: float | None = None

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies_hz)
        object.__setattr__(self, "frequencies_hz", freqs)
        if not freqs:
            raise ValueError("channel plan must contain at least one frequency")
        if len(set(freqs)) != len(freqs):
            raise ValueError("channel plan frequencies must be pairwise distinct")
        for f in freqs:
            if not BAND_LOW_HZ <= f <= BAND_HIGH_HZ:
                raise ValueError(f"plan frequency {f} outside 902-928 MHz band")
        disc = self.discovery_freq_hz
        if disc is None:
            disc = freqs[0]
            object.__setattr__(self, "discovery_freq_hz", disc)
        if disc not in freqs:
            raise ValueError("discovery_freq_hz must be a plan frequency")

    def __len__(self) -> int:
        return len(self.frequencies_hz)

    def index_of(self, freq_hz: float) -> int:
        return self.frequencies_hz.index(float(freq_hz))


def us915_plan(num_channels: int = 52, channel_width_hz: float = 500e3,
               discovery_index: int = 0) -> ChannelPlan:
    """Evenly spaced channel plan across 902-928 MHz.

    The default 52 channels of 500 kHz width tile the band exactly.
    """
    if num_channels < 1:
        raise ValueError("num_channels must be >= 1")
    span = BAND_HIGH_HZ - BAND_LOW_HZ
    if num_channels * channel_width_hz > span + 1e-6:
        raise ValueError("plan does not fit in the 902-928 MHz band")
    freqs = tuple(BAND_LOW_HZ + channel_width_hz * (i + 0.5)
                  for i in range(num_channels))
    return ChannelPlan(freqs, channel_width_hz, freqs[discovery_index])


def data_rate(cfg: RadioConfig) -> float:
    """Net link rate in bits per second: SF * (BW / 2^SF) * CR.

    Computed with exact rational arithmetic before the final float
    conversion so table values like 12500 come out exact.
    """
    sf = cfg.spreading_factor
    rate = Fraction(sf * cfg.bandwidth_hz, 1 << sf) * cfg.coding_rate
    return float(rate)


def airtime(cfg: RadioConfig, payload_bytes: int) -> float:
    """Time on air in seconds for one frame with the given payload.

    Standard LoRa symbol count: (preamble + 4.25) sync symbols plus
    8 + ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (4/CR)
    payload symbols.  Low-data-rate optimization (DE) applies only for
    SF >= 11 at 125 kHz.
    """
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    if payload_bytes > 255:
        raise ValueError(f"frame payload {payload_bytes} exceeds 255 bytes")
    sf = cfg.spreading_factor
    de = 1 if (sf >= 11 and cfg.bandwidth_hz == 125_000) else 0
    ih = 0 if cfg.explicit_header else 1
    crc = 1 if cfg.crc_on else 0
    numer = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    groups = max(0, math.ceil(numer / (4 * (sf - 2 * de))))
    symbols_per_group = int(Fraction(4, 1) / cfg.coding_rate)
    n_payload = 8 + groups * symbols_per_group
    n_total = cfg.preamble_symbols + 4.25 + n_payload
    return n_total * cfg.symbol_time_s


def sensitivity(cfg: RadioConfig, noise_figure_db: float = 6.0) -> float:
    """Receiver sensitivity in dBm: -174 + 10*log10(BW) + NF + SNR_floor(SF)."""
    if noise_figure_db < 0:
        raise ValueError("noise_figure_db must be >= 0")
    return (-174.0 + 10.0 * math.log10(cfg.bandwidth_hz)
            + noise_figure_db + SNR_FLOOR_DB[cfg.spreading_factor])


def link_margin(tx_power_dbm: float, antenna_gains_db: float,
                path_loss_db: float, sensitivity_dbm: float) -> float:
    """Margin above receiver sensitivity, dB."""
    return tx_power_dbm + antenna_gains_db - path_loss_db - sensitivity_dbm


@dataclass(frozen=True)
class FccVerdict:
    compliant: bool
    violations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))
        if self.compliant != (len(self.violations) == 0):
            raise ValueError("compliant flag must match empty violations")

    @classmethod
    def from_violations(cls, violations: Iterable[tuple]) -> "FccVerdict":
        v = tuple(violations)
        return cls(compliant=not v, violations=v)


def fcc_check(cfg: RadioConfig, plan: ChannelPlan, mode: str,
              dwell_schedule: Sequence[tuple] = (),
              dwell_limit_s: float = DEFAULT_DWELL_LIMIT_S,
              dwell_window_s: float = DEFAULT_DWELL_WINDOW_S) -> FccVerdict:
    """Check a configuration against the 902-928 MHz access rules.

    mode "single_frequency": occupied bandwidth must be >= 500 kHz and
    power within the 30 dBm limit.  Nodes may still change frequency over
    time and differ from each other.

    mode "hopping": at least 25 channels, and the cumulative on-air time
    per frequency within any rolling window (entries of dwell_schedule,
    as (frequency_hz, seconds)) must not exceed the dwell limit.
    """
    violations = []
    if cfg.tx_power_dbm > MAX_TX_POWER_DBM:
        violations.append(("power-too-high",
                           f"{cfg.tx_power_dbm} dBm exceeds {MAX_TX_POWER_DBM} dBm"))
    if mode == "single_frequency":
        if cfg.bandwidth_hz < SINGLE_FREQ_MIN_BW_HZ:
            violations.append((
                "bandwidth-too-narrow",
                f"single-frequency mode needs >= {SINGLE_FREQ_MIN_BW_HZ} Hz "
                f"occupied bandwidth, got {cfg.bandwidth_hz} Hz"))
    elif mode == "hopping":
        if len(plan) < HOPPING_MIN_CHANNELS:
            violations.append((
                "too-few-channels",
                f"hopping mode needs >= {HOPPING_MIN_CHANNELS} frequencies, "
                f"plan has {len(plan)}"))
        for freq_hz, dwell_s in dwell_schedule:
            if dwell_s > dwell_limit_s:
                violations.append((
                    "dwell-exceeded",
                    f"{freq_hz / 1e6:.3f} MHz on air {dwell_s:.3f} s within "
                    f"{dwell_window_s:.0f} s window (limit {dwell_limit_s} s)"))
    else:
        raise ValueError(f"unknown access mode {mode!r}")
    return FccVerdict.from_violations(violations)
