"""Urban radio propagation model.

Log-distance path loss with per-link shadowing, two-component fading
(a static frequency-selective gain per link-frequency pair plus Rician
block fading resampled every metric interval), external interferer on/off
processes, thermal-plus-interference noise floor, and SNR-threshold
probabilistic packet reception.

Everything is a pure function of (scenario seed, entity keys, time), so
two queries with the same arguments always agree, regardless of order.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from . import rng
from .phy import SNR_FLOOR_DB, BAND_LOW_HZ, BAND_HIGH_HZ, RadioConfig

METRIC_INTERVAL_S = 10.0    # link metrics and block fading share this grid


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss with optional log-normal shadowing."""

    pl0_db: float = 40.0
    d0_m: float = 1.0
    exponent: float = 2.7
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        if not 1.6 <= self.exponent <= 6.5:
            raise ValueError("path-loss exponent outside plausible range [1.6, 6.5]")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.d0_m <= 0:
            raise ValueError("reference distance must be positive")


def path_loss(model: PathLossModel, distance_m: float, shadow_db: float = 0.0) -> float:
    """Path loss in dB at the given distance, plus a per-link shadowing term."""
    if distance_m < model.d0_m:
        raise ValueError(f"distance {distance_m} m below reference {model.d0_m} m")
    return (model.pl0_db
            + 10.0 * model.exponent * math.log10(distance_m / model.d0_m)
            + shadow_db)


def thermal_noise_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def power_sum_dbm(levels_dbm) -> float:
    """Sum powers expressed in dBm (linear-domain addition)."""
    total_mw = sum(10.0 ** (x / 10.0) for x in levels_dbm)
    return 10.0 * math.log10(total_mw)


INTERFERER_KINDS = ("narrowband_fixed", "wideband", "hopping")


@dataclass(frozen=True)
class InterfererSpec:
    """External interferer archetype.

    narrowband_fixed and wideband occupy band_hz continuously while on;
    hopping re-centers a hop_width_hz sub-band inside band_hz each burst.
    power_dbm is the interference power received at any victim.
    """

    kind: str
    band_hz: tuple
    power_dbm: float
    on_fraction: float = 0.5
    mean_burst_s: float = 2.0
    hop_width_hz: float = 200e3

    def __post_init__(self):
        object.__setattr__(self, "band_hz", tuple(float(x) for x in self.band_hz))
        if self.kind not in INTERFERER_KINDS:
            raise ValueError(f"interferer kind must be one of {INTERFERER_KINDS}")
        lo, hi = self.band_hz
        if not (BAND_LOW_HZ <= lo < hi <= BAND_HIGH_HZ):
            raise ValueError("interferer band must lie within 902-928 MHz")
        if self.power_dbm < -130.0:
            raise ValueError("interferer power below -130 dBm is not modeled")
        if not 0.0 < self.on_fraction <= 1.0:
            raise ValueError("on_fraction must be in (0, 1]")
        if self.mean_burst_s <= 0:
            raise ValueError("mean_burst_s must be positive")


class InterfererProcess:
    """Pre-generated on/off timeline for one interferer.

    Two-state Markov process with exponential holding times; the whole
    timeline for the scenario duration is generated up front so that
    queries are deterministic regardless of order.
    """

    def __init__(self, spec: InterfererSpec, seed: int, index: int, duration_s: float):
        self.spec = spec
        stream = rng.KeyedStream(seed, rng.STREAM_INTERFERER, index)
        mean_on = spec.mean_burst_s
        f = spec.on_fraction
        mean_off = mean_on * (1.0 - f) / f if f < 1.0 else 0.0
        bursts = []   # (t_start, t_end, band_lo, band_hi)
        t = 0.0
        on = stream.uniform() < f
        while t < duration_s:
            if on:
                dur = stream.exponential(mean_on)
                band = self._burst_band(stream)
                bursts.append((t, t + dur, band[0], band[1]))
            else:
                dur = stream.exponential(mean_off) if mean_off > 0 else 0.0
            t += dur
            on = not on
        self._starts = [b[0] for b in bursts]
        self._bursts = bursts

    def _burst_band(self, stream: rng.KeyedStream) -> tuple:
        lo, hi = self.spec.band_hz
        if self.spec.kind != "hopping":
            return (lo, hi)
        width = min(self.spec.hop_width_hz, hi - lo)
        center = stream.uniform(lo + width / 2, hi - width / 2)
        return (center - width / 2, center + width / 2)

    def active_band(self, t: float):
        """Occupied band at time t, or None when the interferer is off."""
        i = bisect_right(self._starts, t) - 1
        if i < 0:
            return None
        b = self._bursts[i]
        if b[0] <= t < b[1]:
            return (b[2], b[3])
        return None

    def power_into(self, freq_lo: float, freq_hi: float, t: float):
        """Received power if the burst band overlaps the victim band."""
        band = self.active_band(t)
        if band is None or band[1] <= freq_lo or band[0] >= freq_hi:
            return None
        return self.spec.power_dbm


@dataclass(frozen=True)
class FadingParams:
    """Two-component fading: static per-(link, frequency) gain drawn once
    from Normal(0, static_sigma_db), plus per-interval Rician block fading
    with the given K-factor.  k_factor_db None selects Rayleigh."""

    static_sigma_db: float = 4.0
    k_factor_db: float | None = 6.0
    block_interval_s: float = METRIC_INTERVAL_S
    enabled: bool = True


class Channel:
    """Immutable propagation state for one scenario.

    Nodes are registered once with their positions; all sampling methods
    are then pure functions of (link, frequency index, time).
    """

    def __init__(self, cfg: RadioConfig, plan_freqs, path_loss_model: PathLossModel,
                 fading: FadingParams | None = None, noise_figure_db: float = 6.0,
                 interferers=(), seed: int = 0, duration_s: float = 3600.0,
                 antenna_gains_db: float = 0.0, reception_width_db: float = 1.0):
        self.cfg = cfg
        self.freqs = tuple(float(f) for f in plan_freqs)
        self.model = path_loss_model
        self.fading = fading or FadingParams()
        self.noise_figure_db = noise_figure_db
        self.antenna_gains_db = antenna_gains_db
        self.reception_width_db = reception_width_db
        self.seed = seed
        self._thermal_dbm = thermal_noise_dbm(cfg.bandwidth_hz, noise_figure_db)
        self._positions: dict[int, tuple] = {}
        self._shadow_cache: dict[tuple, float] = {}
        self._blocked: set[tuple] = set()
        self.interferers = [InterfererProcess(s, seed, i, duration_s)
                            for i, s in enumerate(interferers)]

    # -- topology ---------------------------------------------------------

    def set_nodes(self, positions: dict) -> None:
        self._positions = {int(k): (float(v[0]), float(v[1]))
                           for k, v in positions.items()}
        self._shadow_cache.clear()

    def distance(self, a: int, b: int) -> float:
        xa, ya = self._positions[a]
        xb, yb = self._positions[b]
        return math.hypot(xb - xa, yb - ya)

    def set_link_blocked(self, a: int, b: int, blocked: bool) -> None:
        """Fault injection: a blocked link passes no signal either way."""
        key = (min(a, b), max(a, b))
        if blocked:
            self._blocked.add(key)
        else:
            self._blocked.discard(key)

    def link_blocked(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._blocked

    # -- propagation terms --------------------------------------------------

    def shadowing_db(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key not in self._shadow_cache:
            sigma = self.model.shadowing_sigma_db
            val = 0.0
            if sigma > 0:
                val = rng.keyed_normal(self.seed, rng.STREAM_SHADOWING, *key,
                                       sigma=sigma)
            self._shadow_cache[key] = val
        return self._shadow_cache[key]

    def static_fading_db(self, a: int, b: int, freq_idx: int) -> float:
        if not self.fading.enabled or self.fading.static_sigma_db <= 0:
            return 0.0
        key = (min(a, b), max(a, b))
        return rng.keyed_normal(self.seed, rng.STREAM_FADING_STATIC, *key, freq_idx,
                                sigma=self.fading.static_sigma_db)

    def block_fading_db(self, a: int, b: int, freq_idx: int, interval: int) -> float:
        """Rician power gain for one metric interval, in dB."""
        if not self.fading.enabled:
            return 0.0
        key = (min(a, b), max(a, b))
        k_db = self.fading.k_factor_db
        k_lin = 0.0 if k_db is None else 10.0 ** (k_db / 10.0)
        base = (self.seed, rng.STREAM_FADING_BLOCK, *key, freq_idx, interval)
        re = rng.keyed_normal(*base, 0)
        im = rng.keyed_normal(*base, 1)
        scatter = 1.0 / (2.0 * (k_lin + 1.0))
        los = math.sqrt(k_lin / (k_lin + 1.0))
        power = (los + re * math.sqrt(scatter)) ** 2 + (im * math.sqrt(scatter)) ** 2
        return 10.0 * math.log10(max(power, 1e-12))

    def interval_of(self, t: float) -> int:
        return int(t // self.fading.block_interval_s)

    # -- observables ------------------------------------------------------

    def rssi_dbm(self, tx: int, rx: int, freq_idx: int, t: float) -> float:
        """Received power for a transmission tx -> rx at time t."""
        if self.link_blocked(tx, rx):
            return -999.0
        d = max(self.distance(tx, rx), self.model.d0_m)
        pl = path_loss(self.model, d, self.shadowing_db(tx, rx))
        return (self.cfg.tx_power_dbm + self.antenna_gains_db - pl
                + self.static_fading_db(tx, rx, freq_idx)
                + self.block_fading_db(tx, rx, freq_idx, self.interval_of(t)))

    def noise_floor_dbm(self, freq_idx: int, t: float) -> float:
        """Thermal floor plus every interferer active at t overlapping the
        receive bandwidth around the channel center."""
        freq = self.freqs[freq_idx]
        half_bw = self.cfg.bandwidth_hz / 2.0
        levels = [self._thermal_dbm]
        for proc in self.interferers:
            p = proc.power_into(freq - half_bw, freq + half_bw, t)
            if p is not None:
                levels.append(p)
        return power_sum_dbm(levels)

    def sample_link(self, tx: int, rx: int, freq_idx: int, interval: int):
        """(rssi_dbm, snr_db, noise_dbm) for one link/frequency/interval.

        Evaluated at the interval midpoint; snr == rssi - noise exactly.
        """
        t = (interval + 0.5) * self.fading.block_interval_s
        rssi = self.rssi_dbm(tx, rx, freq_idx, t)
        noise = self.noise_floor_dbm(freq_idx, t)
        return rssi, rssi - noise, noise

    # -- reception --------------------------------------------------------

    def success_probability(self, snr_db: float) -> float:
        margin = snr_db - SNR_FLOOR_DB[self.cfg.spreading_factor]
        x = margin / self.reception_width_db
        if x > 40.0:
            return 1.0
        if x < -40.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(-x))

    def packet_success(self, snr_db: float, u: float) -> bool:
        """Bernoulli reception with sigmoid probability; u is a uniform draw."""
        return u < self.success_probability(snr_db)

    def audible(self, tx: int, rx: int, freq_idx: int, t: float,
                threshold_db: float = 5.0) -> bool:
        """Whether a transmission is strong enough at rx to matter
        (carrier sensing and collision accounting)."""
        if self.link_blocked(tx, rx):
            return False
        snr = self.rssi_dbm(tx, rx, freq_idx, t) - self.noise_floor_dbm(freq_idx, t)
        return snr >= SNR_FLOOR_DB[self.cfg.spreading_factor] - threshold_db
