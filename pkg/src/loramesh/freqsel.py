"""Link-metric aggregation and frequency selection.

Metrics are collected per (directed link, frequency, 10 s interval):
95th-percentile passive noise, 5th-percentile SNR and RSSI of received
packets, and interval PRR.  Three selection methods rank candidate
frequencies from those records:

* offline: mean long-term PRR over surrogate links, pick the best.
* online: per frequency, sum over links of the per-link mean (over
  intervals) of the composite score, pick the best.
* low-power online: passive noise scan over all frequencies first,
  keep the k quietest, then run the online method on those k.

The composite score of one (link, interval, frequency) record is
(1 - noise) + snr + rssi + prr, each term min-max normalized over the
whole measurement population.  Lower noise is better, hence the
inversion; pass noise_term="raw" to keep the uninverted sum.

Clustering of the same normalized features labels link-time-interval
regimes (interference, fading, good, poor) for diagnosis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("link_id", "freq_hz", "interval", "noise_p95_dbm",
               "snr_p5_db", "rssi_p5_dbm", "tx", "rx")


@dataclass(frozen=True)
class LinkIntervalMetrics:
    """Metrics for one (link, frequency, 10 s interval) cell.

    Percentile fields are None when no sample backs them; prr is None
    when there were no transmission attempts in the interval.
    """

    link_id: str
    freq_hz: float
    interval: int
    noise_p95_dbm: float | None = None
    snr_p5_db: float | None = None
    rssi_p5_dbm: float | None = None
    attempts: int = 0
    successes: int = 0

    def __post_init__(self):
        if self.successes > self.attempts:
            raise ValueError("successes cannot exceed attempts")

    @property
    def prr(self) -> float | None:
        if self.attempts == 0:
            return None
        return self.successes / self.attempts


def nearest_rank_percentile(values, pct: float) -> float:
    """Nearest-rank percentile (no interpolation, deterministic)."""
    vs = sorted(values)
    if not vs:
        raise ValueError("percentile of empty sample")
    rank = math.ceil(pct / 100.0 * len(vs))
    rank = min(max(rank, 1), len(vs))
    return vs[rank - 1]


def aggregate_interval(link_id: str, freq_hz: float, interval: int,
                       noise_samples, packet_samples) -> LinkIntervalMetrics:
    """Fold raw samples of one (link, freq, interval) into a metrics record.

    packet_samples is an iterable of (rssi_dbm, snr_db, received) where the
    rssi/snr values are only meaningful for received packets.
    """
    attempts = 0
    successes = 0
    rssis, snrs = [], []
    for rssi, snr, ok in packet_samples:
        attempts += 1
        if ok:
            successes += 1
            rssis.append(rssi)
            snrs.append(snr)
    return LinkIntervalMetrics(
        link_id=link_id, freq_hz=freq_hz, interval=interval,
        noise_p95_dbm=nearest_rank_percentile(noise_samples, 95) if noise_samples else None,
        snr_p5_db=nearest_rank_percentile(snrs, 5) if snrs else None,
        rssi_p5_dbm=nearest_rank_percentile(rssis, 5) if rssis else None,
        attempts=attempts, successes=successes)


def minmax_normalize(values) -> list:
    """(v - min) / (max - min); a constant vector maps to all 0.5."""
    vs = list(values)
    if not vs:
        raise ValueError("cannot normalize an empty list")
    lo, hi = min(vs), max(vs)
    if hi == lo:
        return [0.5] * len(vs)
    return [(v - lo) / (hi - lo) for v in vs]


def _norm(v: float, lo: float, hi: float) -> float:
    if hi == lo:
        return 0.5
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class NormalizationContext:
    """Per-metric min/max over the measurement population, plus the mean
    of each normalized term for imputing records with absent fields."""

    noise_range: tuple
    snr_range: tuple
    rssi_range: tuple
    term_means: dict
    noise_term: str = "inverted"


def build_context(rows, noise_term: str = "inverted") -> NormalizationContext:
    if noise_term not in ("inverted", "raw"):
        raise ValueError("noise_term must be 'inverted' or 'raw'")
    noises = [r.noise_p95_dbm for r in rows if r.noise_p95_dbm is not None]
    snrs = [r.snr_p5_db for r in rows if r.snr_p5_db is not None]
    rssis = [r.rssi_p5_dbm for r in rows if r.rssi_p5_dbm is not None]
    prrs = [r.prr for r in rows if r.prr is not None]

    def rng_of(vals):
        return (min(vals), max(vals)) if vals else (0.0, 0.0)

    noise_range, snr_range, rssi_range = rng_of(noises), rng_of(snrs), rng_of(rssis)

    def mean(vals, default=0.5):
        return sum(vals) / len(vals) if vals else default

    n_hat = mean([_norm(v, *noise_range) for v in noises])
    term_means = {
        "noise": (1.0 - n_hat) if noise_term == "inverted" else n_hat,
        "snr": mean([_norm(v, *snr_range) for v in snrs]),
        "rssi": mean([_norm(v, *rssi_range) for v in rssis]),
        "prr": mean(prrs),
    }
    return NormalizationContext(noise_range, snr_range, rssi_range,
                                term_means, noise_term)


@dataclass(frozen=True)
class FrequencyScore:
    freq_hz: float
    composite: float
    components: tuple   # (noise_term, snr_term, rssi_term, prr_term)


def score_composite(row: LinkIntervalMetrics, ctx: NormalizationContext) -> FrequencyScore:
    """Composite quality of one record under a normalization context.

    Absent fields contribute the population mean of their term, so a
    frequency with sparse data stays comparable without being pushed to
    either extreme.
    """
    if row.noise_p95_dbm is None:
        noise_term = ctx.term_means["noise"]
    else:
        n_hat = _norm(row.noise_p95_dbm, *ctx.noise_range)
        noise_term = (1.0 - n_hat) if ctx.noise_term == "inverted" else n_hat
    snr_term = (ctx.term_means["snr"] if row.snr_p5_db is None
                else _norm(row.snr_p5_db, *ctx.snr_range))
    rssi_term = (ctx.term_means["rssi"] if row.rssi_p5_dbm is None
                 else _norm(row.rssi_p5_dbm, *ctx.rssi_range))
    prr_term = ctx.term_means["prr"] if row.prr is None else row.prr
    comps = (noise_term, snr_term, rssi_term, prr_term)
    return FrequencyScore(row.freq_hz, sum(comps), comps)


def offline_select(rows) -> tuple:
    """Pick the frequency with the best mean long-term PRR over links.

    Long-term PRR of a link is total successes over total attempts across
    all its intervals; the per-frequency score is the mean over links.
    Returns (chosen_freq, ranking) with ranking sorted best-first.
    """
    by_freq: dict[float, dict[str, list]] = {}
    skipped = set()
    for r in rows:
        by_freq.setdefault(r.freq_hz, {}).setdefault(r.link_id, [0, 0])
        tally = by_freq[r.freq_hz][r.link_id]
        tally[0] += r.attempts
        tally[1] += r.successes
    scores = {}
    for freq, links in by_freq.items():
        prrs = [s / a for a, s in links.values() if a > 0]
        if not prrs:
            skipped.add(freq)
            continue
        scores[freq] = sum(prrs) / len(prrs)
    if skipped:
        warnings.warn(f"frequencies without PRR data excluded from offline "
                      f"ranking: {sorted(skipped)}")
    if not scores:
        raise ValueError("no frequency has any PRR observation")
    ranking = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranking[0][0], ranking


def online_select(rows, ctx: NormalizationContext | None = None,
                  link_weighting: str = "per_link") -> tuple:
    """Rank frequencies by summed per-link mean composite score.

    With link_weighting="per_link" (default) each link contributes the
    mean of its interval composites and the per-frequency score is the
    sum over links.  "flat" averages over all (link, interval) records
    instead.  Returns (chosen_freq, ranking best-first).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("online selection needs a non-empty metric set")
    if link_weighting not in ("per_link", "flat"):
        raise ValueError("link_weighting must be 'per_link' or 'flat'")
    if ctx is None:
        ctx = build_context(rows)
    per_freq: dict[float, dict[str, list]] = {}
    for r in rows:
        comp = score_composite(r, ctx).composite
        per_freq.setdefault(r.freq_hz, {}).setdefault(r.link_id, []).append(comp)
    scores = {}
    for freq, links in per_freq.items():
        if link_weighting == "per_link":
            scores[freq] = sum(sum(v) / len(v) for v in links.values())
        else:
            all_comps = [c for v in links.values() for c in v]
            scores[freq] = sum(all_comps) / len(all_comps)
    ranking = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranking[0][0], ranking


def passive_noise_ranking(passive_rows) -> list:
    """Frequencies ranked quietest-first by mean normalized p95 noise."""
    noises = [r.noise_p95_dbm for r in passive_rows if r.noise_p95_dbm is not None]
    if not noises:
        raise ValueError("passive scan has no noise observations")
    lo, hi = min(noises), max(noises)
    per_freq: dict[float, list] = {}
    for r in passive_rows:
        if r.noise_p95_dbm is None:
            continue
        per_freq.setdefault(r.freq_hz, []).append(_norm(r.noise_p95_dbm, lo, hi))
    ranked = sorted(((sum(v) / len(v), f) for f, v in per_freq.items()),
                    key=lambda kv: (kv[0], kv[1]))
    return [(f, s) for s, f in ranked]


def lowpower_select(passive_rows, active_rows, k: int,
                    ctx: NormalizationContext | None = None,
                    link_weighting: str = "per_link") -> tuple:
    """Two-stage selection: keep the k quietest frequencies from the
    passive noise scan, then run the online method restricted to them.

    Returns (chosen_freq, ranking, shortlist)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    quiet = passive_noise_ranking(passive_rows)
    shortlist = [f for f, _ in quiet[:min(k, len(quiet))]]
    chosen_rows = [r for r in active_rows if r.freq_hz in shortlist]
    chosen, ranking = online_select(chosen_rows, ctx=ctx,
                                    link_weighting=link_weighting)
    return chosen, ranking, shortlist


# -- applying a selection -------------------------------------------------

@dataclass(frozen=True)
class SetReceiveFrequency:
    """Local-scope action: the node retunes its own receive frequency and
    announces it in discovery beacons (which stay on the discovery
    frequency)."""
    node_id: int
    freq_hz: float


@dataclass(frozen=True)
class FloodFrequencyPlan:
    """Global-scope action: the base floods a freq_plan reconfiguration."""
    freq_hz: float


def apply_selection(scope: str, freq_hz: float, node_id: int | None = None):
    """Translate a selection into reconfiguration actions for the netstack."""
    if scope in ("local", "per_node"):
        if node_id is None:
            raise ValueError("local scope needs the selecting node id")
        return [SetReceiveFrequency(node_id, freq_hz)]
    if scope in ("global", "network", "network_wide"):
        return [FloodFrequencyPlan(freq_hz)]
    raise ValueError(f"unknown selection scope {scope!r}")


# -- regime clustering ----------------------------------------------------

REGIME_LABELS = ("interference", "fading", "good", "poor")


def label_centroid(centroid) -> str:
    """Regime label from a normalized (noise, snr, rssi, prr) centroid."""
    n, s, _, p = centroid
    if n > 0.7 and s < 0.4:
        return "interference"
    if n < 0.3 and s > 0.6 and p < 0.6:
        return "fading"
    if p > 0.9:
        return "good"
    return "poor"


def kmeans(points: np.ndarray, k: int, seed: int = 0, restarts: int = 10,
           max_iter: int = 100):
    """Lloyd's algorithm with random restarts.

    Returns (labels, centroids, inertia, inertia_history) of the best
    restart; inertia_history is non-increasing within a run.
    """
    n = len(points)
    if n < k:
        raise ValueError(f"need at least {k} points, got {n}")
    best = None
    for r in range(restarts):
        gen = np.random.default_rng(np.random.SeedSequence([seed, r]))
        centroids = points[gen.choice(n, size=k, replace=False)].copy()
        history = []
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            inertia = float(d2[np.arange(n), labels].sum())
            history.append(inertia)
            moved = False
            for c in range(k):
                members = points[labels == c]
                if len(members) == 0:
                    # reseed an empty cluster to the worst-fit point
                    far = int(d2[np.arange(n), labels].argmax())
                    newc = points[far]
                else:
                    newc = members.mean(axis=0)
                if not np.allclose(newc, centroids[c]):
                    moved = True
                centroids[c] = newc
            if not moved:
                break
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        history.append(inertia)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, history)
    return best


@dataclass
class ClusterResult:
    assignments: np.ndarray        # cluster index per input row
    centroids: np.ndarray          # k x 4 normalized feature space
    regime_labels: list            # label per cluster
    inertia: float
    inertia_history: list
    rows: list                     # the records that were clustered


def cluster_links(rows, k_clusters: int = 8, seed: int = 0,
                  restarts: int = 10) -> ClusterResult:
    """k-means over normalized (noise, snr, rssi, prr) link-interval points.

    Records with any absent field are dropped; there must be at least
    k_clusters complete records.
    """
    complete = [r for r in rows
                if r.noise_p95_dbm is not None and r.snr_p5_db is not None
                and r.rssi_p5_dbm is not None and r.prr is not None]
    if len(complete) < k_clusters:
        raise ValueError(
            f"need at least {k_clusters} complete records, got {len(complete)}")
    cols = [
        minmax_normalize([r.noise_p95_dbm for r in complete]),
        minmax_normalize([r.snr_p5_db for r in complete]),
        minmax_normalize([r.rssi_p5_dbm for r in complete]),
        minmax_normalize([r.prr for r in complete]),
    ]
    points = np.array(cols).T
    labels, centroids, inertia, history = kmeans(points, k_clusters,
                                                 seed=seed, restarts=restarts)
    regimes = [label_centroid(c) for c in centroids]
    return ClusterResult(labels, centroids, regimes, inertia, history, complete)
