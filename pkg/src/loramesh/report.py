"""Run results: per-node summaries, link metrics, packet ledger, radio
trace, and deterministic CSV/JSONL export.

Exports are byte-stable for identical runs: rows are sorted on explicit
keys and floats are written with fixed formats.  The link-metrics CSV
uses exactly the column schema the frequency-selection tooling reads
back, so exported campaigns can be re-ranked offline.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

from . import freqsel, mac
from .energy import simulate_soc, total_power
from .scenario import dump_scenario

TRACE_COLUMNS = ("node_id", "t_on", "t_off", "freq_hz", "mode")


@dataclass
class NodeSummary:
    node_id: int
    role: str
    generated: int
    delivered: int
    delivery_ratio: float | None
    mean_latency_s: float | None
    max_latency_s: float | None
    duty_cycle: float
    rx_on_s: float
    tx_on_s: float
    radio_energy_j: float
    avg_radio_power_mw: float
    battery_final_wh: float | None = None
    outage_count: int = 0


@dataclass
class MetricsReport:
    scenario_echo: str
    duration_s: float
    seed: int
    node_summaries: list
    link_rows: list
    packets: list
    outcome_counts: dict
    selections: list
    freq_timeline: list
    gateway_lines: list
    radio_trace: dict             # node_id -> sorted (t0, t1, freq_hz, mode)
    energy_check: dict            # node_id -> (ledger_j, recomputed_j)
    events_processed: int

    # -- helpers ----------------------------------------------------------

    def node_trace(self, node_id: int, t0: float = 0.0,
                   t1: float | None = None) -> list:
        t1 = self.duration_s if t1 is None else t1
        return [row for row in self.radio_trace[node_id]
                if row[0] >= t0 and row[1] <= t1]

    def duty_cycle(self, node_id: int, t0: float = 0.0,
                   t1: float | None = None) -> float:
        t1 = self.duration_s if t1 is None else t1
        rows = self.node_trace(node_id, t0, t1)
        return mac.measured_duty_cycle(rows, total_time_s=t1 - t0)

    def delivery_ratio(self, t0: float = 0.0, t1: float | None = None,
                       kinds=None) -> float | None:
        """Delivered fraction of reports originated in [t0, t1)."""
        t1 = self.duration_s if t1 is None else t1
        pool = [p for p in self.packets
                if t0 <= p.t_gen < t1 and (kinds is None or p.kind in kinds)]
        if not pool:
            return None
        return sum(p.outcome == "delivered" for p in pool) / len(pool)

    @classmethod
    def from_simulator(cls, sim) -> "MetricsReport":
        spec = sim.spec
        freqs = spec.plan.frequencies_hz
        trace: dict[int, list] = {}
        summaries = []
        energy_check = {}

        for nid in sorted(sim.nodes):
            node = sim.nodes[nid]
            rows = _synthesize_trace(sim, node)
            trace[nid] = rows
            rx_on = sum(r[1] - r[0] for r in rows if r[3] != "tx")
            tx_on = sum(r[1] - r[0] for r in rows if r[3] == "tx")
            energy_j = (tx_on * spec.energy.tx_power_w
                        + rx_on * spec.energy.rx_power_w)
            recomputed = sum(
                (r[1] - r[0]) * (spec.energy.tx_power_w if r[3] == "tx"
                                 else spec.energy.rx_power_w)
                for r in rows)
            energy_check[nid] = (energy_j, recomputed)
            duty = (rx_on + tx_on) / spec.duration_s if spec.duration_s else 0.0

            mine = [p for p in sim.packets.values() if p.origin == nid]
            delivered = [p for p in mine if p.outcome == "delivered"]
            lats = sorted(p.latency_s for p in delivered)
            battery_final = None
            outage_count = 0
            if spec.energy.battery.simulate and nid != sim.base_id:
                soc = _battery_run(sim, node, energy_j)
                battery_final = float(soc.soc_wh[-1])
                outage_count = soc.outage_count
            summaries.append(NodeSummary(
                node_id=nid, role=node.role, generated=len(mine),
                delivered=len(delivered),
                delivery_ratio=len(delivered) / len(mine) if mine else None,
                mean_latency_s=sum(lats) / len(lats) if lats else None,
                max_latency_s=lats[-1] if lats else None,
                duty_cycle=duty, rx_on_s=rx_on, tx_on_s=tx_on,
                radio_energy_j=energy_j,
                avg_radio_power_mw=(energy_j / spec.duration_s * 1000.0
                                    if spec.duration_s else 0.0),
                battery_final_wh=battery_final, outage_count=outage_count))

        packets = sorted(sim.packets.values(), key=lambda p: p.pkt_id)
        counts = {k: 0 for k in ("delivered", "dropped_channel",
                                 "dropped_queue", "undeliverable", "in_flight")}
        for p in packets:
            counts[p.outcome] += 1

        link_rows = (sim.store.link_rows(freqs)
                     + sim.store.noise_rows(freqs))
        link_rows.sort(key=lambda r: (r.link_id, r.freq_hz, r.interval))

        return cls(scenario_echo=dump_scenario(spec),
                   duration_s=spec.duration_s, seed=spec.seed,
                   node_summaries=summaries, link_rows=link_rows,
                   packets=packets, outcome_counts=counts,
                   selections=list(sim.selections),
                   freq_timeline=sorted(sim.freq_timeline),
                   gateway_lines=list(sim.gateway_lines),
                   radio_trace=trace, energy_check=energy_check,
                   events_processed=sim.events_processed)


def _battery_run(sim, node, radio_energy_j):
    spec = sim.spec
    h = spec.energy.harvester
    psh = h.peak_sun_hours_per_day

    def harvest_at(t_h: float) -> float:
        hour = t_h % 24.0
        return h.panel_w if 12.0 - psh / 2 <= hour < 12.0 + psh / 2 else 0.0

    bat = spec.energy.battery
    load_w = total_power(spec.energy.profile) / 1000.0
    return simulate_soc(bat.capacity_wh, bat.initial_fraction * bat.capacity_wh,
                        load_w, harvest_at, spec.duration_s / 3600.0,
                        step_h=bat.step_h,
                        efficiency=h.conversion_efficiency)


def _synthesize_trace(sim, node) -> list:
    """Merge recorded radio activity with the arithmetic wake-window grid."""
    spec = sim.spec
    freqs = spec.plan.frequencies_hz
    rows = [(t0, t1, freqs[fi], mode) for (t0, t1, fi, mode) in node.rx_rows]
    rows += [(t0, t1, freqs[fi], "tx") for (t0, t1, fi, mode) in node.tx_rows]

    # per-node receive-frequency steps over time
    steps = sorted((t, freqs.index(f)) for (t, n, f) in sim.freq_timeline
                   if n == node.id)

    def rx_freq_at(t: float) -> int:
        fi = steps[0][1]
        for (ts, f) in steps:
            if ts <= t:
                fi = f
            else:
                break
        return fi

    def window_freq_at(t: float) -> int:
        return sim._window_freq(node.sched, t, rx_freq_at(t))

    k = spec.mac.beacon_every_frames
    n_frames = int(spec.duration_s / node.sched.frame_s)
    down = node.down_intervals
    sessions = node.listen_sessions
    for frame in range(n_frames):
        if mac.is_beacon_frame(node.sched, frame, k):
            continue
        w0 = mac.window_open_s(node.sched, frame)
        w1 = w0 + node.sched.window_s
        if w1 > spec.duration_s:
            break
        if any(a < w1 and w0 < b for (a, b) in down):
            continue
        if any(a < w1 and w0 < b for (a, b) in sessions):
            continue        # radio already held open by a discovery listen
        rows.append((w0, w1, freqs[window_freq_at(w0)], "rx_window"))
    rows.sort()
    return rows


# -- CSV/JSONL export ---------------------------------------------------------


def _fmt(value, spec_fmt: str) -> str:
    if value is None:
        return ""
    return spec_fmt % value


def write_link_metrics_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(freqsel.CSV_COLUMNS)
    for r in rows:
        w.writerow([r.link_id, _fmt(r.freq_hz, "%.1f"), r.interval,
                    _fmt(r.noise_p95_dbm, "%.6f"), _fmt(r.snr_p5_db, "%.6f"),
                    _fmt(r.rssi_p5_dbm, "%.6f"), r.attempts, r.successes])


def read_link_metrics_csv(path) -> list:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(freqsel.CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"metrics CSV missing columns: {sorted(missing)}")
        for rec in reader:
            rows.append(freqsel.LinkIntervalMetrics(
                link_id=rec["link_id"], freq_hz=float(rec["freq_hz"]),
                interval=int(rec["interval"]),
                noise_p95_dbm=float(rec["noise_p95_dbm"]) if rec["noise_p95_dbm"] else None,
                snr_p5_db=float(rec["snr_p5_db"]) if rec["snr_p5_db"] else None,
                rssi_p5_dbm=float(rec["rssi_p5_dbm"]) if rec["rssi_p5_dbm"] else None,
                attempts=int(rec["tx"]), successes=int(rec["rx"])))
    return rows


def export(report: MetricsReport, out_dir, include_trace: bool = True) -> dict:
    """Write all run artifacts; returns {name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def write(name: str, producer) -> None:
        path = os.path.join(out_dir, name)
        buf = io.StringIO()
        producer(buf)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        paths[name] = path

    write("scenario_echo.yaml", lambda fh: fh.write(report.scenario_echo))
    write("link_metrics.csv",
          lambda fh: write_link_metrics_csv(report.link_rows, fh))

    def nodes_csv(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "role", "generated", "delivered",
                    "delivery_ratio", "mean_latency_s", "max_latency_s",
                    "duty_cycle", "rx_on_s", "tx_on_s", "radio_energy_j",
                    "avg_radio_power_mw", "battery_final_wh", "outage_count"])
        for s in report.node_summaries:
            w.writerow([s.node_id, s.role, s.generated, s.delivered,
                        _fmt(s.delivery_ratio, "%.6f"),
                        _fmt(s.mean_latency_s, "%.6f"),
                        _fmt(s.max_latency_s, "%.6f"),
                        _fmt(s.duty_cycle, "%.8f"), _fmt(s.rx_on_s, "%.6f"),
                        _fmt(s.tx_on_s, "%.6f"), _fmt(s.radio_energy_j, "%.6f"),
                        _fmt(s.avg_radio_power_mw, "%.6f"),
                        _fmt(s.battery_final_wh, "%.6f"), s.outage_count])
    write("node_summary.csv", nodes_csv)

    def packets_csv(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pkt_id", "origin", "kind", "seq", "t_gen", "outcome",
                    "hops", "latency_s"])
        for p in report.packets:
            w.writerow([p.pkt_id, p.origin, p.kind, p.seq,
                        _fmt(p.t_gen, "%.6f"), p.outcome, p.hops,
                        _fmt(p.latency_s, "%.6f")])
    write("packets.csv", packets_csv)

    def selections_csv(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "method", "scope", "node_id", "chosen_freq_hz",
                    "active_t0", "active_t1", "passive_t0", "passive_t1",
                    "k", "scan_freqs_hz"])
        for s in report.selections:
            w.writerow([_fmt(s.t_s, "%.6f"), s.method, s.scope,
                        "" if s.node_id is None else s.node_id,
                        _fmt(s.chosen_freq_hz, "%.1f"),
                        _fmt(s.active_t0, "%.6f"), _fmt(s.active_t1, "%.6f"),
                        _fmt(s.passive_t0, "%.6f"), _fmt(s.passive_t1, "%.6f"),
                        s.k,
                        "|".join("%.1f" % f for f in s.scan_freqs_hz)])
    write("selections.csv", selections_csv)

    def timeline_csv(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "node_id", "freq_hz"])
        for (t, nid, f) in report.freq_timeline:
            w.writerow([_fmt(t, "%.6f"), nid, _fmt(f, "%.1f")])
    write("freq_timeline.csv", timeline_csv)

    write("gateway.jsonl",
          lambda fh: fh.write("".join(line + "\n"
                                      for line in report.gateway_lines)))

    if include_trace:
        def trace_csv(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for nid in sorted(report.radio_trace):
                for (t0, t1, f, mode) in report.radio_trace[nid]:
                    w.writerow([nid, _fmt(t0, "%.6f"), _fmt(t1, "%.6f"),
                                _fmt(f, "%.1f"), mode])
        write("radio_trace.csv", trace_csv)

    return paths
