"""Deterministic discrete-event simulator tying the protocol stack together.

One engine instance simulates one scenario single-threaded.  All
randomness flows through counter-based streams keyed on (scenario seed,
entity, stream, draw index), so identical scenarios produce byte-identical
reports.

Protocol model in brief: nodes wake once per frame in a pseudo-random
receive window (slot hashed from their seed); senders that know a
receiver's seed transmit into its window and retry on missing acks.
Every beacon period a node replaces one of its own windows with a
discovery beacon on the fixed discovery frequency, carrying its seed,
receive frequency, routing cost, and epoch; neighbors tune in to each
other's beacon slots, which doubles as link-quality evidence.
Convergecast data flows parent-by-parent toward the base, configuration
commands flood outward, and an epoch-stamped two-phase reset wave
restores routing from arbitrary corruption.  Frequency-selection
campaigns retune the data windows across the channel plan, collect
per-interval link metrics, and apply the chosen frequency locally or
network-wide.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

from . import freqsel, mac, netstack, rng
from .channel import Channel, METRIC_INTERVAL_S
from .phy import airtime
from .scenario import ScenarioSpec

PROBE_PAYLOAD_BYTES = 4
RESET_PAYLOAD_BYTES = 6
FLOOD_PAYLOAD_BYTES = 24
HELLO_PAYLOAD_BYTES = 12
ACK_TURNAROUND_S = 0.001
NOISE_SAMPLE_S = 0.001
ROUTE_HOLD_S = 30.0
ROUTE_RETRY_S = 2.0
DEDUP_HORIZON_S = 600.0

# transmission kinds that count as link-metric attempts
_METRIC_KINDS = ("data", "probe", "hello", "flood", "reset", "reset_ack")

OUTCOMES = ("delivered", "dropped_channel", "dropped_queue",
            "undeliverable", "in_flight")


@dataclass
class PacketRecord:
    """Ledger entry for one application-layer report."""

    pkt_id: int
    origin: int
    kind: str
    seq: int
    t_gen: float
    payload_bytes: int
    payload: dict
    outcome: str = "in_flight"
    hops: int = 0
    t_end: float | None = None

    @property
    def latency_s(self) -> float | None:
        if self.outcome != "delivered" or self.t_end is None:
            return None
        return self.t_end - self.t_gen


@dataclass
class Transmission:
    tx_id: int
    sender: int
    target: int | None          # None for broadcast beacons
    freq_idx: int
    t0: float
    t1: float
    kind: str
    payload: dict


@dataclass
class SelectionRecord:
    """Everything needed to replay one frequency selection from the
    exported metrics table."""

    t_s: float
    method: str
    scope: str
    node_id: int | None
    chosen_freq_hz: float
    active_t0: float
    active_t1: float
    passive_t0: float | None
    passive_t1: float | None
    scan_freqs_hz: tuple
    k: int


class MetricsStore:
    """Per (directed link, frequency, interval) packet tallies plus
    per (node, frequency, interval) passive noise samples."""

    def __init__(self):
        self.packets: dict = {}    # (tx, rx, fi, interval) -> [att, succ, rssis, snrs]
        self.noise: dict = {}      # (node, fi, interval) -> [dBm]

    def record_attempt(self, tx: int, rx: int, fi: int, interval: int) -> None:
        cell = self.packets.setdefault((tx, rx, fi, interval), [0, 0, [], []])
        cell[0] += 1

    def record_reception(self, tx: int, rx: int, fi: int, interval: int,
                         rssi: float, snr: float) -> None:
        cell = self.packets.setdefault((tx, rx, fi, interval), [0, 0, [], []])
        cell[1] += 1
        cell[2].append(rssi)
        cell[3].append(snr)

    def record_noise(self, node: int, fi: int, interval: int, dbm: float) -> None:
        self.noise.setdefault((node, fi, interval), []).append(dbm)

    def link_rows(self, freqs) -> list:
        """Directed-link metric rows; receiver noise joined per cell."""
        rows = []
        for (tx, rx, fi, interval) in sorted(self.packets):
            att, succ, rssis, snrs = self.packets[(tx, rx, fi, interval)]
            noise = self.noise.get((rx, fi, interval))
            rows.append(freqsel.LinkIntervalMetrics(
                link_id=f"{tx}->{rx}", freq_hz=freqs[fi], interval=interval,
                noise_p95_dbm=freqsel.nearest_rank_percentile(noise, 95) if noise else None,
                snr_p5_db=freqsel.nearest_rank_percentile(snrs, 5) if snrs else None,
                rssi_p5_dbm=freqsel.nearest_rank_percentile(rssis, 5) if rssis else None,
                attempts=att, successes=succ))
        return rows

    def noise_rows(self, freqs) -> list:
        """Receiver-only rows (pseudo link '@node') from passive scans."""
        rows = []
        for (node, fi, interval) in sorted(self.noise):
            samples = self.noise[(node, fi, interval)]
            rows.append(freqsel.LinkIntervalMetrics(
                link_id=f"@{node}", freq_hz=freqs[fi], interval=interval,
                noise_p95_dbm=freqsel.nearest_rank_percentile(samples, 95)))
        return rows


@dataclass
class _QueuedPacket:
    record: PacketRecord
    held_since: float


class SimNode:
    """Mutable per-node runtime state, owned by the engine."""

    def __init__(self, spec_node, sched: mac.WakeupSchedule, rx_freq_idx: int,
                 is_base: bool):
        self.id = spec_node.id
        self.role = spec_node.role
        self.sched = sched
        self.rx_freq_idx = rx_freq_idx
        self.pending_freq: tuple | None = None     # (freq_idx, t_apply)
        self.up = True
        self.boot_t = 0.0
        self.neighbors: dict[int, mac.NeighborEntry] = {}
        self.neighbor_pending: dict[int, tuple] = {}   # announced switches
        self.listen_chains: set[int] = set()
        self.link_est: dict[int, netstack.LinkEstimator] = {}
        self.routing = netstack.RoutingState(spec_node.id, is_base=is_base)
        self.wave: netstack.ResetWave | None = None
        self.seen_floods: dict[int, int] = {}
        self.flood_cache: dict[int, tuple] = {}    # origin -> (msg, applies_at)
        self.rerelay_pending: set = set()
        self.seen_pkts: dict[int, float] = {}
        self.queue: deque = deque()
        self.sending = False
        self.seq_counters: dict[str, int] = {}
        self.params: dict = {}
        # radio accounting
        self.tx_rows: list = []        # (t0, t1, freq_idx, mode)
        self.rx_rows: list = []
        self.tx_on_s = 0.0
        self.rx_extra_s = 0.0
        self.down_intervals: list = []
        self._down_since: float | None = None
        self.listen_sessions: list = []    # (t0, t1) discovery listens

    def next_seq(self, kind: str) -> int:
        n = self.seq_counters.get(kind, 0) + 1
        self.seq_counters[kind] = n
        return n

    def current_freq_idx(self, t: float) -> int:
        if self.pending_freq is not None and t >= self.pending_freq[1]:
            self.rx_freq_idx = self.pending_freq[0]
            self.pending_freq = None
        return self.rx_freq_idx

    def add_tx(self, t0: float, t1: float, fi: int) -> None:
        self.tx_rows.append((t0, t1, fi, "tx"))
        self.tx_on_s += t1 - t0

    def add_rx(self, t0: float, t1: float, fi: int, mode: str) -> None:
        self.rx_rows.append((t0, t1, fi, mode))
        self.rx_extra_s += t1 - t0

    def tx_busy(self, t0: float, t1: float) -> bool:
        for (a, b, _, _) in reversed(self.tx_rows[-16:]):
            if a < t1 and t0 < b:
                return True
        return False

    def listening_on_discovery(self, t0: float, t1: float) -> bool:
        return any(a <= t0 and t1 <= b for a, b in self.listen_sessions)


class Simulator:
    """Single-threaded event engine for one scenario."""

    def __init__(self, spec: ScenarioSpec, udp_sink=None):
        self.spec = spec
        self.now = 0.0
        self._seq = 0
        self._heap: list = []
        self._tx_counter = 0
        self._pkt_counter = 0
        self.active_tx: list[Transmission] = []
        self.store = MetricsStore()
        self.packets: dict[int, PacketRecord] = {}
        self.gateway_lines: list[str] = []
        self.selections: list[SelectionRecord] = []
        self.freq_timeline: list = []
        self.udp_sink = udp_sink
        self._flood_version = 0
        self.events_processed = 0

        self.channel = Channel(
            cfg=spec.radio, plan_freqs=spec.plan.frequencies_hz,
            path_loss_model=spec.channel.path_loss, fading=spec.channel.fading,
            noise_figure_db=spec.channel.noise_figure_db,
            interferers=spec.channel.interferers, seed=spec.seed,
            duration_s=spec.duration_s + 60.0,
            antenna_gains_db=spec.channel.antenna_gains_db,
            reception_width_db=spec.channel.reception_width_db)
        self.channel.set_nodes({n.id: n.position_m for n in spec.nodes})

        init_fi = spec.plan.index_of(spec.initial_data_freq_hz)
        self.disc_fi = spec.plan.index_of(spec.plan.discovery_freq_hz)
        self.nodes: dict[int, SimNode] = {}
        for n in spec.nodes:
            seed = rng.hash_u64(spec.seed, rng.STREAM_MAC, n.id)
            sched = mac.WakeupSchedule(seed, spec.mac.frame_ms,
                                       spec.mac.wake_window_ms)
            self.nodes[n.id] = SimNode(n, sched, init_fi, n.role == "base")
            self.freq_timeline.append((0.0, n.id,
                                       spec.plan.frequencies_hz[init_fi]))
        self.base_id = spec.base_id

        self._beacon_airtime = airtime(spec.radio, spec.mac.beacon_payload_bytes)
        self._ack_airtime = airtime(spec.radio, spec.mac.ack_payload_bytes)
        self._guard_s = spec.mac.guard_ms / 1000.0

        self._campaign_windows: list = []   # (t0, t1, freq_idx)
        self._setup()

    # ------------------------------------------------------------------
    # event plumbing

    def schedule(self, t: float, fn, *args) -> None:
        if t < self.now - 1e-9:
            raise RuntimeError("event scheduled in the past")
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, args))

    def run_until(self, t_stop: float) -> None:
        """Process events up to and including t_stop."""
        while self._heap and self._heap[0][0] <= t_stop:
            t, _, fn, args = heapq.heappop(self._heap)
            self.now = t
            self.events_processed += 1
            fn(*args)
            if len(self.active_tx) > 64:
                self.active_tx = [x for x in self.active_tx
                                  if x.t1 > self.now - 30.0]
        self.now = max(self.now, t_stop)

    def run(self):
        from .report import MetricsReport
        self.run_until(self.spec.duration_s)
        for node in self.nodes.values():
            if node._down_since is not None:
                node.down_intervals.append((node._down_since, self.now))
                node._down_since = None
        return MetricsReport.from_simulator(self)

    # ------------------------------------------------------------------
    # bootstrap

    def _setup(self) -> None:
        m = self.spec.mac
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            node.params = {"status_period": self.spec.traffic.status_period_s}
            # boot-time discovery: listen continuously, send a few beacons
            node.listen_sessions.append((0.0, m.join_listen_s))
            node.add_rx(0.0, m.join_listen_s, self.disc_fi, "join_listen")
            stream = rng.KeyedStream(self.spec.seed, rng.STREAM_JOIN, nid)
            for _ in range(m.join_beacons):
                t = stream.uniform(0.2, max(0.4, m.join_listen_s - 0.5))
                self.schedule(t, self._send_beacon, nid, True, 0)
            self.schedule(m.join_listen_s, self._finish_join, nid)
            self._schedule_next_beacon(nid, m.join_listen_s)
        self._setup_traffic()
        self._setup_freqsel()
        for f in self.spec.faults:
            self.schedule(f.t_s, self._apply_fault, f)

    def _setup_traffic(self) -> None:
        tr = self.spec.traffic
        start = self.spec.mac.join_listen_s + 2.0
        for nid in sorted(self.nodes):
            if nid == self.base_id:
                continue
            stream = rng.KeyedStream(self.spec.seed, rng.STREAM_TRAFFIC, nid)
            for kind, period, size in (("decision", tr.decision_period_s,
                                        tr.decision_payload_bytes),
                                       ("spl", tr.spl_period_s, 12),
                                       ("status", tr.status_period_s, 10)):
                if period and period > 0:
                    first = start + stream.uniform(0.0, period)
                    self.schedule(first, self._generate_report,
                                  nid, kind, size, period)

    # ------------------------------------------------------------------
    # beacons and discovery

    def _finish_join(self, nid: int) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        for nb in sorted(node.neighbors):
            self._ensure_beacon_listen(node, nb)
        self._reselect_parent(node)

    def _schedule_next_beacon(self, nid: int, after_s: float) -> None:
        node = self.nodes[nid]
        k = self.spec.mac.beacon_every_frames
        frame = int(after_s / node.sched.frame_s) + 1
        while not mac.is_beacon_frame(node.sched, frame, k):
            frame += 1
        self.schedule(mac.window_open_s(node.sched, frame),
                      self._send_beacon, nid, False, frame)

    def _beacon_payload(self, node: SimNode) -> dict:
        pend = node.pending_freq
        return {"seed": node.sched.seed,
                "rx_freq_idx": node.current_freq_idx(self.now),
                "pending_freq_idx": pend[0] if pend else -1,
                "freq_applies_at": pend[1] if pend else 0.0,
                "path_etx": node.routing.path_etx,
                "epoch": node.routing.epoch,
                "flood_versions": dict(node.seen_floods)}

    def _send_beacon(self, nid: int, join_phase: bool, frame: int) -> None:
        node = self.nodes[nid]
        if not join_phase:
            self._schedule_next_beacon(nid, self.now)
        if not node.up:
            return
        if join_phase:
            # polite boot beacons: defer while the discovery channel is busy
            busy = any(x.freq_idx == self.disc_fi and x.t1 > self.now
                       and x.sender != nid
                       and self.channel.audible(x.sender, nid, self.disc_fi,
                                                self.now)
                       for x in self.active_tx)
            if busy:
                delay = rng.keyed_uniform(self.spec.seed, rng.STREAM_JOIN, nid,
                                          int(self.now * 1e6)) * 0.15 + 0.05
                self.schedule(self.now + delay, self._send_beacon,
                              nid, True, frame)
                return
        self._begin_tx(nid, None, self.disc_fi, "beacon",
                       self._beacon_payload(node),
                       self.spec.mac.beacon_payload_bytes)

    def _process_beacon(self, rx_node: SimNode, tx: Transmission) -> None:
        sender = tx.sender
        pl = tx.payload
        freqs = self.spec.plan.frequencies_hz
        entry = rx_node.neighbors.get(sender)
        if entry is None:
            entry = mac.NeighborEntry(sender, pl["seed"],
                                      freqs[pl["rx_freq_idx"]], self.now)
            rx_node.neighbors[sender] = entry
            rx_node.link_est[sender] = netstack.LinkEstimator(
                self.spec.routing.etx_window, self.spec.routing.etx_cap)
        else:
            entry.rx_freq_hz = freqs[pl["rx_freq_idx"]]
            entry.last_heard_s = self.now
        if pl["pending_freq_idx"] >= 0:
            rx_node.neighbor_pending[sender] = (pl["pending_freq_idx"],
                                                pl["freq_applies_at"])
        else:
            rx_node.neighbor_pending.pop(sender, None)
        rx_node.link_est[sender].record(True)
        # epoch catch-up: stale nodes adopt the newest epoch they hear
        if pl["epoch"] > rx_node.routing.epoch:
            rx_node.routing.epoch = pl["epoch"]
            rx_node.routing.clear()
        rx_node.routing.neighbor_table[sender] = netstack.NeighborRoute(
            advertised_etx=pl["path_etx"], last_update_s=self.now,
            epoch=pl["epoch"])
        if tx.kind == "hello":
            self._ensure_beacon_listen(rx_node, sender)
        # anti-entropy: push cached commands to neighbors whose beacons
        # show an older flood version (relay bursts can fail outright)
        their = pl.get("flood_versions", {})
        for origin in sorted(rx_node.flood_cache):
            msg, applies_at = rx_node.flood_cache[origin]
            if their.get(origin, -1) < msg.version:
                self._push_flood(rx_node.id, sender, msg, applies_at)
        self._reselect_parent(rx_node)

    def _ensure_beacon_listen(self, listener: SimNode, target_id: int) -> None:
        if target_id in listener.listen_chains:
            return
        listener.listen_chains.add(target_id)
        self._schedule_beacon_listen(listener.id, target_id)

    def _schedule_beacon_listen(self, listener_id: int, target_id: int) -> None:
        target = self.nodes[target_id]
        k = self.spec.mac.beacon_every_frames
        frame = int(self.now / target.sched.frame_s) + 1
        while not mac.is_beacon_frame(target.sched, frame, k):
            frame += 1
        t_b = mac.window_open_s(target.sched, frame)
        self.schedule(t_b, self._beacon_listen, listener_id, target_id)

    def _beacon_listen(self, listener_id: int, target_id: int) -> None:
        listener = self.nodes[listener_id]
        entry = listener.neighbors.get(target_id)
        if entry is None or not listener.up:
            listener.listen_chains.discard(target_id)
            return
        if entry.expired(self.now, self.spec.mac.neighbor_expiry_s):
            listener.listen_chains.discard(target_id)
            self._drop_neighbor(listener, target_id)
            return
        self._schedule_beacon_listen(listener_id, target_id)
        t0 = self.now
        t1 = t0 + self._beacon_airtime + self._guard_s
        listener.add_rx(t0, t1, self.disc_fi, "beacon_listen")
        self.schedule(t1, self._resolve_beacon_listen,
                      listener_id, target_id, t0, t1)

    def _resolve_beacon_listen(self, listener_id: int, target_id: int,
                               t0: float, t1: float) -> None:
        listener = self.nodes[listener_id]
        if not listener.up or listener.tx_busy(t0, t1):
            return                      # deaf while down or transmitting
        beacon = None
        for x in self.active_tx:
            if (x.sender == target_id and x.kind == "beacon"
                    and x.freq_idx == self.disc_fi
                    and t0 - 1e-9 <= x.t0 < t1):
                beacon = x
                break
        est = listener.link_est.get(target_id)
        if beacon is None:
            if est is not None:
                est.record(False)
            return
        self.store.record_attempt(beacon.sender, listener_id,
                                  beacon.freq_idx,
                                  self.channel.interval_of(beacon.t0))
        ok, rssi, snr = self._reception_result(beacon, listener_id)
        if ok:
            self.store.record_reception(beacon.sender, listener_id,
                                        beacon.freq_idx,
                                        self.channel.interval_of(beacon.t0),
                                        rssi, snr)
            self._process_beacon(listener, beacon)
        elif est is not None:
            est.record(False)

    def _drop_neighbor(self, node: SimNode, nb_id: int) -> None:
        node.neighbors.pop(nb_id, None)
        node.link_est.pop(nb_id, None)
        node.routing.neighbor_table.pop(nb_id, None)
        node.neighbor_pending.pop(nb_id, None)
        if node.routing.parent == nb_id:
            node.routing.parent = None
            node.routing.path_etx = 0.0 if node.routing.is_base else math.inf
            self._reselect_parent(node)

    # ------------------------------------------------------------------
    # physical transmission core

    def _begin_tx(self, sender_id: int, target_id: int | None, freq_idx: int,
                  kind: str, payload: dict, payload_bytes: int,
                  on_done=None) -> None:
        """Start a transmission now; resolve reception at its end."""
        sender = self.nodes[sender_id]
        if not sender.up:
            if on_done:
                on_done(False)
            return
        dur = airtime(self.spec.radio, payload_bytes)
        t0, t1 = self.now, self.now + dur
        self._tx_counter += 1
        tx = Transmission(self._tx_counter, sender_id, target_id, freq_idx,
                          t0, t1, kind, payload)
        self.active_tx.append(tx)
        sender.add_tx(t0, t1, freq_idx)
        self.schedule(t1, self._end_tx, tx, on_done)

    def _end_tx(self, tx: Transmission, on_done) -> None:
        if tx.kind == "beacon":
            # scheduled listeners resolve themselves; serve boot-time or
            # scripted listeners holding the discovery channel open
            for nid in sorted(self.nodes):
                node = self.nodes[nid]
                if nid == tx.sender or not node.up:
                    continue
                if not node.listening_on_discovery(tx.t0, tx.t1):
                    continue
                if node.tx_busy(tx.t0, tx.t1):
                    continue
                self.store.record_attempt(tx.sender, nid, tx.freq_idx,
                                          self.channel.interval_of(tx.t0))
                ok, rssi, snr = self._reception_result(tx, nid)
                if ok:
                    self.store.record_reception(
                        tx.sender, nid, tx.freq_idx,
                        self.channel.interval_of(tx.t0), rssi, snr)
                    self._process_beacon(node, tx)
            return
        if tx.target is None:
            if on_done:
                on_done(True)
            return
        if tx.kind in _METRIC_KINDS:
            self.store.record_attempt(tx.sender, tx.target, tx.freq_idx,
                                      self.channel.interval_of(tx.t0))
        ok = self._unicast_received(tx)
        if ok:
            self._dispatch_reception(tx)
        if on_done:
            on_done(ok)

    def _reception_result(self, tx: Transmission, rx_id: int):
        """(ok, rssi, snr) under SNR-threshold reception with destructive
        same-channel collisions.  No bookkeeping side effects."""
        rssi = self.channel.rssi_dbm(tx.sender, rx_id, tx.freq_idx, tx.t0)
        noise = self.channel.noise_floor_dbm(tx.freq_idx, (tx.t0 + tx.t1) / 2)
        snr = rssi - noise
        for other in self.active_tx:
            if other.tx_id == tx.tx_id or other.freq_idx != tx.freq_idx:
                continue
            if other.sender in (rx_id, tx.sender):
                continue
            if other.t0 < tx.t1 and tx.t0 < other.t1:
                if self.channel.audible(other.sender, rx_id, tx.freq_idx, tx.t0):
                    return False, rssi, snr
        u = rng.keyed_uniform(self.spec.seed, rng.STREAM_PACKET, tx.tx_id, rx_id)
        return self.channel.packet_success(snr, u), rssi, snr

    def _unicast_received(self, tx: Transmission) -> bool:
        """Did the target hear a unicast sent into its wake window?"""
        rx = self.nodes[tx.target]
        if not rx.up:
            return False
        if self._listen_freq(rx, tx.t0) != tx.freq_idx:
            return False
        frame = int(tx.t0 / rx.sched.frame_s + 1e-9)
        if mac.is_beacon_frame(rx.sched, frame,
                               self.spec.mac.beacon_every_frames):
            return False
        w_open = mac.window_open_s(rx.sched, frame)
        if not (w_open - 1e-9 <= tx.t0 <= w_open + rx.sched.window_s):
            return False
        if rx.tx_busy(tx.t0, tx.t1):
            return False
        ok, rssi, snr = self._reception_result(tx, tx.target)
        if not ok:
            return False
        if tx.kind in _METRIC_KINDS:
            self.store.record_reception(tx.sender, tx.target, tx.freq_idx,
                                        self.channel.interval_of(tx.t0),
                                        rssi, snr)
        w_end = w_open + rx.sched.window_s
        if tx.t1 > w_end:
            rx.add_rx(w_end, tx.t1, tx.freq_idx, "rx_extend")
        return True

    def _dispatch_reception(self, tx: Transmission) -> None:
        if tx.kind == "data":
            rec = self.packets[tx.payload["pkt_id"]]
            self._hop_received(tx.target, rec)
        elif tx.kind == "flood":
            p = tx.payload
            self._flood_arrived(tx.target, p["msg"], p["applies_at"], p["from"])
        elif tx.kind == "reset":
            self._handle_reset_msg(tx.target, tx.payload)
        elif tx.kind == "hello":
            self._process_beacon(self.nodes[tx.target], tx)
        # probe and reset_ack receptions need no further action

    def _window_freq(self, sched: mac.WakeupSchedule, t: float,
                     default_fi: int) -> int:
        """Frequency of a wake window at time t: campaign override first,
        then periodic discovery-frequency anchor windows, else the
        receiver's data frequency (as known to the caller)."""
        for (t0, t1, fi) in self._campaign_windows:
            if t0 <= t < t1:
                return fi
        frame = int(t / sched.frame_s + 1e-9)
        if mac.is_fallback_frame(sched, frame,
                                 self.spec.mac.fallback_every_frames):
            return self.disc_fi
        return default_fi

    def _listen_freq(self, node: SimNode, t: float) -> int:
        return self._window_freq(node.sched, t, node.current_freq_idx(t))

    def _sender_view_freq(self, sender: SimNode, target_id: int, t: float) -> int:
        pend = sender.neighbor_pending.get(target_id)
        if pend is not None and t >= pend[1]:
            view = pend[0]
        else:
            view = self.spec.plan.index_of(
                sender.neighbors[target_id].rx_freq_hz)
        return self._window_freq(self.nodes[target_id].sched, t, view)

    # ------------------------------------------------------------------
    # reliable unicast with per-hop retries

    def _send_unicast(self, sender_id: int, target_id: int, kind: str,
                      payload: dict, payload_bytes: int, on_result,
                      attempt: int = 0) -> None:
        """Rendezvous with the target's next wake window, transmit, wait
        for the ack, retry up to the configured limit."""
        sender = self.nodes[sender_id]
        if not sender.up or target_id not in sender.neighbors:
            on_result(False)
            return
        target = self.nodes[target_id]
        # the final retry goes to an anchor window on the discovery
        # frequency, so control traffic survives a jammed data channel
        last = attempt >= self.spec.mac.max_retries
        t_w = mac.next_rendezvous(target.sched, self.now + 1e-6,
                                  self.spec.mac.beacon_every_frames,
                                  self.spec.mac.fallback_every_frames,
                                  fallback_only=last)
        self.schedule(t_w, self._unicast_attempt, sender_id, target_id,
                      kind, payload, payload_bytes, on_result, attempt)

    def _unicast_attempt(self, sender_id: int, target_id: int, kind: str,
                         payload: dict, payload_bytes: int, on_result,
                         attempt: int) -> None:
        sender = self.nodes[sender_id]
        if not sender.up:
            on_result(False)
            return
        dur = airtime(self.spec.radio, payload_bytes)
        if sender.tx_busy(self.now, self.now + dur):
            # radio occupied (own beacon or another frame): miss this
            # window and try the next one without burning a retry
            self._send_unicast(sender_id, target_id, kind, payload,
                               payload_bytes, on_result, attempt)
            return
        fi = self._sender_view_freq(sender, target_id, self.now)
        needs_ack = kind in ("data", "hello", "flood", "reset", "reset_ack")

        def tx_done(received: bool, _fi=fi):
            est = sender.link_est.get(target_id)
            if est is not None and kind in ("data", "probe"):
                est.record(received)
                # keep the advertised cost consistent with fresh evidence
                self._reselect_parent(sender)
            if not needs_ack:
                on_result(received)
                return
            t_ack0 = self.now + ACK_TURNAROUND_S
            t_ack1 = t_ack0 + self._ack_airtime
            sender.add_rx(self.now, t_ack1 + self._guard_s, _fi, "ack_wait")
            if received:
                target = self.nodes[target_id]
                target.add_tx(t_ack0, t_ack1, _fi)
                self._tx_counter += 1
                ack = Transmission(self._tx_counter, target_id, sender_id,
                                   _fi, t_ack0, t_ack1, "ack", {})
                self.active_tx.append(ack)
                self.schedule(t_ack1, self._resolve_ack, ack, on_result,
                              sender_id, target_id, kind, payload,
                              payload_bytes, attempt)
            else:
                self._retry_or_fail(sender_id, target_id, kind, payload,
                                    payload_bytes, on_result, attempt)

        self._begin_tx(sender_id, target_id, fi, kind, payload,
                       payload_bytes, tx_done)

    def _resolve_ack(self, ack: Transmission, on_result, sender_id, target_id,
                     kind, payload, payload_bytes, attempt) -> None:
        ok, _, _ = self._reception_result(ack, sender_id)
        if ok:
            on_result(True)
        else:
            self._retry_or_fail(sender_id, target_id, kind, payload,
                                payload_bytes, on_result, attempt)

    def _retry_or_fail(self, sender_id, target_id, kind, payload,
                       payload_bytes, on_result, attempt) -> None:
        if attempt < self.spec.mac.max_retries:
            self._send_unicast(sender_id, target_id, kind, payload,
                               payload_bytes, on_result, attempt + 1)
        else:
            on_result(False)

    # ------------------------------------------------------------------
    # application traffic and convergecast

    def _generate_report(self, nid: int, kind: str, size: int,
                         period: float) -> None:
        self.schedule(self.now + period, self._generate_report,
                      nid, kind, size, period)
        if self.nodes[nid].up:
            self.send_report(nid, kind, size)

    def send_report(self, nid: int, kind: str, size: int,
                    payload: dict | None = None) -> int:
        """Originate one convergecast report; returns its packet id."""
        node = self.nodes[nid]
        self._pkt_counter += 1
        seq = node.next_seq(kind)
        if payload is None:
            payload = self._report_payload(nid, kind, seq)
        rec = PacketRecord(self._pkt_counter, nid, kind, seq, self.now,
                           size, payload)
        self.packets[rec.pkt_id] = rec
        self._enqueue(node, rec)
        return rec.pkt_id

    def _report_payload(self, nid: int, kind: str, seq: int) -> dict:
        if kind == "spl":
            laeq = rng.keyed_normal(self.spec.seed, rng.STREAM_TRAFFIC, nid,
                                    seq, mu=65.0, sigma=6.0)
            return {"laeq_db": round(laeq, 1)}
        if kind == "decision":
            cls = rng.hash_u64(self.spec.seed, nid, seq) % 8
            return {"top_class": int(cls), "count": 1 + int(cls) % 4}
        if kind == "status":
            return {"uptime_s": int(self.now - self.nodes[nid].boot_t)}
        return {}

    def _enqueue(self, node: SimNode, rec: PacketRecord) -> None:
        if node.id == self.base_id:
            self._deliver(rec)
            return
        if len(node.queue) >= self.spec.mac.queue_limit:
            self._finish_packet(rec, "dropped_queue")
            return
        node.queue.append(_QueuedPacket(rec, self.now))
        self._pump_queue(node.id)

    def _pump_queue(self, nid: int) -> None:
        node = self.nodes[nid]
        if node.sending or not node.queue or not node.up:
            return
        qp = node.queue[0]
        parent = node.routing.parent
        if parent is None or parent not in node.neighbors:
            if self.now - qp.held_since > ROUTE_HOLD_S:
                node.queue.popleft()
                self._finish_packet(qp.record, "undeliverable")
                self._pump_queue(nid)
            else:
                self.schedule(self.now + ROUTE_RETRY_S, self._pump_queue, nid)
            return
        node.sending = True
        qp.record.hops += 1

        def done(ok: bool, _qp=qp):
            node.sending = False
            if node.queue and node.queue[0] is _qp:
                node.queue.popleft()
            if not ok:
                self._finish_packet(_qp.record, "dropped_channel")
            self._pump_queue(nid)

        self._send_unicast(nid, parent, "data", {"pkt_id": qp.record.pkt_id},
                           qp.record.payload_bytes, done)

    def _hop_received(self, nid: int, rec: PacketRecord) -> None:
        node = self.nodes[nid]
        if rec.pkt_id in node.seen_pkts:
            return                               # duplicate after a lost ack
        node.seen_pkts[rec.pkt_id] = self.now
        if len(node.seen_pkts) > 4096:
            cutoff = self.now - DEDUP_HORIZON_S
            node.seen_pkts = {k: v for k, v in node.seen_pkts.items()
                              if v > cutoff}
        node.routing.children.add(rec.origin)
        if nid == self.base_id:
            self._deliver(rec)
        else:
            if len(node.queue) >= self.spec.mac.queue_limit:
                self._finish_packet(rec, "dropped_queue")
                return
            node.queue.append(_QueuedPacket(rec, self.now))
            self._pump_queue(nid)

    def _deliver(self, rec: PacketRecord) -> None:
        if rec.outcome != "in_flight":
            return
        rec.outcome = "delivered"
        rec.t_end = self.now
        gw = netstack.GatewayRecord(node_id=rec.origin, kind=rec.kind,
                                    seq=rec.seq,
                                    sim_time_ms=int(round(self.now * 1000)),
                                    payload=rec.payload)
        self._emit_gateway(gw)

    def _emit_gateway(self, gw: netstack.GatewayRecord) -> None:
        line = netstack.gateway_emit(gw)
        self.gateway_lines.append(line)
        if self.udp_sink is not None:
            self.udp_sink(line)

    def _finish_packet(self, rec: PacketRecord, outcome: str) -> None:
        if rec.outcome == "in_flight":
            rec.outcome = outcome
            rec.t_end = self.now

    # ------------------------------------------------------------------
    # configuration flood

    def flood_config(self, origin: int, mode: str, parameters: dict,
                     target_nodes=(), applies_at: float = 0.0) -> netstack.ConfigMessage:
        self._flood_version += 1
        msg = netstack.ConfigMessage(mode=mode, parameters=dict(parameters),
                                     version=self._flood_version,
                                     origin=origin, target_nodes=target_nodes)
        self._flood_arrived(origin, msg, applies_at, None)
        return msg

    def _flood_arrived(self, nid: int, msg: netstack.ConfigMessage,
                       applies_at: float, from_id: int | None) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        if not netstack.accept_flood(node.seen_floods, msg):
            return
        node.flood_cache[msg.origin] = (msg, applies_at)
        if msg.applies_to(nid):
            self.schedule(max(applies_at, self.now), self._apply_config,
                          nid, msg)
        for nb in sorted(node.neighbors):
            if nb == from_id:
                continue
            self._push_flood(nid, nb, msg, applies_at)

    def _push_flood(self, nid: int, nb: int, msg: netstack.ConfigMessage,
                    applies_at: float, bursts_left: int = 4) -> None:
        """Per-link reliable flood relay: repeat the ARQ burst a bounded
        number of times with backoff so a command survives bad moments."""
        node = self.nodes[nid]
        key = (nb, msg.origin, msg.version)
        if key in node.rerelay_pending:
            return
        node.rerelay_pending.add(key)

        def done(ok: bool) -> None:
            node.rerelay_pending.discard(key)
            if ok or bursts_left <= 1 or not node.up:
                return
            backoff = 2.0 + 4.0 * rng.keyed_uniform(
                self.spec.seed, rng.STREAM_MISC, nid, nb, msg.version,
                bursts_left)
            self.schedule(self.now + backoff, self._push_flood, nid, nb,
                          msg, applies_at, bursts_left - 1)

        self._send_unicast(nid, nb, "flood",
                           {"msg": msg, "applies_at": applies_at, "from": nid},
                           FLOOD_PAYLOAD_BYTES, done)

    def _apply_config(self, nid: int, msg: netstack.ConfigMessage) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        for key, value in msg.parameters.items():
            if key == "freq_plan":
                fi = int(value)
                if node.rx_freq_idx != fi or node.pending_freq is not None:
                    node.rx_freq_idx = fi
                    node.pending_freq = None
                    self.freq_timeline.append(
                        (self.now, nid, self.spec.plan.frequencies_hz[fi]))
                # the switch time was flooded with the command, so senders
                # update their view of every neighbor that applies it too
                for nb_id in sorted(node.neighbors):
                    if msg.applies_to(nb_id):
                        node.neighbors[nb_id].rx_freq_hz = \
                            self.spec.plan.frequencies_hz[fi]
                        node.neighbor_pending.pop(nb_id, None)
            else:
                node.params[key] = value

    # ------------------------------------------------------------------
    # distributed reset

    def trigger_reset(self, initiator: int) -> None:
        node = self.nodes[initiator]
        self._adopt_epoch(node, node.routing.epoch + 1, wave_parent=None,
                          initiator=initiator)

    def _adopt_epoch(self, node: SimNode, epoch: int, wave_parent: int | None,
                     initiator: int) -> None:
        node.routing.epoch = epoch
        node.routing.clear()
        node.wave = netstack.ResetWave(epoch=epoch, phase="propagate",
                                       initiator=initiator,
                                       wave_parent=wave_parent)
        targets = sorted(nb for nb in node.neighbors if nb != wave_parent)
        node.wave.pending_acks = set(targets)
        if not targets:
            self._wave_complete(node)
            return
        for nb in targets:
            self._send_unicast(node.id, nb, "reset",
                               {"epoch": epoch, "initiator": initiator,
                                "from": node.id},
                               RESET_PAYLOAD_BYTES,
                               self._make_wave_ack(node.id, nb))

    def _make_wave_ack(self, nid: int, nb: int):
        def done(ok: bool) -> None:
            node = self.nodes[nid]
            if node.wave is None or node.wave.phase != "propagate":
                return
            node.wave.pending_acks.discard(nb)
            if not node.wave.pending_acks:
                self._wave_complete(node)
        return done

    def _wave_complete(self, node: SimNode) -> None:
        if node.wave is None:
            return
        node.wave.phase = "complete"
        wp = node.wave.wave_parent
        if wp is not None and wp in node.neighbors:
            self._send_unicast(node.id, wp, "reset_ack",
                               {"epoch": node.wave.epoch, "from": node.id},
                               RESET_PAYLOAD_BYTES, lambda ok: None)

    def _handle_reset_msg(self, nid: int, payload: dict) -> None:
        node = self.nodes[nid]
        if payload["epoch"] > node.routing.epoch:
            self._adopt_epoch(node, payload["epoch"],
                              wave_parent=payload["from"],
                              initiator=payload["initiator"])
        # stale or duplicate wave: the MAC-level ack already confirmed receipt

    # ------------------------------------------------------------------
    # routing maintenance

    def _link_etx_map(self, node: SimNode) -> dict:
        out = {}
        for nb in sorted(node.link_est):
            est = node.link_est[nb]
            if est.attempts > 0 and nb in node.routing.neighbor_table:
                out[nb] = est.etx()
        return out

    def _reselect_parent(self, node: SimNode) -> None:
        if node.routing.is_base or not node.up:
            return
        link_etx = self._link_etx_map(node)
        st = node.routing
        # refresh through the current parent before applying the guard
        if st.parent is not None:
            route = st.neighbor_table.get(st.parent)
            if (route is None or route.epoch != st.epoch
                    or st.parent not in link_etx):
                st.parent = None
                st.path_etx = math.inf
            else:
                st.path_etx = route.advertised_etx + link_etx[st.parent]
        parent, cost = netstack.select_parent(st, link_etx)
        if parent is not None and cost < st.path_etx:
            st.parent, st.path_etx = parent, cost
        if st.parent is not None:
            self._pump_queue(node.id)

    def routing_legal(self, tol: float = 1e-6) -> tuple:
        """Quiescent-state health check of the routing tree.

        Every up node must reach the base by parent pointers in < N
        steps, and its path cost must equal its parent's advertised cost
        plus the current link estimate.  Returns (ok, reason).
        """
        up = [n for n in self.nodes.values() if n.up]
        for node in up:
            if node.routing.is_base:
                if node.routing.path_etx != 0.0 or node.routing.parent is not None:
                    return False, f"base {node.id} has non-root state"
                continue
            seen = set()
            cur = node
            while not cur.routing.is_base:
                if cur.id in seen or cur.routing.parent is None:
                    return False, f"node {node.id} does not reach the base"
                seen.add(cur.id)
                if len(seen) >= len(self.nodes):
                    return False, f"cycle on the path from node {node.id}"
                cur = self.nodes[cur.routing.parent]
            parent = node.routing.parent
            route = node.routing.neighbor_table.get(parent)
            est = node.link_est.get(parent)
            if route is None or est is None or est.attempts == 0:
                return False, f"node {node.id} lacks evidence for its parent"
            expect = route.advertised_etx + est.etx()
            if abs(node.routing.path_etx - expect) > tol:
                return False, (f"node {node.id} cost {node.routing.path_etx} "
                               f"!= {expect}")
        return True, "ok"

    # ------------------------------------------------------------------
    # frequency-selection campaigns

    def _setup_freqsel(self) -> None:
        fs = self.spec.freqsel
        if fs.method in ("none", "offline"):
            return
        start = fs.start_s
        if start <= 0:
            start = self.spec.mac.join_listen_s + 60.0
        start = math.ceil(start / METRIC_INTERVAL_S) * METRIC_INTERVAL_S
        while start < self.spec.duration_s:
            self.schedule(start, self._start_campaign, start)
            if fs.period_s <= 0:
                break
            start += math.ceil(fs.period_s / METRIC_INTERVAL_S) * METRIC_INTERVAL_S

    def _start_campaign(self, t0: float) -> None:
        fs = self.spec.freqsel
        # data candidates: every plan channel except the protected
        # discovery frequency, which stays reserved for control
        scan = [fi for fi in range(len(self.spec.plan.frequencies_hz))
                if fi != self.disc_fi]
        if fs.method == "lowpower":
            # passive noise sweep over every frequency first
            t = t0
            for fi in scan:
                self._campaign_windows.append((t, t + METRIC_INTERVAL_S, fi))
                self._schedule_noise_samples(t, fi)
                t += METRIC_INTERVAL_S
            self.schedule(t, self._campaign_active_stage, t0, t, None)
        else:
            self._campaign_active_stage(t0, t0, scan)

    def _campaign_active_stage(self, t_start: float, t0: float, scan) -> None:
        fs = self.spec.freqsel
        freqs_hz = self.spec.plan.frequencies_hz
        passive_span = None
        if scan is None:
            # keep the k quietest frequencies from the passive sweep
            passive_span = (t_start, t0)
            i0 = int(t_start // METRIC_INTERVAL_S)
            i1 = int(t0 // METRIC_INTERVAL_S)
            rows = [r for r in self.store.noise_rows(freqs_hz)
                    if i0 <= r.interval < i1]
            ranked = freqsel.passive_noise_ranking(rows)
            k = min(fs.k, len(ranked))
            scan = sorted(self.spec.plan.index_of(f) for f, _ in ranked[:k])
        t = t0
        for fi in scan:
            for _ in range(fs.intervals_per_freq):
                self._campaign_windows.append((t, t + METRIC_INTERVAL_S, fi))
                self._schedule_noise_samples(t, fi)
                self._schedule_probes(t, fi)
                t += METRIC_INTERVAL_S
        self.schedule(t, self._finish_campaign, t_start, t0, t, tuple(scan),
                      passive_span)

    def _schedule_noise_samples(self, t0: float, fi: int) -> None:
        fs = self.spec.freqsel
        step = METRIC_INTERVAL_S / max(1, fs.noise_samples_per_interval)
        for nid in sorted(self.nodes):
            for j in range(fs.noise_samples_per_interval):
                self.schedule(t0 + (j + 0.5) * step, self._noise_sample, nid, fi)

    def _noise_sample(self, nid: int, fi: int) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        dbm = self.channel.noise_floor_dbm(fi, self.now)
        self.store.record_noise(nid, fi, self.channel.interval_of(self.now), dbm)
        node.add_rx(self.now, self.now + NOISE_SAMPLE_S, fi, "noise_scan")

    def _schedule_probes(self, t0: float, fi: int) -> None:
        fs = self.spec.freqsel
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            targets = sorted(node.neighbors)
            agenda = [nb for _ in range(fs.probes_per_interval) for nb in targets]
            for j, nb in enumerate(agenda):
                frame_t = t0 + j * node.sched.frame_s
                if frame_t + node.sched.frame_s > t0 + METRIC_INTERVAL_S:
                    break
                self.schedule(frame_t, self._send_probe, nid, nb)

    def _send_probe(self, sender_id: int, target_id: int) -> None:
        sender = self.nodes[sender_id]
        if not sender.up or target_id not in sender.neighbors:
            return
        target = self.nodes[target_id]
        t_w = mac.next_rendezvous(target.sched, self.now,
                                  self.spec.mac.beacon_every_frames)
        if t_w - self.now > 2 * target.sched.frame_s:
            return
        self.schedule(t_w, self._probe_attempt, sender_id, target_id)

    def _probe_attempt(self, sender_id: int, target_id: int) -> None:
        sender = self.nodes[sender_id]
        if not sender.up or target_id not in sender.neighbors:
            return
        dur = airtime(self.spec.radio, PROBE_PAYLOAD_BYTES)
        if sender.tx_busy(self.now, self.now + dur):
            return
        fi = self._sender_view_freq(sender, target_id, self.now)
        self._begin_tx(sender_id, target_id, fi, "probe", {},
                       PROBE_PAYLOAD_BYTES)

    def _campaign_link_rows(self, t0: float, t1: float, scan_freqs) -> list:
        i0, i1 = int(t0 // METRIC_INTERVAL_S), int(t1 // METRIC_INTERVAL_S)
        freq_set = set(scan_freqs)
        return [r for r in self.store.link_rows(self.spec.plan.frequencies_hz)
                if i0 <= r.interval < i1 and r.freq_hz in freq_set
                and r.attempts > 0]

    def _finish_campaign(self, t_start: float, active_t0: float,
                         active_t1: float, scan, passive_span) -> None:
        fs = self.spec.freqsel
        freqs_hz = self.spec.plan.frequencies_hz
        scan_freqs = tuple(freqs_hz[fi] for fi in scan)
        rows = self._campaign_link_rows(active_t0, active_t1, scan_freqs)
        if not rows:
            return
        ctx = freqsel.build_context(rows, noise_term=fs.noise_term)
        if fs.scope == "network":
            chosen, _ = freqsel.online_select(rows, ctx=ctx,
                                              link_weighting=fs.link_weighting)
            self.selections.append(SelectionRecord(
                self.now, fs.method, fs.scope, None, chosen,
                active_t0, active_t1,
                passive_span[0] if passive_span else None,
                passive_span[1] if passive_span else None,
                scan_freqs, fs.k))
            applies_at = self.now + fs.activation_delay_s
            self.flood_config(self.base_id, "broadcast",
                              {"freq_plan": self.spec.plan.index_of(chosen)},
                              applies_at=applies_at)
            base = self.nodes[self.base_id]
            self._emit_gateway(netstack.GatewayRecord(
                node_id=self.base_id, kind="link_metrics",
                seq=base.next_seq("link_metrics"),
                sim_time_ms=int(round(self.now * 1000)),
                payload={"method": fs.method, "scope": fs.scope,
                         "chosen_mhz": round(chosen / 1e6, 4)}))
        else:
            delay = max(fs.activation_delay_s,
                        self.spec.mac.beacon_period_s + 5.0)
            for nid in sorted(self.nodes):
                node = self.nodes[nid]
                mine = [r for r in rows if r.link_id.endswith(f"->{nid}")]
                if not mine:
                    continue
                chosen, _ = freqsel.online_select(
                    mine, ctx=ctx, link_weighting=fs.link_weighting)
                self.selections.append(SelectionRecord(
                    self.now, fs.method, fs.scope, nid, chosen,
                    active_t0, active_t1,
                    passive_span[0] if passive_span else None,
                    passive_span[1] if passive_span else None,
                    scan_freqs, fs.k))
                fi = self.spec.plan.index_of(chosen)
                if fi != node.current_freq_idx(self.now):
                    node.pending_freq = (fi, self.now + delay)
                    self.freq_timeline.append((self.now + delay, nid, chosen))
                if nid != self.base_id:
                    self.send_report(nid, "link_metrics", 10,
                                     {"freq_mhz": round(chosen / 1e6, 4)})

    # ------------------------------------------------------------------
    # faults and scripted operations

    def _apply_fault(self, f) -> None:
        if f.kind in ("link_down", "link_up"):
            a, b = f.link
            self.channel.set_link_blocked(a, b, f.kind == "link_down")
            return
        if f.kind == "reset":
            self.trigger_reset(f.node if f.node is not None else self.base_id)
            return
        node = self.nodes[f.node]
        if f.kind == "node_down":
            if node.up:
                node.up = False
                node._down_since = self.now
                node.queue.clear()
                node.sending = False
            return
        if f.kind == "node_up" and not node.up:
            node.up = True
            node.boot_t = self.now
            if node._down_since is not None:
                node.down_intervals.append((node._down_since, self.now))
                node._down_since = None
            # cold reboot: volatile protocol state is gone
            node.neighbors.clear()
            node.link_est.clear()
            node.neighbor_pending.clear()
            node.listen_chains.clear()
            node.routing = netstack.RoutingState(node.id,
                                                 is_base=node.routing.is_base)
            node.wave = None
            self.schedule_discover(node.id, self.now,
                                   self.spec.mac.beacon_period_s + 2.0,
                                   announce=True)

    def schedule_discover(self, nid: int, t: float, duration: float,
                          announce: bool = False) -> None:
        """Scripted discovery listen on the discovery frequency."""
        self.schedule(t, self._begin_discover, nid, duration, announce)

    def _begin_discover(self, nid: int, duration: float, announce: bool) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        node.listen_sessions.append((self.now, self.now + duration))
        node.add_rx(self.now, self.now + duration, self.disc_fi, "discover")
        self.schedule(self.now + duration, self._finish_discover, nid, announce)

    def _finish_discover(self, nid: int, announce: bool) -> None:
        node = self.nodes[nid]
        if not node.up:
            return
        for nb in sorted(node.neighbors):
            self._ensure_beacon_listen(node, nb)
        if announce:
            payload = self._beacon_payload(node) | {"hello": True}
            for nb in sorted(node.neighbors):
                self._send_unicast(nid, nb, "hello", payload,
                                   HELLO_PAYLOAD_BYTES, lambda ok: None)
        self._reselect_parent(node)
