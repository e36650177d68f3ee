"""Scenario definition, YAML ingestion, validation, and defaulted echo.

A scenario file is a human-editable YAML mapping.  Loading resolves every
default and validates the result; the fully-defaulted echo written next
to run outputs is sufficient to reproduce the run byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import yaml

from .channel import FadingParams, InterfererSpec, PathLossModel
from .energy import HarvesterSpec, PowerProfile
from .phy import BAND_HIGH_HZ, BAND_LOW_HZ, ChannelPlan, RadioConfig, us915_plan


class ScenarioError(ValueError):
    """Validation failure; message lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class NodeSpec:
    id: int
    position_m: tuple
    role: str = "edge"          # "edge" or "base"


@dataclass(frozen=True)
class MacParams:
    frame_ms: int = 1000
    wake_window_ms: int = 11
    beacon_period_s: float = 60.0      # steady-state beacon cadence
    fallback_every_frames: int = 8     # anchor windows on the discovery freq
    join_listen_s: float = 5.0         # boot-time discovery listen
    join_beacons: int = 3
    beacon_payload_bytes: int = 14     # id, seed, freq, cost, epoch, versions
    ack_payload_bytes: int = 2
    guard_ms: float = 2.0
    max_retries: int = 3
    neighbor_expiry_s: float = 600.0
    queue_limit: int = 16

    @property
    def beacon_every_frames(self) -> int:
        return max(1, int(round(self.beacon_period_s * 1000 / self.frame_ms)))


@dataclass(frozen=True)
class RoutingParams:
    etx_window: int = 32
    etx_cap: float = 16.0


@dataclass(frozen=True)
class TrafficSpec:
    """Report periods in seconds; 0 disables a source."""

    decision_period_s: float = 60.0
    decision_payload_bytes: int = 16
    spl_period_s: float = 60.0
    status_period_s: float = 3600.0


@dataclass(frozen=True)
class FreqselSpec:
    method: str = "none"               # none | online | lowpower | offline
    scope: str = "network"             # network | local
    start_s: float = 0.0
    period_s: float = 0.0              # 0 = run once at start_s
    k: int = 5
    intervals_per_freq: int = 2
    probes_per_interval: int = 4
    noise_samples_per_interval: int = 10
    activation_delay_s: float = 10.0
    noise_term: str = "inverted"
    link_weighting: str = "per_link"


@dataclass(frozen=True)
class BatterySpec:
    capacity_wh: float = 12.0
    initial_fraction: float = 1.0
    simulate: bool = False
    step_h: float = 0.25


@dataclass(frozen=True)
class EnergyParams:
    tx_power_w: float = 2.2
    rx_power_w: float = 0.04
    profile: PowerProfile = field(default_factory=PowerProfile)
    harvester: HarvesterSpec = field(default_factory=HarvesterSpec)
    battery: BatterySpec = field(default_factory=BatterySpec)


@dataclass(frozen=True)
class FaultSpec:
    t_s: float
    kind: str                           # link_down | link_up | node_down | node_up | reset
    node: int | None = None
    link: tuple | None = None


@dataclass(frozen=True)
class ChannelParams:
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    fading: FadingParams = field(default_factory=FadingParams)
    noise_figure_db: float = 6.0
    antenna_gains_db: float = 0.0
    reception_width_db: float = 1.0
    interferers: tuple = ()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    seed: int
    duration_s: float
    nodes: tuple
    radio: RadioConfig
    plan: ChannelPlan
    initial_data_freq_hz: float
    channel: ChannelParams
    mac: MacParams
    routing: RoutingParams
    traffic: TrafficSpec
    freqsel: FreqselSpec
    energy: EnergyParams
    faults: tuple = ()

    @property
    def base_id(self) -> int:
        return next(n.id for n in self.nodes if n.role == "base")


_FAULT_KINDS = ("link_down", "link_up", "node_down", "node_up", "reset")


def _build(problems, label, factory, kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{label}: {exc}")
        return None


def scenario_from_dict(raw: dict) -> ScenarioSpec:
    """Build a validated spec from a raw mapping, applying all defaults."""
    problems: list[str] = []
    raw = dict(raw or {})

    name = str(raw.get("name", "scenario"))
    seed = int(raw.get("seed", 1))
    duration_s = float(raw.get("duration_s", 3600.0))
    if duration_s < 0:
        problems.append("duration_s: must be >= 0")

    nodes = []
    seen_ids = set()
    base_count = 0
    for i, nd in enumerate(raw.get("nodes", []) or []):
        try:
            nid = int(nd["id"])
            pos = tuple(float(x) for x in nd["pos"])
            role = str(nd.get("role", "edge"))
            if role not in ("edge", "base"):
                problems.append(f"nodes[{i}].role: must be 'edge' or 'base'")
            if len(pos) != 2:
                problems.append(f"nodes[{i}].pos: expected [x, y] meters")
            if nid in seen_ids:
                problems.append(f"nodes[{i}].id: duplicate node id {nid}")
            seen_ids.add(nid)
            base_count += role == "base"
            nodes.append(NodeSpec(nid, pos, role))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"nodes[{i}]: {exc}")
    if not nodes:
        problems.append("nodes: at least one node is required")
    if base_count != 1:
        problems.append(f"nodes: exactly one base required, found {base_count}")

    radio = _build(problems, "radio", RadioConfig, dict(raw.get("radio", {}) or {}))

    plan_raw = dict(raw.get("plan", {}) or {})
    plan = None
    try:
        if "frequencies_mhz" in plan_raw:
            freqs = tuple(float(f) * 1e6 for f in plan_raw["frequencies_mhz"])
            disc_idx = int(plan_raw.get("discovery_index", 0))
            plan = ChannelPlan(freqs,
                               float(plan_raw.get("channel_width_hz", 500e3)),
                               freqs[disc_idx])
        else:
            plan = us915_plan(int(plan_raw.get("num_channels", 52)),
                              float(plan_raw.get("channel_width_hz", 500e3)),
                              int(plan_raw.get("discovery_index", 0)))
    except (ValueError, IndexError, TypeError) as exc:
        problems.append(f"plan: {exc}")

    initial_data_freq_hz = None
    if plan is not None:
        idx = plan_raw.get("initial_data_index")
        if idx is None:
            # default to the first non-discovery channel, if there is one
            candidates = [f for f in plan.frequencies_hz
                          if f != plan.discovery_freq_hz]
            initial_data_freq_hz = candidates[0] if candidates else plan.frequencies_hz[0]
        else:
            try:
                initial_data_freq_hz = plan.frequencies_hz[int(idx)]
            except (IndexError, ValueError):
                problems.append(f"plan.initial_data_index: no channel {idx}")

    ch_raw = dict(raw.get("channel", {}) or {})
    interferers = []
    for i, sp in enumerate(ch_raw.pop("interferers", []) or []):
        sp = dict(sp)
        if "band_mhz" in sp:
            lo, hi = sp.pop("band_mhz")
            sp["band_hz"] = (float(lo) * 1e6, float(hi) * 1e6)
        built = _build(problems, f"channel.interferers[{i}]", InterfererSpec, sp)
        if built is not None:
            interferers.append(built)
    fading = _build(problems, "channel.fading", FadingParams,
                    dict(ch_raw.pop("fading", {}) or {}))
    path_loss = _build(problems, "channel.path_loss", PathLossModel,
                       dict(ch_raw.pop("path_loss", {}) or {}))
    channel = _build(problems, "channel", ChannelParams, dict(
        path_loss=path_loss, fading=fading,
        noise_figure_db=float(ch_raw.pop("noise_figure_db", 6.0)),
        antenna_gains_db=float(ch_raw.pop("antenna_gains_db", 0.0)),
        reception_width_db=float(ch_raw.pop("reception_width_db", 1.0)),
        interferers=tuple(interferers)))
    for key in ch_raw:
        problems.append(f"channel.{key}: unknown field")

    mac = _build(problems, "mac", MacParams, dict(raw.get("mac", {}) or {}))
    routing = _build(problems, "routing", RoutingParams, dict(raw.get("routing", {}) or {}))
    traffic = _build(problems, "traffic", TrafficSpec, dict(raw.get("traffic", {}) or {}))
    freqsel = _build(problems, "freqsel", FreqselSpec, dict(raw.get("freqsel", {}) or {}))
    if freqsel is not None:
        if freqsel.method not in ("none", "online", "lowpower", "offline"):
            problems.append(f"freqsel.method: unknown method {freqsel.method!r}")
        if freqsel.scope not in ("network", "local"):
            problems.append(f"freqsel.scope: must be 'network' or 'local'")

    en_raw = dict(raw.get("energy", {}) or {})
    profile = _build(problems, "energy.profile", PowerProfile,
                     dict(en_raw.pop("profile", {}) or {}))
    harvester = _build(problems, "energy.harvester", HarvesterSpec,
                       dict(en_raw.pop("harvester", {}) or {}))
    battery = _build(problems, "energy.battery", BatterySpec,
                     dict(en_raw.pop("battery", {}) or {}))
    energy = _build(problems, "energy", EnergyParams, dict(
        tx_power_w=float(en_raw.pop("tx_power_w", 2.2)),
        rx_power_w=float(en_raw.pop("rx_power_w", 0.04)),
        profile=profile, harvester=harvester, battery=battery))
    for key in en_raw:
        problems.append(f"energy.{key}: unknown field")

    faults = []
    for i, f in enumerate(raw.get("faults", []) or []):
        f = dict(f)
        try:
            link = tuple(int(x) for x in f["link"]) if "link" in f else None
            fault = FaultSpec(t_s=float(f["t"]), kind=str(f["kind"]),
                              node=int(f["node"]) if "node" in f else None,
                              link=link)
            if fault.kind not in _FAULT_KINDS:
                problems.append(f"faults[{i}].kind: unknown kind {fault.kind!r}")
            faults.append(fault)
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"faults[{i}]: {exc}")

    if problems:
        raise ScenarioError(problems)

    return ScenarioSpec(name=name, seed=seed, duration_s=duration_s,
                        nodes=tuple(nodes), radio=radio, plan=plan,
                        initial_data_freq_hz=initial_data_freq_hz,
                        channel=channel, mac=mac, routing=routing,
                        traffic=traffic, freqsel=freqsel, energy=energy,
                        faults=tuple(faults))


def load_scenario(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ScenarioError([f"{path}: top level must be a mapping"])
    return scenario_from_dict(raw)


def echo_scenario(spec: ScenarioSpec) -> dict:
    """Fully-defaulted mapping that reproduces this spec when reloaded."""
    return {
        "name": spec.name,
        "seed": spec.seed,
        "duration_s": spec.duration_s,
        "nodes": [{"id": n.id, "pos": list(n.position_m), "role": n.role}
                  for n in spec.nodes],
        "radio": {
            "center_freq_hz": spec.radio.center_freq_hz,
            "bandwidth_hz": spec.radio.bandwidth_hz,
            "spreading_factor": spec.radio.spreading_factor,
            "coding_rate": f"4/{int(4 / spec.radio.coding_rate)}",
            "tx_power_dbm": spec.radio.tx_power_dbm,
            "preamble_symbols": spec.radio.preamble_symbols,
            "explicit_header": spec.radio.explicit_header,
            "crc_on": spec.radio.crc_on,
        },
        "plan": {
            "frequencies_mhz": [f / 1e6 for f in spec.plan.frequencies_hz],
            "channel_width_hz": spec.plan.channel_width_hz,
            "discovery_index": spec.plan.index_of(spec.plan.discovery_freq_hz),
            "initial_data_index": spec.plan.index_of(spec.initial_data_freq_hz),
        },
        "channel": {
            "path_loss": asdict(spec.channel.path_loss),
            "fading": asdict(spec.channel.fading),
            "noise_figure_db": spec.channel.noise_figure_db,
            "antenna_gains_db": spec.channel.antenna_gains_db,
            "reception_width_db": spec.channel.reception_width_db,
            "interferers": [asdict(i) | {"band_hz": list(i.band_hz)}
                            for i in spec.channel.interferers],
        },
        "mac": asdict(spec.mac),
        "routing": asdict(spec.routing),
        "traffic": asdict(spec.traffic),
        "freqsel": asdict(spec.freqsel),
        "energy": {
            "tx_power_w": spec.energy.tx_power_w,
            "rx_power_w": spec.energy.rx_power_w,
            "profile": asdict(spec.energy.profile),
            "harvester": asdict(spec.energy.harvester),
            "battery": asdict(spec.energy.battery),
        },
        "faults": [{"t": f.t_s, "kind": f.kind}
                   | ({"node": f.node} if f.node is not None else {})
                   | ({"link": list(f.link)} if f.link is not None else {})
                   for f in spec.faults],
    }


def dump_scenario(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(echo_scenario(spec), sort_keys=False)
