"""Convergecast routing state, configuration flooding, distributed reset
types, and the gateway's JSON record schema.

The stateful protocol behavior (forwarding, retries, wave propagation)
lives in the event engine; this module holds the protocol data types and
the pure decision rules so they can be tested in isolation.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

DEFAULT_ETX_WINDOW = 32
DEFAULT_ETX_CAP = 16.0

CONFIG_PARAMETERS = ("ml_op_time", "status_period", "spl_thresh",
                     "calib_config", "freq_plan", "aggregation_period")

CONFIG_MODES = ("local", "broadcast", "multicast")


class LinkEstimator:
    """Windowed ETX estimate of one outgoing link.

    ETX is attempts over successes across the last `window` transmission
    events (data attempts or expected beacons), capped when the link is
    dead.  With no history the estimate is the cap's neutral value 1.0
    only after a first success; callers should not route over links with
    no evidence.
    """

    def __init__(self, window: int = DEFAULT_ETX_WINDOW, cap: float = DEFAULT_ETX_CAP):
        self.window = window
        self.cap = cap
        self._events: deque = deque(maxlen=window)

    def record(self, success: bool) -> None:
        self._events.append(bool(success))

    @property
    def attempts(self) -> int:
        return len(self._events)

    def etx(self) -> float:
        if not self._events:
            raise ValueError("no transmission attempts recorded yet")
        successes = sum(self._events)
        if successes == 0:
            return self.cap
        return min(len(self._events) / successes, self.cap)


def etx_update(attempts: int, successes: int, cap: float = DEFAULT_ETX_CAP) -> float:
    """Windowed ETX from raw counts: attempts/successes, capped."""
    if attempts < 1:
        raise ValueError("need at least one transmission attempt")
    if successes == 0:
        return cap
    return min(attempts / successes, cap)


@dataclass
class NeighborRoute:
    """A neighbor's advertised routing state as last heard."""

    advertised_etx: float
    last_update_s: float
    epoch: int = 0


@dataclass
class RoutingState:
    """Per-node convergecast routing state (gradient on cumulative ETX)."""

    node_id: int
    is_base: bool = False
    parent: int | None = None
    path_etx: float = math.inf
    neighbor_table: dict = field(default_factory=dict)   # id -> NeighborRoute
    children: set = field(default_factory=set)
    epoch: int = 0

    def __post_init__(self):
        if self.is_base:
            self.parent = None
            self.path_etx = 0.0

    def clear(self) -> None:
        """Drop routing state (reset wave); discovery state is untouched."""
        self.parent = None
        self.path_etx = 0.0 if self.is_base else math.inf
        self.children.clear()


def select_parent(state: RoutingState, link_etx: dict) -> tuple:
    """Choose the next-hop parent from advertised path costs.

    Eligible candidates must advertise a path ETX strictly below the
    node's own (monotonicity loop guard; callers refresh their own cost
    through the current parent before re-selecting).  Among candidates
    the minimum of advertised + link ETX wins, ties broken by lowest
    node id.  Returns (parent_id or None, new_path_etx).
    """
    if state.is_base:
        return None, 0.0
    best = None
    for nb_id in sorted(state.neighbor_table):
        route = state.neighbor_table[nb_id]
        if route.epoch != state.epoch:
            continue
        if nb_id not in link_etx:
            continue
        if not route.advertised_etx < state.path_etx:
            continue
        total = route.advertised_etx + link_etx[nb_id]
        if best is None or total < best[1]:
            best = (nb_id, total)
    if best is None:
        return None, math.inf
    return best


@dataclass(frozen=True)
class ConfigMessage:
    """Reconfiguration command disseminated from an origin node."""

    mode: str
    parameters: dict
    version: int
    origin: int
    target_nodes: tuple = ()

    def __post_init__(self):
        if self.mode not in CONFIG_MODES:
            raise ValueError(f"mode must be one of {CONFIG_MODES}")
        if self.mode == "multicast" and not self.target_nodes:
            raise ValueError("multicast requires non-empty target_nodes")
        for key in self.parameters:
            if key not in CONFIG_PARAMETERS:
                raise ValueError(f"unknown configuration parameter {key!r}")
        object.__setattr__(self, "target_nodes", tuple(self.target_nodes))

    def applies_to(self, node_id: int) -> bool:
        if self.mode == "local":
            return node_id == self.origin
        if self.mode == "broadcast":
            return True
        return node_id in self.target_nodes


def accept_flood(seen_versions: dict, msg: ConfigMessage) -> bool:
    """Duplicate/stale suppression keyed by (origin, version).

    Returns True exactly once per (origin, version) with monotonically
    increasing versions per origin; mutates seen_versions on acceptance.
    """
    last = seen_versions.get(msg.origin, -1)
    if msg.version <= last:
        return False
    seen_versions[msg.origin] = msg.version
    return True


RESET_PHASES = ("idle", "propagate", "complete")


@dataclass
class ResetWave:
    """Progress of one epoch-stamped reset wave at a node."""

    epoch: int
    phase: str = "idle"
    initiator: int | None = None
    wave_parent: int | None = None
    pending_acks: set = field(default_factory=set)

    def __post_init__(self):
        if self.phase not in RESET_PHASES:
            raise ValueError(f"phase must be one of {RESET_PHASES}")


# -- gateway JSON interface -------------------------------------------------

GATEWAY_KINDS = ("decision", "spl", "status", "link_metrics")
GATEWAY_MAX_BYTES = 512


class OversizePayloadError(ValueError):
    """Serialized gateway record exceeded the datagram budget."""


@dataclass(frozen=True)
class GatewayRecord:
    """One upstream record as emitted on the gateway socket."""

    node_id: int
    kind: str
    seq: int
    sim_time_ms: int
    payload: dict

    def __post_init__(self):
        if self.kind not in GATEWAY_KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}; "
                             f"expected one of {GATEWAY_KINDS}")
        if self.seq < 0 or self.sim_time_ms < 0:
            raise ValueError("seq and sim_time_ms must be >= 0")


def gateway_emit(record: GatewayRecord) -> str:
    """Serialize one record to a single-line JSON datagram.

    Field order is fixed (node_id, kind, seq, sim_time_ms, payload) and
    the result must fit in 512 bytes.
    """
    obj = {"node_id": record.node_id, "kind": record.kind, "seq": record.seq,
           "sim_time_ms": record.sim_time_ms, "payload": record.payload}
    text = json.dumps(obj, separators=(",", ":"), sort_keys=False)
    if len(text.encode("utf-8")) > GATEWAY_MAX_BYTES:
        raise OversizePayloadError(
            f"record serializes to {len(text.encode('utf-8'))} bytes, "
            f"limit is {GATEWAY_MAX_BYTES}")
    return text


def parse_gateway_record(text: str) -> GatewayRecord:
    obj = json.loads(text)
    return GatewayRecord(node_id=obj["node_id"], kind=obj["kind"],
                         seq=obj["seq"], sim_time_ms=obj["sim_time_ms"],
                         payload=obj["payload"])
