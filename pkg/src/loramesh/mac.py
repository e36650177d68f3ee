"""Receiver-centric, pseudo-random, duty-cycled medium access.

Each node wakes once per frame in a receive window whose slot is a hash
of (seed, frame index); senders that know a receiver's seed compute the
same slot and transmit into the window.  Neighbor discovery runs on a
fixed frequency that never changes under adaptation: nodes periodically
replace one of their own wake windows with a beacon transmission there,
carrying (node id, seed, receive frequency) plus piggybacked routing
state.

The slot hash is the splitmix64 finalizer from loramesh.rng, so any
implementation with the same constants reproduces the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .rng import hash_u64

DEFAULT_FRAME_MS = 1000
DEFAULT_WAKE_WINDOW_MS = 11   # 11 / 1000 realizes the 1.1 % duty target


@dataclass(frozen=True)
class WakeupSchedule:
    """Deterministic pseudo-random wake schedule of one receiver."""

    seed: int
    frame_ms: int = DEFAULT_FRAME_MS
    wake_window_ms: int = DEFAULT_WAKE_WINDOW_MS

    def __post_init__(self):
        if self.wake_window_ms <= 0 or self.frame_ms <= 0:
            raise ValueError("frame and window lengths must be positive")
        if self.wake_window_ms > self.frame_ms:
            raise ValueError("wake window cannot exceed the frame")

    @property
    def slots_per_frame(self) -> int:
        return self.frame_ms // self.wake_window_ms

    @property
    def duty_cycle(self) -> float:
        return self.wake_window_ms / self.frame_ms

    @property
    def frame_s(self) -> float:
        return self.frame_ms / 1000.0

    @property
    def window_s(self) -> float:
        return self.wake_window_ms / 1000.0


def wake_slot(sched: WakeupSchedule, frame_index: int) -> int:
    """Slot of the wake window in the given frame."""
    if frame_index < 0:
        raise ValueError("frame_index must be >= 0")
    return hash_u64(sched.seed, frame_index) % sched.slots_per_frame


def window_open_s(sched: WakeupSchedule, frame_index: int) -> float:
    """Absolute time at which the wake window of a frame opens."""
    slot = wake_slot(sched, frame_index)
    return frame_index * sched.frame_s + slot * sched.window_s


def is_beacon_frame(sched: WakeupSchedule, frame_index: int,
                    beacon_every_frames: int) -> bool:
    """Frames in which the node transmits its discovery beacon instead of
    opening a receive window."""
    if beacon_every_frames <= 0:
        return False
    return frame_index % beacon_every_frames == sched.seed % beacon_every_frames


def is_fallback_frame(sched: WakeupSchedule, frame_index: int,
                      fallback_every_frames: int) -> bool:
    """Frames whose wake window stays on the discovery frequency.

    These periodic anchor windows keep every node reachable for control
    traffic even when its data frequency is unusable, mirroring the
    policy that the discovery frequency never adapts.
    """
    if fallback_every_frames <= 0:
        return False
    return (frame_index % fallback_every_frames
            == (sched.seed >> 8) % fallback_every_frames)


def next_rendezvous(sched: WakeupSchedule, now_s: float,
                    beacon_every_frames: int = 0,
                    fallback_every_frames: int = 0,
                    fallback_only: bool = False) -> float:
    """Earliest time >= now at which the receiver's wake window opens.

    Frames in which the receiver beacons (no receive window) are skipped.
    With fallback_only, only anchor windows on the discovery frequency
    qualify (used for last-resort control delivery).  A sender transmits
    starting at the returned time so its preamble covers the window
    opening.
    """
    frame = max(0, int(now_s // sched.frame_s))
    while True:
        if not is_beacon_frame(sched, frame, beacon_every_frames):
            if not fallback_only or is_fallback_frame(sched, frame,
                                                      fallback_every_frames):
                t = window_open_s(sched, frame)
                if t >= now_s:
                    return t
        frame += 1


@dataclass
class NeighborEntry:
    """What a node learns about a neighbor from its discovery beacons."""

    node_id: int
    seed: int
    rx_freq_hz: float
    last_heard_s: float

    def expired(self, now_s: float, horizon_s: float) -> bool:
        return now_s - self.last_heard_s > horizon_s


def measured_duty_cycle(trace, total_time_s: float | None = None) -> float:
    """Radio-on fraction from a trace of (t_on, t_off, ...) intervals.

    total_time_s defaults to the trace span.  Raises on an empty trace.
    """
    intervals = [(row[0], row[1]) for row in trace]
    if not intervals:
        raise ValueError("cannot compute a duty cycle from an empty trace")
    on = sum(t1 - t0 for t0, t1 in intervals)
    if total_time_s is None:
        total_time_s = max(t1 for _, t1 in intervals) - min(t0 for t0, _ in intervals)
    if total_time_s <= 0:
        raise ValueError("trace spans no time")
    return on / total_time_s
