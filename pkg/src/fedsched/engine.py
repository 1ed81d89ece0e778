"""Deterministic single-threaded discrete-event loop and message timing.

Events are (fire_time, seq, action) tuples on a heap; seq is a monotonically
increasing counter so ties at the same timestamp dispatch in scheduling order.
Identical configuration and seed must produce an identical event sequence, so
nothing here consults wall-clock time or unordered collections.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import ConfigurationError, LivelockError, SimulationError

log = logging.getLogger(__name__)

Action = Callable[[float], None]

# message kinds understood by the delay model
LAUNCH_REQUEST = "launch_request"
LAUNCH_RESPONSE = "launch_response"
REPARTITION_REQUEST = "repartition_request"
PREEMPT_REQUEST = "preempt_request"
PREEMPT_RESPONSE = "preempt_response"
HEARTBEAT = "heartbeat"
TASK_COMPLETION = "task_completion"
TASK_PREEMPTED = "task_preempted"
TASK_LAUNCH = "task_launch"
PROBE = "probe"
PROBE_REPLY = "probe_reply"


@dataclass
class DelayModel:
    """Per-message-kind one-way delays, in seconds.

    `network_delay` covers control messages; `launch_delay` covers the task
    launch payload hop and defaults to the network delay.  `overrides` maps a
    message kind to a specific delay when a scenario needs one.
    """

    network_delay: float = 0.0005
    launch_delay: Optional[float] = None
    overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for value in (self.network_delay, self.launch_delay, *self.overrides.values()):
            if value is not None and value < 0:
                raise ConfigurationError("message delays must be >= 0")

    def delay_for(self, kind: str) -> float:
        if kind in self.overrides:
            return self.overrides[kind]
        if kind == TASK_LAUNCH:
            return self.launch_delay if self.launch_delay is not None else self.network_delay
        return self.network_delay


@dataclass
class CostModel:
    """Simulated processing costs (seconds) charged per operation.

    Merge and heartbeat costs scale with the number of nodes involved so
    larger clusters make the masters measurably busier.
    """

    gm_request_overhead: float = 5e-5
    gm_word_op: float = 1e-6
    gm_node_check: float = 5e-7
    gm_merge_per_node: float = 2e-7
    lm_validate: float = 2e-5
    lm_repartition: float = 3e-5
    lm_preempt_per_victim: float = 2e-5
    lm_heartbeat_per_node: float = 1e-7
    probe_handling: float = 2e-5

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if value < 0:
                raise ConfigurationError(f"cost {name} must be >= 0")


class EventLoop:
    """Orders and dispatches simulation events.

    A configurable cap on events dispatched without task progress aborts runs
    that would otherwise spin forever (e.g. a task no node can ever satisfy
    being rescheduled endlessly).
    """

    def __init__(self, *, event_cap: int = 2_000_000) -> None:
        if event_cap <= 0:
            raise ConfigurationError("event_cap must be positive")
        self._heap: list[tuple[float, int, Action]] = []
        self._seq = itertools.count()
        self._clock = 0.0
        self._event_cap = event_cap
        self._since_progress = 0
        self.events_dispatched = 0
        self.post_event_hook: Optional[Callable[[float], None]] = None

    def now(self) -> float:
        return self._clock

    def schedule(self, fire_time: float, action: Action) -> None:
        """Queue an event; scheduling in the past is a fatal simulation error."""
        if fire_time < self._clock:
            raise SimulationError(
                f"event scheduled at {fire_time} before current time {self._clock}"
            )
        heapq.heappush(self._heap, (fire_time, next(self._seq), action))

    def note_progress(self) -> None:
        """Reset the livelock budget; call when a task starts or completes."""
        self._since_progress = 0

    def run(self) -> None:
        """Dispatch events in (time, seq) order until the heap is empty."""
        while self._heap:
            fire_time, _, action = heapq.heappop(self._heap)
            self._clock = fire_time
            action(fire_time)
            self.events_dispatched += 1
            self._since_progress += 1
            if self._since_progress > self._event_cap:
                raise LivelockError(
                    f"no task progress within {self._event_cap} events "
                    f"(clock={self._clock:.6f}, pending={len(self._heap)})"
                )
            if self.post_event_hook is not None:
                self.post_event_hook(fire_time)


class ActorClock:
    """Serializes a component's simulated work.

    A work item arriving at `arrival` starts at max(arrival, busy_until); the
    wait is the component-side queuing delay for whatever the work was for.
    """

    __slots__ = ("busy_until",)

    def __init__(self) -> None:
        self.busy_until = 0.0

    def begin(self, arrival: float) -> float:
        return arrival if arrival >= self.busy_until else self.busy_until

    def charge(self, start: float, cost: float) -> float:
        done = start + cost
        self.busy_until = done
        return done


class Network:
    """Schedules message deliveries and charges communication time to tasks.

    When a message lies on a task's path to starting (launch and repartition
    requests, failure responses, preemption round trips, the launch payload),
    pass the task's metrics so the hop is accumulated; accumulation is a no-op
    once the task has started.  Off-path messages pass metrics=None.
    """

    def __init__(self, loop: EventLoop, delays: DelayModel) -> None:
        self.loop = loop
        self.delays = delays

    def send(self, send_time: float, kind: str, handler: Action, *, metrics=None) -> float:
        if send_time < self.loop.now():
            raise SimulationError(f"message sent at {send_time} before now {self.loop.now()}")
        delay = self.delays.delay_for(kind)
        if metrics is not None:
            metrics.add_communication(delay)
        deliver_at = send_time + delay
        self.loop.schedule(deliver_at, handler)
        return deliver_at
