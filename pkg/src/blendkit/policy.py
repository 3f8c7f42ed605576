"""Run-time enforcement of a server's request policy.

Two mechanisms: an hourly budget counted over a sliding 3600 s window, and a
snooze started when the server answers with its too-many-calls status. All
time flows through a :class:`Clock` so tests can run in virtual time.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .description import PolicySpec
from .errors import PolicyExhausted

log = logging.getLogger(__name__)

WINDOW_SECONDS = 3600.0
DEFAULT_MAX_PROBES = 3


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ScriptedClock:
    """Virtual clock: ``sleep`` advances time instantly and is recorded."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()
        self.sleeps: list[float] = []

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("negative sleep")
        with self._lock:
            self._now += seconds
            self.sleeps.append(seconds)

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += seconds


@dataclass(frozen=True)
class Proceed:
    pass


@dataclass(frozen=True)
class Wait:
    seconds: float
    reason: str  # "hourly_budget" | "snoozing"


Admission = Proceed | Wait


@dataclass
class PolicyState:
    server_name: str = ""
    admitted_timestamps: list[float] = field(default_factory=list)
    snooze_until: float | None = None
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)


def _in_window(timestamps: list[float], now: float) -> list[float]:
    # closed window: a request made exactly 3600 s ago still counts. Written as
    # t + 3600 >= now so the rounding matches the instant computed in admit().
    return [t for t in timestamps if t + WINDOW_SECONDS >= now]


def _leaves_window(t: float) -> float:
    """First representable instant at which ``t`` is out of the closed window."""
    return math.nextafter(t + WINDOW_SECONDS, math.inf)


def admit(state: PolicyState, policy: PolicySpec | None, now: float) -> Admission:
    """Decide whether a request may go out at ``now``. Never mutates ``state``."""
    if state.snooze_until is not None and state.snooze_until > now:
        return Wait(state.snooze_until - now, "snoozing")
    if policy is None or policy.requests_per_hour is None:
        return Proceed()
    window = _in_window(state.admitted_timestamps, now)
    limit = policy.requests_per_hour
    if len(window) >= limit:
        # the request that must leave the window before one more fits
        expiring = window[len(window) - limit]
        return Wait(_leaves_window(expiring) - now, "hourly_budget")
    return Proceed()


def record_request(state: PolicyState, now: float) -> PolicyState:
    state.admitted_timestamps = _in_window(state.admitted_timestamps, now)
    state.admitted_timestamps.append(now)
    return state


def is_too_many_calls(policy: PolicySpec | None, status: int) -> bool:
    return (policy is not None and policy.too_many_calls_response_code is not None
            and status == policy.too_many_calls_response_code)


def record_response(state: PolicyState, policy: PolicySpec | None, status: int,
                    now: float) -> PolicyState:
    if is_too_many_calls(policy, status):
        state.snooze_until = now + (policy.too_many_calls_waiting_seconds or 0)
    else:
        state.snooze_until = None
    return state


def acquire(state: PolicyState, policy: PolicySpec | None, clock: Clock) -> None:
    """Block (via ``clock``) until admitted, then record the request atomically."""
    while True:
        with state.lock:
            now = clock.now()
            admission = admit(state, policy, now)
            if isinstance(admission, Proceed):
                record_request(state, now)
                return
        log.info("policy wait %s", json.dumps({
            "server": state.server_name, "reason": admission.reason,
            "wait_seconds": round(admission.seconds, 6)}),
            extra={"server": state.server_name, "reason": admission.reason,
                   "wait_seconds": admission.seconds})
        clock.sleep(admission.seconds)


def await_and_retry(state: PolicyState, policy: PolicySpec | None, clock: Clock,
                    attempt: Callable[[], int], max_probes: int = DEFAULT_MAX_PROBES) -> int:
    """Send via ``attempt`` under the policy, snoozing and re-probing on too-many-calls.

    Raises :class:`PolicyExhausted` once ``max_probes`` consecutive attempts
    have come back with the too-many-calls status.
    """
    if max_probes < 1:
        raise ValueError("max_probes must be >= 1")
    strikes = 0
    while True:
        acquire(state, policy, clock)
        status = attempt()
        with state.lock:
            record_response(state, policy, status, clock.now())
        if not is_too_many_calls(policy, status):
            return status
        strikes += 1
        if strikes >= max_probes:
            raise PolicyExhausted(state.server_name, strikes, status)


class PolicyRegistry:
    """One shared PolicyState per server name."""

    def __init__(self):
        self._states: dict[str, PolicyState] = {}
        self._lock = threading.Lock()

    def state(self, server_name: str) -> PolicyState:
        with self._lock:
            st = self._states.get(server_name)
            if st is None:
                st = self._states[server_name] = PolicyState(server_name)
            return st
