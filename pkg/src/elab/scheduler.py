"""Time-shares scarce real device instances across learner sessions.

Policy: FIFO with a fixed quantum. A session that asks for a busy class
gets a private virtual twin ("shadow") to work on while it queues; when a
real instance frees up, the head of the queue is promoted and the real
device is restored to the state the learner last produced (their twin's
state, or their saved snapshot). A running session is preempted only when
its slice has expired AND someone is waiting; its device state is
snapshotted so nothing the learner did is lost, and the snapshot seeds
their replacement twin.

Mode transitions: QUEUED|SHADOW -> RESTORING -> REAL -> (SHADOW|CLOSED),
plus any -> CLOSED. A real instance is held by at most one open session.

Snapshots persist as one JSON file per (run, user, device_class), which is
also the state a session resumes from after a service restart.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

from .device_core import Device, DeviceRegistry, Realism, Snapshot
from .sim_devices import initial_snapshot, make_device


class UnknownDeviceClass(KeyError):
    pass


class UnknownSession(KeyError):
    pass


class RunNotActive(ValueError):
    pass


class SessionMode(str, Enum):
    REAL = "REAL"
    SHADOW = "SHADOW"
    QUEUED = "QUEUED"
    RESTORING = "RESTORING"
    CLOSED = "CLOSED"


@dataclass(frozen=True)
class Booking:
    id: str
    run_id: str
    user: str
    device_class: str
    submitted_at: float


@dataclass
class Session:
    id: str
    booking: Booking
    mode: SessionMode
    device_instance: str | None = None  # real instance id while REAL/RESTORING
    twin_id: str | None = None  # private virtual twin while SHADOW
    slice_started_at: float | None = None
    saved_snapshot: Snapshot | None = None
    restore_target: Snapshot | None = None

    @property
    def device_id(self) -> str | None:
        """Whatever device the session's user should talk to right now."""
        if self.mode in (SessionMode.REAL, SessionMode.RESTORING):
            return self.device_instance
        if self.mode == SessionMode.SHADOW:
            return self.twin_id
        return None


@dataclass(frozen=True)
class SchedulerConfig:
    quantum: float = 300.0
    shadow_on_wait: bool = True

    def __post_init__(self):
        if self.quantum <= 0:
            raise ValueError("quantum must be positive")


@dataclass(frozen=True)
class Transition:
    kind: str  # OPENED | DEMOTED | PROMOTED | BECAME_REAL | CLOSED
    session_id: str
    at: float
    payload: Mapping[str, object] = field(default_factory=dict)


class SnapshotStore:
    """snapshots/<run>/<user>/<device_class>.json under the data dir."""

    def __init__(self, base: Path | str):
        self.base = Path(base)

    def _path(self, run_id: str, user: str, device_class: str) -> Path:
        return self.base / "snapshots" / run_id / user / f"{device_class}.json"

    def save(self, run_id: str, user: str, device_class: str, snap: Snapshot) -> Path:
        path = self._path(run_id, user, device_class)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(snap.to_json_dict(), sort_keys=True))
        return path

    def load(self, run_id: str, user: str, device_class: str) -> Snapshot | None:
        path = self._path(run_id, user, device_class)
        if not path.exists():
            return None
        return Snapshot.from_json_dict(json.loads(path.read_text()))


class Scheduler:
    """Serialized command processor over sessions of real device instances."""

    def __init__(
        self,
        config: SchedulerConfig,
        registry: DeviceRegistry,
        store: SnapshotStore,
        instances: Mapping[str, tuple[str, ...]],
        clock: Callable[[], float] | None = None,
        run_is_active: Callable[[str], bool] | None = None,
        sim_dt: float | None = None,
    ):
        """``instances`` maps device_class -> ids of the real pool, already
        registered in ``registry``."""
        self.config = config
        self.registry = registry
        self.store = store
        self._instances = {cls: tuple(ids) for cls, ids in instances.items()}
        self._free: dict[str, list[str]] = {
            cls: sorted(ids) for cls, ids in self._instances.items()
        }
        self._queues: dict[str, list[str]] = {cls: [] for cls in self._instances}
        self.sessions: dict[str, Session] = {}
        self._lock = threading.RLock()
        self._clock = clock
        self._run_is_active = run_is_active
        self._sim_dt = sim_dt
        self._next_session = 1
        self._next_twin = 1

    # -- helpers ----------------------------------------------------------------

    def _initial_snapshot(self, device_class: str) -> Snapshot:
        return initial_snapshot(device_class)

    def _resume_snapshot(self, booking: Booking) -> Snapshot:
        saved = self.store.load(booking.run_id, booking.user, booking.device_class)
        return saved if saved is not None else self._initial_snapshot(booking.device_class)

    def _make_twin(self, session: Session, seed: Snapshot) -> str:
        twin_id = f"{session.booking.device_class}-twin-{self._next_twin}"
        self._next_twin += 1
        twin = make_device(
            session.booking.device_class,
            twin_id,
            Realism.VIRTUAL,
            clock=self._clock,
            dt=self._sim_dt,
        )
        self.registry.register(twin)
        twin.restore(seed)  # twins are virtual: instant
        return twin_id

    def _discard_twin(self, session: Session) -> None:
        if session.twin_id is not None:
            self.registry.unregister(session.twin_id)
            session.twin_id = None

    def _acquire(
        self, session: Session, instance_id: str, target: Snapshot, now: float
    ) -> list[Transition]:
        """Put a session onto a free real instance, ramping if the device
        must move to reach the target state."""
        device = self.registry.get(instance_id)
        plan = device.restore(target)
        session.device_instance = instance_id
        session.restore_target = target
        out = []
        if device.is_restoring:
            session.mode = SessionMode.RESTORING
            out.append(
                Transition(
                    "PROMOTED",
                    session.id,
                    now,
                    {
                        "device": instance_id,
                        "mode": SessionMode.RESTORING.value,
                        "expected_duration": plan.expected_duration,
                    },
                )
            )
        else:
            session.mode = SessionMode.REAL
            session.slice_started_at = now
            session.restore_target = None
            out.append(
                Transition(
                    "PROMOTED",
                    session.id,
                    now,
                    {"device": instance_id, "mode": SessionMode.REAL.value, "expected_duration": 0.0},
                )
            )
        return out

    def _persist(self, session: Session, snap: Snapshot) -> None:
        b = session.booking
        self.store.save(b.run_id, b.user, b.device_class, snap)

    def session_for_device(self, device_id: str) -> Session | None:
        """Open session currently owning (or shadowing on) a device."""
        with self._lock:
            for session in self.sessions.values():
                if session.mode == SessionMode.CLOSED:
                    continue
                if device_id in (session.device_instance, session.twin_id):
                    return session
            return None

    def persist_session_state(self, session_id: str) -> None:
        """Durably record the session's current device state (write-through)."""
        with self._lock:
            session = self.sessions.get(session_id)
            if session is None or session.mode not in (SessionMode.REAL, SessionMode.SHADOW):
                return
            device = self.registry.get(session.device_id)
            self._persist(session, device.snapshot())

    # -- commands -------------------------------------------------------------

    def request_session(self, booking: Booking, now: float) -> tuple[Session, list[Transition]]:
        with self._lock:
            if booking.device_class not in self._instances:
                raise UnknownDeviceClass(booking.device_class)
            if self._run_is_active is not None and not self._run_is_active(booking.run_id):
                raise RunNotActive(f"run {booking.run_id!r} is not active")
            session = Session(
                id=f"s-{self._next_session}",
                booking=booking,
                mode=SessionMode.QUEUED,
            )
            self._next_session += 1
            self.sessions[session.id] = session
            transitions: list[Transition] = []
            free = self._free[booking.device_class]
            if free:
                instance = free.pop(0)
                transitions.extend(
                    self._acquire(session, instance, self._resume_snapshot(booking), now)
                )
                opened_mode = session.mode
            elif self.config.shadow_on_wait:
                session.twin_id = self._make_twin(session, self._resume_snapshot(booking))
                session.mode = SessionMode.SHADOW
                self._queues[booking.device_class].append(session.id)
                opened_mode = SessionMode.SHADOW
            else:
                self._queues[booking.device_class].append(session.id)
                opened_mode = SessionMode.QUEUED
            transitions.insert(
                0,
                Transition(
                    "OPENED",
                    session.id,
                    now,
                    {
                        "booking": {
                            "id": booking.id,
                            "run_id": booking.run_id,
                            "user": booking.user,
                            "device_class": booking.device_class,
                        },
                        "mode": opened_mode.value,
                        "device": session.device_id,
                        "queue_position": self.queue_position(session.id),
                    },
                ),
            )
            return session, transitions

    def queue_position(self, session_id: str) -> int | None:
        with self._lock:
            session = self.sessions.get(session_id)
            if session is None:
                return None
            queue = self._queues.get(session.booking.device_class, [])
            try:
                return queue.index(session_id) + 1
            except ValueError:
                return None

    def tick(self, now: float) -> list[Transition]:
        """Preempt expired slices with waiters, promote queue heads, and
        flip finished restores to REAL."""
        with self._lock:
            transitions: list[Transition] = []

            # 1. preemption (only when somebody waits)
            for session in sorted(self.sessions.values(), key=lambda s: s.id):
                if session.mode != SessionMode.REAL:
                    continue
                cls = session.booking.device_class
                if not self._queues[cls]:
                    continue
                if session.slice_started_at is None:
                    continue
                if now - session.slice_started_at < self.config.quantum:
                    continue
                device = self.registry.get(session.device_instance)
                snap = device.snapshot()
                session.saved_snapshot = snap
                self._persist(session, snap)
                self._free[cls].append(session.device_instance)
                self._free[cls].sort()
                session.device_instance = None
                session.slice_started_at = None
                session.twin_id = self._make_twin(session, snap)
                session.mode = SessionMode.SHADOW
                self._queues[cls].append(session.id)
                transitions.append(
                    Transition(
                        "DEMOTED",
                        session.id,
                        now,
                        {"device": session.twin_id, "mode": SessionMode.SHADOW.value},
                    )
                )

            # 2. promotion of queue heads onto free instances
            for cls, queue in self._queues.items():
                while queue and self._free[cls]:
                    session = self.sessions[queue.pop(0)]
                    if session.twin_id is not None:
                        twin = self.registry.get(session.twin_id)
                        target = twin.snapshot()
                        self._discard_twin(session)
                    elif session.saved_snapshot is not None:
                        target = session.saved_snapshot
                    else:
                        target = self._resume_snapshot(session.booking)
                    instance = self._free[cls].pop(0)
                    transitions.extend(self._acquire(session, instance, target, now))

            # 3. finished restores become REAL
            for session in sorted(self.sessions.values(), key=lambda s: s.id):
                if session.mode != SessionMode.RESTORING:
                    continue
                device = self.registry.get(session.device_instance)
                if not device.is_restoring:
                    session.mode = SessionMode.REAL
                    session.slice_started_at = now
                    session.restore_target = None
                    transitions.append(
                        Transition(
                            "BECAME_REAL",
                            session.id,
                            now,
                            {"device": session.device_instance},
                        )
                    )
            return transitions

    def release_session(self, session_id: str, now: float) -> list[Transition]:
        with self._lock:
            session = self.sessions.get(session_id)
            if session is None or session.mode == SessionMode.CLOSED:
                raise UnknownSession(session_id)
            transitions: list[Transition] = []
            cls = session.booking.device_class

            if session.mode == SessionMode.REAL:
                device = self.registry.get(session.device_instance)
                self._persist(session, device.snapshot())
                self._free[cls].append(session.device_instance)
                self._free[cls].sort()
            elif session.mode == SessionMode.RESTORING:
                device = self.registry.get(session.device_instance)
                device.abort_restore()
                if session.restore_target is not None:
                    self._persist(session, session.restore_target)
                self._free[cls].append(session.device_instance)
                self._free[cls].sort()
            elif session.mode == SessionMode.SHADOW:
                twin = self.registry.get(session.twin_id)
                self._persist(session, twin.snapshot())
                self._discard_twin(session)
                if session_id in self._queues[cls]:
                    self._queues[cls].remove(session_id)
            else:  # QUEUED
                if session.saved_snapshot is not None:
                    self._persist(session, session.saved_snapshot)
                if session_id in self._queues[cls]:
                    self._queues[cls].remove(session_id)

            session.mode = SessionMode.CLOSED
            session.device_instance = None
            session.slice_started_at = None
            transitions.append(Transition("CLOSED", session.id, now, {}))

            # hand the freed instance to the next waiter immediately
            queue = self._queues[cls]
            while queue and self._free[cls]:
                waiter = self.sessions[queue.pop(0)]
                if waiter.twin_id is not None:
                    twin = self.registry.get(waiter.twin_id)
                    target = twin.snapshot()
                    self._discard_twin(waiter)
                elif waiter.saved_snapshot is not None:
                    target = waiter.saved_snapshot
                else:
                    target = self._resume_snapshot(waiter.booking)
                instance = self._free[cls].pop(0)
                transitions.extend(self._acquire(waiter, instance, target, now))
            return transitions

    def rehydrate(
        self,
        records: list[tuple[str, Booking, SessionMode]],
        queues: Mapping[str, list[str]],
        now: float,
    ) -> list[Transition]:
        """Re-enter sessions reconstructed from the event log after a restart.

        Device dynamic state is never replayed: former REAL/RESTORING holders
        re-enter RESTORING toward their persisted snapshot (honoring slew
        limits), shadows get a fresh twin seeded from their persisted state.
        ``records`` preserve creation order; ``queues`` preserve FIFO order.
        """
        with self._lock:
            transitions: list[Transition] = []
            for session_id, booking, _mode in records:
                self.sessions[session_id] = Session(
                    id=session_id, booking=booking, mode=SessionMode.QUEUED
                )
                suffix = session_id.rsplit("-", 1)[-1]
                if suffix.isdigit():
                    self._next_session = max(self._next_session, int(suffix) + 1)
            for cls, ids in queues.items():
                if cls in self._queues:
                    self._queues[cls] = [sid for sid in ids if sid in self.sessions]

            for session_id, booking, mode in records:
                session = self.sessions[session_id]
                cls = booking.device_class
                target = self._resume_snapshot(booking)
                if mode in (SessionMode.REAL, SessionMode.RESTORING) and self._free[cls]:
                    instance = self._free[cls].pop(0)
                    transitions.extend(self._acquire(session, instance, target, now))
                elif mode in (SessionMode.REAL, SessionMode.RESTORING):
                    # the pool shrank across the restart: wait at the head
                    if self.config.shadow_on_wait:
                        session.twin_id = self._make_twin(session, target)
                        session.mode = SessionMode.SHADOW
                    self._queues[cls].insert(0, session_id)
                    transitions.append(
                        Transition(
                            "DEMOTED",
                            session_id,
                            now,
                            {"device": session.twin_id, "mode": session.mode.value},
                        )
                    )
                elif mode == SessionMode.SHADOW:
                    session.twin_id = self._make_twin(session, target)
                    session.mode = SessionMode.SHADOW
                # QUEUED sessions stay QUEUED, already in the rebuilt queue
            return transitions

    # -- introspection ------------------------------------------------------------

    def open_sessions(self) -> list[Session]:
        with self._lock:
            return [s for s in self.sessions.values() if s.mode != SessionMode.CLOSED]

    def holders_by_instance(self) -> dict[str, list[str]]:
        """instance id -> open sessions holding it (mutual exclusion check)."""
        with self._lock:
            held: dict[str, list[str]] = {}
            for session in self.sessions.values():
                if session.mode in (SessionMode.REAL, SessionMode.RESTORING):
                    held.setdefault(session.device_instance, []).append(session.id)
            return held

    def queue_snapshot(self) -> dict[str, list[str]]:
        with self._lock:
            return {cls: list(q) for cls, q in self._queues.items()}
