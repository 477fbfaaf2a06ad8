"""Service state: packages, runs, sessions, devices, and the event log.

Every state-mutating command appends its events (durably) before the caller
is acknowledged. Run and session state fold back out of the log on restart;
device dynamic state is not replayed — devices resume from the snapshots
the scheduler persisted, with former holders re-entering RESTORING.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import runtime as rt
from .clock import SimClock
from .config import ServiceConfig
from .dataccess import DaServer
from .device_core import DeviceRegistry, Scalar
from .events import Event, EventLog
from .learning_design import Manifest
from .packaging import UnitOfLearning, load_package
from .scheduler import (
    Booking,
    Scheduler,
    SchedulerConfig,
    Session,
    SessionMode,
    SnapshotStore,
    Transition,
)
from .sim_devices import class_descriptor, make_device

STREAM_RUN = "RUN"
STREAM_SESSION = "SESSION"
STREAM_DEVICE = "DEVICE"
STREAM_ADMIN = "ADMIN"

# Engine events that replay re-derives rather than folds.
_DERIVED_RUN_KINDS = {
    rt.RunEventKind.ACT_ADVANCED.value,
    rt.RunEventKind.PLAY_DONE.value,
    rt.RunEventKind.RUN_DONE.value,
    rt.RunEventKind.ACTIVITY_REVEALED.value,
}

_TRANSITION_KINDS = {
    "OPENED": "SESSION_OPENED",
    "DEMOTED": "SESSION_DEMOTED",
    "PROMOTED": "SESSION_PROMOTED",
    "BECAME_REAL": "SESSION_BECAME_REAL",
    "CLOSED": "SESSION_CLOSED",
}


class UnknownPackage(KeyError):
    pass


class UnknownRun(KeyError):
    pass


@dataclass
class RunEntry:
    run: rt.Run
    manifest: Manifest
    package_id: str


@dataclass
class SessionRecord:
    """Per-session fold of the SESSION stream."""

    session_id: str
    booking: Booking
    mode: SessionMode
    device: str | None = None
    opened_at: float = 0.0


@dataclass
class FoldedState:
    packages: dict[str, UnitOfLearning] = field(default_factory=dict)
    runs: dict[str, RunEntry] = field(default_factory=dict)
    sessions: dict[str, SessionRecord] = field(default_factory=dict)
    queues: dict[str, list[str]] = field(default_factory=dict)
    max_run: int = 0
    max_booking: int = 0


def fold_events(events: list[Event], packages_dir: Path) -> FoldedState:
    """Pure fold of the log into service state (no side effects)."""
    state = FoldedState()
    for event in events:
        if event.stream == STREAM_ADMIN and event.kind == "PACKAGE_UPLOADED":
            package_id = event.stream_id
            archive = (packages_dir / f"{package_id}.zip").read_bytes()
            state.packages[package_id] = load_package(archive)
        elif event.stream == STREAM_RUN:
            _fold_run_event(state, event)
        elif event.stream == STREAM_SESSION:
            _fold_session_event(state, event)
        # DEVICE events carry no foldable state (snapshots live on disk)
    return state


def _fold_run_event(state: FoldedState, event: Event) -> None:
    kind = event.kind
    if kind in _DERIVED_RUN_KINDS:
        return
    run_id = event.stream_id
    if kind == rt.RunEventKind.RUN_CREATED.value:
        package_id = event.payload["uol_ref"]
        uol = state.packages[package_id]
        run, _ = rt.create_run(
            uol.manifest,
            {u: frozenset(r) for u, r in event.payload["assignments"].items()},
            run_id=run_id,
            uol_ref=package_id,
            at=event.at,
        )
        state.runs[run_id] = RunEntry(run=run, manifest=uol.manifest, package_id=package_id)
        suffix = run_id.rsplit("-", 1)[-1]
        if suffix.isdigit():
            state.max_run = max(state.max_run, int(suffix))
    elif kind == rt.RunEventKind.ACTIVITY_COMPLETED.value:
        entry = state.runs[run_id]
        entry.run, _ = rt.complete_activity(
            entry.manifest,
            entry.run,
            event.payload["user"],
            event.payload["activity_id"],
            at=event.at,
        )
    elif kind == rt.RunEventKind.NOTIFIED.value:
        entry = state.runs[run_id]
        entry.run, _ = rt.notify(
            entry.manifest,
            entry.run,
            event.payload["actor"],
            event.payload["target_role"],
            event.payload["activity_id"],
            at=event.at,
        )


def _fold_session_event(state: FoldedState, event: Event) -> None:
    session_id = event.stream_id
    kind = event.kind
    if kind == "SESSION_OPENED":
        raw = event.payload["booking"]
        booking = Booking(
            id=raw["id"],
            run_id=raw["run_id"],
            user=raw["user"],
            device_class=raw["device_class"],
            submitted_at=event.at,
        )
        mode = SessionMode(event.payload["mode"])
        state.sessions[session_id] = SessionRecord(
            session_id=session_id,
            booking=booking,
            mode=mode,
            device=event.payload.get("device"),
            opened_at=event.at,
        )
        suffix = raw["id"].rsplit("-", 1)[-1]
        if suffix.isdigit():
            state.max_booking = max(state.max_booking, int(suffix))
        if mode in (SessionMode.SHADOW, SessionMode.QUEUED):
            state.queues.setdefault(booking.device_class, []).append(session_id)
        return
    record = state.sessions.get(session_id)
    if record is None:
        return
    cls = record.booking.device_class
    queue = state.queues.setdefault(cls, [])
    if kind == "SESSION_DEMOTED":
        record.mode = SessionMode(event.payload.get("mode", SessionMode.SHADOW.value))
        record.device = event.payload.get("device")
        if session_id not in queue:
            queue.append(session_id)
    elif kind == "SESSION_PROMOTED":
        record.mode = SessionMode(event.payload["mode"])
        record.device = event.payload.get("device")
        if session_id in queue:
            queue.remove(session_id)
    elif kind == "SESSION_BECAME_REAL":
        record.mode = SessionMode.REAL
        record.device = event.payload.get("device")
    elif kind == "SESSION_CLOSED":
        record.mode = SessionMode.CLOSED
        record.device = None
        if session_id in queue:
            queue.remove(session_id)


class ServiceState:
    """Everything behind the HTTP API, wired together."""

    def __init__(self, config: ServiceConfig):
        config.validate()
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.packages_dir = self.data_dir / "packages"
        self.packages_dir.mkdir(parents=True, exist_ok=True)

        self.clock = SimClock()
        self.started_at_wall = time.time()
        self.registry = DeviceRegistry()
        instances: dict[str, tuple[str, ...]] = {}
        for cls, dev_cfg in config.devices.items():
            ids = []
            for i in range(dev_cfg.count):
                device_id = f"{cls}-{i + 1}"
                self.registry.register(
                    make_device(cls, device_id, dev_cfg.realism, clock=self.clock, dt=config.sim_dt)
                )
                ids.append(device_id)
            instances[cls] = tuple(ids)

        self.store = SnapshotStore(self.data_dir)
        self.scheduler = Scheduler(
            SchedulerConfig(quantum=config.quantum, shadow_on_wait=config.shadow_on_wait),
            self.registry,
            self.store,
            instances,
            clock=self.clock,
            run_is_active=self._run_is_active,
            sim_dt=config.sim_dt,
        )
        self.da_server = DaServer(self.registry, clock=self.clock, on_write=self._on_device_write)

        self.log = EventLog(self.data_dir / "events.log")
        self.packages: dict[str, UnitOfLearning] = {}
        self.runs: dict[str, RunEntry] = {}
        self._next_run = 1
        self._next_booking = 1
        self._runs_lock = threading.RLock()
        self._da_actor = threading.local()
        self._last_tick = 0.0
        self._clock_thread: threading.Thread | None = None
        self._stop = threading.Event()

        existing = self.log.events()
        if existing:
            self._recover(existing)

    # -- recovery ------------------------------------------------------------

    def _recover(self, events: list[Event]) -> None:
        folded = fold_events(events, self.packages_dir)
        self.packages = folded.packages
        self.runs = folded.runs
        self._next_run = folded.max_run + 1
        self._next_booking = folded.max_booking + 1
        records = [
            (r.session_id, r.booking, r.mode)
            for r in sorted(folded.sessions.values(), key=lambda r: r.session_id)
            if r.mode != SessionMode.CLOSED
        ]
        transitions = self.scheduler.rehydrate(records, folded.queues, self.clock())
        for transition in transitions:
            self._log_transition(transition)

    def _run_is_active(self, run_id: str) -> bool:
        entry = self.runs.get(run_id)
        return entry is not None and entry.run.status == rt.RunStatus.ACTIVE

    # -- event plumbing ----------------------------------------------------------

    def _log_run_events(self, run_id: str, events: list[rt.RunEvent]) -> None:
        for e in events:
            payload = dict(e.payload)
            payload["run_seq"] = e.seq
            self.log.append(STREAM_RUN, run_id, e.kind.value, e.actor, payload, at=e.at)

    def _log_transition(self, transition: Transition) -> None:
        self.log.append(
            STREAM_SESSION,
            transition.session_id,
            _TRANSITION_KINDS[transition.kind],
            rt.SYSTEM_ACTOR,
            dict(transition.payload),
            at=transition.at,
        )

    def _on_device_write(self, device_id: str, writes: list[tuple[str, Scalar]]) -> None:
        # Write-through persistence: an acknowledged write must survive a
        # crash, so the owning session's snapshot is saved before the reply.
        session = self.scheduler.session_for_device(device_id)
        if session is not None:
            self.scheduler.persist_session_state(session.id)
        actor = getattr(self._da_actor, "user", "") or ""
        self.log.append(
            STREAM_DEVICE,
            device_id,
            "WRITE_ACCEPTED",
            actor,
            {
                "device_id": device_id,
                "writes": [{"path": p, "value": v} for p, v in writes],
                "session_id": None if session is None else session.id,
            },
            at=self.clock(),
        )

    # -- commands -----------------------------------------------------------------

    def upload_package(self, archive: bytes) -> dict:
        uol = load_package(archive)  # raises on anything unusable
        package_id = "pkg-" + hashlib.sha256(archive).hexdigest()[:12]
        path = self.packages_dir / f"{package_id}.zip"
        path.write_bytes(archive)
        self.packages[package_id] = uol
        self.log.append(
            STREAM_ADMIN,
            package_id,
            "PACKAGE_UPLOADED",
            "",
            {"size": len(archive), "warnings": list(uol.warnings)},
            at=self.clock(),
        )
        return {
            "package_id": package_id,
            "identifier": uol.manifest.identifier,
            "title": uol.manifest.title,
            "ok": True,
            "warnings": list(uol.warnings),
        }

    def get_package(self, package_id: str) -> UnitOfLearning:
        try:
            return self.packages[package_id]
        except KeyError:
            raise UnknownPackage(package_id) from None

    def create_run(self, package_id: str, assignments: Mapping[str, list[str]]) -> dict:
        uol = self.get_package(package_id)
        with self._runs_lock:
            run_id = f"run-{self._next_run}"
            run, events = rt.create_run(
                uol.manifest,
                {u: frozenset(r) for u, r in assignments.items()},
                run_id=run_id,
                uol_ref=package_id,
                at=self.clock(),
            )
            self._next_run += 1
            self.runs[run_id] = RunEntry(run=run, manifest=uol.manifest, package_id=package_id)
            self._log_run_events(run_id, events)
            return self.run_view(run_id)

    def _entry(self, run_id: str) -> RunEntry:
        try:
            return self.runs[run_id]
        except KeyError:
            raise UnknownRun(run_id) from None

    def run_view(self, run_id: str) -> dict:
        entry = self._entry(run_id)
        return {
            "run_id": run_id,
            "package_id": entry.package_id,
            "status": entry.run.status.value,
            "assignments": {u: sorted(r) for u, r in entry.run.assignments.items()},
            "play_states": dict(entry.run.play_states),
            "revealed": sorted(entry.run.revealed),
        }

    def activities(self, run_id: str, user: str) -> list[dict]:
        entry = self._entry(run_id)
        out = []
        for v in rt.visible_activities(entry.manifest, entry.run, user):
            env = None
            if v.environment is not None:
                env = {
                    "id": v.environment.id,
                    "services": list(v.environment.services),
                    "learning_objects": list(v.environment.learning_objects),
                    "device_classes": sorted(
                        {req.device_class for req in v.environment.device_requirements}
                    ),
                }
            out.append(
                {
                    "activity_id": v.activity_id,
                    "title": v.title,
                    "kind": v.kind.value,
                    "source_role_part": v.source_role_part,
                    "actionable": v.actionable,
                    "environment": env,
                }
            )
        return out

    def complete(self, run_id: str, user: str, activity_id: str) -> dict:
        entry = self._entry(run_id)
        with self._runs_lock:
            entry.run, events = rt.complete_activity(
                entry.manifest, entry.run, user, activity_id, at=self.clock()
            )
            self._log_run_events(run_id, events)
        return self.run_view(run_id)

    def notify(self, run_id: str, actor: str, target_role: str, activity_id: str) -> dict:
        entry = self._entry(run_id)
        with self._runs_lock:
            entry.run, events = rt.notify(
                entry.manifest, entry.run, actor, target_role, activity_id, at=self.clock()
            )
            self._log_run_events(run_id, events)
        return self.run_view(run_id)

    def status(self, run_id: str) -> dict:
        entry = self._entry(run_id)
        tree = rt.run_status(entry.manifest, entry.run)
        tree["queues"] = self.scheduler.queue_snapshot()
        return tree

    def open_session(self, run_id: str, user: str, device_class: str) -> dict:
        self._entry(run_id)
        with self._runs_lock:
            booking = Booking(
                id=f"b-{self._next_booking}",
                run_id=run_id,
                user=user,
                device_class=device_class,
                submitted_at=self.clock(),
            )
            self._next_booking += 1
        session, transitions = self.scheduler.request_session(booking, self.clock())
        for t in transitions:
            self._log_transition(t)
        return self.session_view(session.id)

    def close_session(self, session_id: str) -> dict:
        transitions = self.scheduler.release_session(session_id, self.clock())
        for t in transitions:
            self._log_transition(t)
        return {"session_id": session_id, "mode": SessionMode.CLOSED.value}

    def get_session(self, session_id: str) -> Session:
        try:
            return self.scheduler.sessions[session_id]
        except KeyError:
            raise KeyError(session_id) from None

    def session_view(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        return {
            "session_id": session.id,
            "booking_id": session.booking.id,
            "run_id": session.booking.run_id,
            "user": session.booking.user,
            "device_class": session.booking.device_class,
            "mode": session.mode.value,
            "device_id": session.device_id,
            "da_endpoint": "/da",
            "queue_position": self.scheduler.queue_position(session_id),
        }

    def handle_da(self, body: bytes | str, actor: str = "") -> str:
        self._da_actor.user = actor
        try:
            return self.da_server.handle_request(body)
        finally:
            self._da_actor.user = ""

    def descriptors(self) -> list:
        """Descriptors of the configured device classes (real pool variants)."""
        return [
            class_descriptor(cls, cfg.realism, device_id=f"{cls}-1")
            for cls, cfg in sorted(self.config.devices.items())
        ]

    def events_since(self, since: int = 0) -> list[Event]:
        return self.log.events(since)

    # -- time --------------------------------------------------------------------

    def advance_time(self, sim_seconds: float) -> None:
        """Move simulated time: device steps, then 1 Hz scheduler ticks."""
        if sim_seconds <= 0:
            return
        self.registry.advance_all(sim_seconds)
        now = self.clock.advance(sim_seconds)
        if now - self._last_tick >= 1.0:
            self._last_tick = now
            for t in self.scheduler.tick(now):
                self._log_transition(t)

    def start_clock(self) -> None:
        if self._clock_thread is not None:
            return
        self._stop.clear()

        def loop():
            period = 0.02
            while not self._stop.wait(period):
                self.advance_time(period * self.config.time_scale)

        self._clock_thread = threading.Thread(target=loop, name="elab-clock", daemon=True)
        self._clock_thread.start()

    def stop_clock(self) -> None:
        self._stop.set()
        if self._clock_thread is not None:
            self._clock_thread.join(timeout=2.0)
            self._clock_thread = None

    def close(self) -> None:
        self.stop_clock()
        self.log.close()
