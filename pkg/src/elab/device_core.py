"""Generic device API: browse/read/write plus snapshot/restore.

A device is a descriptor (typed item tree, access rules, optional physical
constraints) wrapped around a backend that owns the actual state. Virtual
devices restore snapshots instantly; real-constrained ones ramp each
constrained item at its slew rate and answer UNCERTAIN reads until every
item settles, so a restore can never teleport a physical quantity.

All calls on one device are serialized behind its lock; distinct devices
are independent.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Protocol

from .clock import WallClock
from .learning_design import Access, DataType

Scalar = float | int | bool | str


class UnknownDevice(KeyError):
    pass


class UnknownPath(KeyError):
    pass


class Restoring(RuntimeError):
    """Operation not available while a ramped restore is in progress."""


class SnapshotMismatch(ValueError):
    """Snapshot does not fit the device descriptor."""


class Realism(str, Enum):
    VIRTUAL = "VIRTUAL"
    REAL_CONSTRAINED = "REAL_CONSTRAINED"


class Quality(str, Enum):
    GOOD = "GOOD"
    UNCERTAIN = "UNCERTAIN"
    BAD = "BAD"


class RestoreMode(str, Enum):
    INSTANT = "INSTANT"
    RAMP = "RAMP"


@dataclass(frozen=True)
class Item:
    path: str
    data_type: DataType
    access: Access
    engineering_unit: str = ""
    value_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class DeviceDescriptor:
    device_id: str
    device_class: str
    realism: Realism
    items: tuple[Item, ...]
    slew_rates: Mapping[str, float] = field(default_factory=dict)
    settle_epsilon: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class BrowseEntry:
    path: str
    is_folder: bool
    item: Item | None = None


@dataclass(frozen=True)
class ItemValue:
    path: str
    value: Scalar | None
    quality: Quality
    timestamp: float


@dataclass(frozen=True)
class WriteResult:
    path: str
    accepted: bool
    reason: str | None = None


@dataclass(frozen=True)
class Snapshot:
    device_id: str
    taken_at: float
    state: Mapping[str, Scalar]

    def to_json_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "taken_at": self.taken_at,
            "state": dict(self.state),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Snapshot":
        return cls(
            device_id=data["device_id"],
            taken_at=data["taken_at"],
            state=dict(data["state"]),
        )


@dataclass(frozen=True)
class RestorePlan:
    mode: RestoreMode
    expected_duration: float


class Backend(Protocol):
    """State owner behind a device; simulators here, hardware adapters later."""

    dt: float

    def state_paths(self) -> tuple[str, ...]: ...

    def read_values(self) -> dict[str, Scalar]: ...

    def apply_write(self, path: str, value: Scalar) -> None: ...

    def set_state(self, values: Mapping[str, Scalar]) -> None: ...

    def step(self) -> None: ...


def value_matches_type(value: Scalar, data_type: DataType) -> bool:
    if data_type == DataType.FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if data_type == DataType.INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if data_type == DataType.BOOL:
        return isinstance(value, bool)
    return isinstance(value, str)


class Device:
    """Serialized owner of one device's descriptor + backend."""

    def __init__(
        self,
        descriptor: DeviceDescriptor,
        backend: Backend,
        clock: Callable[[], float] | None = None,
    ):
        self.descriptor = descriptor
        self._backend = backend
        self._clock = clock or WallClock()
        self._lock = threading.RLock()
        self._items = {i.path: i for i in descriptor.items}
        self._restoring = False
        self._ramp_targets: dict[str, Scalar] = {}
        self._dt_ns = round(backend.dt * 1e9)
        self._acc_ns = 0
        folders: set[str] = set()
        for path in self._items:
            parts = path.split("/")
            for k in range(1, len(parts)):
                folders.add("/".join(parts[:k]))
        self._folders = folders

    @property
    def device_id(self) -> str:
        return self.descriptor.device_id

    @property
    def device_class(self) -> str:
        return self.descriptor.device_class

    @property
    def is_restoring(self) -> bool:
        with self._lock:
            return self._restoring

    # -- browse ------------------------------------------------------------

    def browse(self, path: str = "") -> list[BrowseEntry]:
        with self._lock:
            if path and path not in self._folders:
                if path in self._items:
                    return []
                raise UnknownPath(path)
            prefix = f"{path}/" if path else ""
            depth = len(prefix.split("/")) if prefix else 1
            entries: dict[str, BrowseEntry] = {}
            for child_path, item in self._items.items():
                if not child_path.startswith(prefix):
                    continue
                segments = child_path.split("/")
                head = "/".join(segments[:depth])
                if len(segments) == depth:
                    entries[head] = BrowseEntry(path=head, is_folder=False, item=item)
                else:
                    entries.setdefault(head, BrowseEntry(path=head, is_folder=True))
            return [entries[k] for k in sorted(entries)]

    # -- read / write --------------------------------------------------------

    def read(self, paths: Iterable[str]) -> list[ItemValue]:
        with self._lock:
            values = self._backend.read_values()
            ts = self._clock()
            quality = Quality.UNCERTAIN if self._restoring else Quality.GOOD
            out = []
            for path in paths:
                if path in self._items and path in values:
                    out.append(ItemValue(path, values[path], quality, ts))
                else:
                    out.append(ItemValue(path, None, Quality.BAD, ts))
            return out

    def write(self, writes: Iterable[tuple[str, Scalar]]) -> list[WriteResult]:
        with self._lock:
            out = []
            for path, value in writes:
                item = self._items.get(path)
                if item is None:
                    out.append(WriteResult(path, False, "UNKNOWN_PATH"))
                    continue
                if item.access not in (Access.WRITE, Access.READ_WRITE):
                    out.append(WriteResult(path, False, "ACCESS"))
                    continue
                if self._restoring:
                    out.append(WriteResult(path, False, "RESTORING"))
                    continue
                if not value_matches_type(value, item.data_type):
                    out.append(WriteResult(path, False, "TYPE"))
                    continue
                if item.data_type == DataType.FLOAT:
                    value = float(value)
                if item.value_range is not None:
                    lo, hi = item.value_range
                    if not (lo <= value <= hi):
                        out.append(WriteResult(path, False, "OUT_OF_RANGE"))
                        continue
                self._backend.apply_write(path, value)
                out.append(WriteResult(path, True))
            return out

    # -- snapshot / restore ---------------------------------------------------

    def snapshot(self) -> Snapshot:
        with self._lock:
            if self._restoring:
                raise Restoring(f"device {self.device_id!r} is restoring")
            values = self._backend.read_values()
            state = {p: values[p] for p in self._backend.state_paths()}
            return Snapshot(self.device_id, self._clock(), state)

    def _check_snapshot(self, snap: Snapshot) -> None:
        expected = set(self._backend.state_paths())
        got = set(snap.state)
        if got != expected:
            raise SnapshotMismatch(
                f"snapshot paths {sorted(got)} do not match device state paths "
                f"{sorted(expected)}"
            )
        for path, value in snap.state.items():
            item = self._items[path]
            if not value_matches_type(value, item.data_type):
                raise SnapshotMismatch(f"value for {path!r} has wrong type")
            if item.value_range is not None:
                lo, hi = item.value_range
                if not (lo <= value <= hi):
                    raise SnapshotMismatch(f"value {value} for {path!r} outside [{lo}, {hi}]")

    def restore(self, snap: Snapshot) -> RestorePlan:
        with self._lock:
            if self._restoring:
                raise Restoring(f"device {self.device_id!r} is restoring")
            self._check_snapshot(snap)
            if self.descriptor.realism == Realism.VIRTUAL:
                self._backend.set_state(dict(snap.state))
                return RestorePlan(RestoreMode.INSTANT, 0.0)

            rates = self.descriptor.slew_rates
            current = self._backend.read_values()
            instant = {p: v for p, v in snap.state.items() if p not in rates}
            if instant:
                self._backend.set_state(instant)
            targets = {p: v for p, v in snap.state.items() if p in rates}
            duration = 0.0
            for path, target in targets.items():
                duration = max(duration, abs(float(target) - float(current[path])) / rates[path])
            self._ramp_targets = targets
            self._restoring = True
            self._settle_check()
            return RestorePlan(RestoreMode.RAMP, duration)

    def abort_restore(self) -> None:
        """End a ramp in place (the session let go mid-restore)."""
        with self._lock:
            self._restoring = False
            self._ramp_targets = {}

    def _settle_check(self) -> None:
        eps = self.descriptor.settle_epsilon
        values = self._backend.read_values()
        for path, target in self._ramp_targets.items():
            if abs(float(values[path]) - float(target)) > eps.get(path, 0.0):
                return
        self._restoring = False
        self._ramp_targets = {}

    # -- time ----------------------------------------------------------------

    def advance(self, seconds: float) -> int:
        """Run the fixed-step loop for ``seconds`` of service time.

        Progress depends only on the accumulated total, not on how calls
        partition it. During a ramped restore the steps move constrained
        items toward their targets instead of stepping the dynamics.
        """
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        with self._lock:
            self._acc_ns += round(seconds * 1e9)
            steps = self._acc_ns // self._dt_ns
            self._acc_ns -= steps * self._dt_ns
            for _ in range(steps):
                self._step_once()
            return int(steps)

    def _step_once(self) -> None:
        if not self._restoring:
            self._backend.step()
            return
        dt = self._backend.dt
        values = self._backend.read_values()
        moved: dict[str, Scalar] = {}
        for path, target in self._ramp_targets.items():
            cur = float(values[path])
            delta = float(target) - cur
            limit = self.descriptor.slew_rates[path] * dt
            if abs(delta) <= limit:
                moved[path] = target
            else:
                moved[path] = cur + (limit if delta > 0 else -limit)
        if moved:
            self._backend.set_state(moved)
        self._settle_check()


def descriptor_to_json_dict(d: DeviceDescriptor) -> dict:
    return {
        "device_id": d.device_id,
        "device_class": d.device_class,
        "realism": d.realism.value,
        "items": [
            {
                "path": i.path,
                "data_type": i.data_type.value,
                "access": i.access.value,
                "unit": i.engineering_unit,
                "range": None if i.value_range is None else list(i.value_range),
            }
            for i in d.items
        ],
        "slew_rates": dict(d.slew_rates),
        "settle_epsilon": dict(d.settle_epsilon),
    }


def descriptor_from_json_dict(data: dict) -> DeviceDescriptor:
    items = tuple(
        Item(
            path=raw["path"],
            data_type=DataType(raw["data_type"]),
            access=Access(raw["access"]),
            engineering_unit=raw.get("unit", ""),
            value_range=None if raw.get("range") is None else tuple(raw["range"]),
        )
        for raw in data["items"]
    )
    return DeviceDescriptor(
        device_id=data["device_id"],
        device_class=data["device_class"],
        realism=Realism(data["realism"]),
        items=items,
        slew_rates=dict(data.get("slew_rates", {})),
        settle_epsilon=dict(data.get("settle_epsilon", {})),
    )


class DeviceRegistry:
    """Thread-safe id -> device map."""

    def __init__(self):
        self._devices: dict[str, Device] = {}
        self._lock = threading.RLock()

    def register(self, device: Device) -> Device:
        with self._lock:
            if device.device_id in self._devices:
                raise ValueError(f"device id {device.device_id!r} already registered")
            self._devices[device.device_id] = device
            return device

    def unregister(self, device_id: str) -> None:
        with self._lock:
            self._devices.pop(device_id, None)

    def get(self, device_id: str) -> Device:
        with self._lock:
            try:
                return self._devices[device_id]
            except KeyError:
                raise UnknownDevice(device_id) from None

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._devices)

    def devices(self) -> list[Device]:
        with self._lock:
            return list(self._devices.values())

    def __len__(self) -> int:
        with self._lock:
            return len(self._devices)

    def advance_all(self, seconds: float) -> None:
        for device in self.devices():
            device.advance(seconds)
