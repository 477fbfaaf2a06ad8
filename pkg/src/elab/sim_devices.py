"""Deterministic fixed-step process simulators.

The reference device is a gravity-drained water tank:

    dh/dt = (q_in - Cv * sqrt(h)) / A,   h clamped to its level range

integrated with explicit Euler at a fixed dt. The same model serves as a
virtual twin and as the stand-in for a real rig; the real-constrained
variant adds slew limits so restores ramp instead of jumping.

A second trivial device ("signal"), one writable setpoint mirrored to a
read-only item, exists for protocol and scheduler tests that want a device
without dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

from .device_core import Device, DeviceDescriptor, Item, Realism, Scalar, Snapshot
from .learning_design import Access, DataType

TANK_CLASS = "tank"
SIGNAL_CLASS = "signal"


@dataclass(frozen=True)
class TankParams:
    area: float = 1.0  # m^2
    outflow_coeff: float = 0.05  # m^2.5/s
    q_in_max: float = 0.2  # m^3/s
    level_max: float = 2.0  # m
    dt: float = 0.1  # s

    def __post_init__(self):
        if self.area <= 0 or self.dt <= 0:
            raise ValueError("area and dt must be positive")
        if self.outflow_coeff < 0 or self.q_in_max < 0 or self.level_max <= 0:
            raise ValueError("invalid tank parameters")


@dataclass(frozen=True)
class TankState:
    level: float = 0.0  # m
    q_in: float = 0.0  # m^3/s
    sim_time: float = 0.0  # s


def step_tank(state: TankState, params: TankParams) -> TankState:
    """One explicit-Euler step; clamping handles both range ends."""
    outflow = params.outflow_coeff * math.sqrt(max(state.level, 0.0))
    level = state.level + params.dt * (state.q_in - outflow) / params.area
    level = min(max(level, 0.0), params.level_max)
    return replace(state, level=level, sim_time=state.sim_time + params.dt)


class TankBackend:
    def __init__(self, params: TankParams | None = None, state: TankState | None = None):
        self.params = params or TankParams()
        self.state = state or TankState()

    @property
    def dt(self) -> float:
        return self.params.dt

    def state_paths(self) -> tuple[str, ...]:
        return ("actuators/q_in", "sensors/level")

    def read_values(self) -> dict[str, Scalar]:
        outflow = self.params.outflow_coeff * math.sqrt(max(self.state.level, 0.0))
        return {
            "actuators/q_in": self.state.q_in,
            "sensors/level": self.state.level,
            "sensors/outflow": outflow,
        }

    def apply_write(self, path: str, value: Scalar) -> None:
        if path == "actuators/q_in":
            self.state = replace(self.state, q_in=float(value))

    def set_state(self, values: Mapping[str, Scalar]) -> None:
        state = self.state
        if "actuators/q_in" in values:
            state = replace(state, q_in=float(values["actuators/q_in"]))
        if "sensors/level" in values:
            state = replace(state, level=float(values["sensors/level"]))
        self.state = state

    def step(self) -> None:
        self.state = step_tank(self.state, self.params)


def tank_descriptor(
    device_id: str, realism: Realism, params: TankParams | None = None
) -> DeviceDescriptor:
    p = params or TankParams()
    items = (
        Item(
            path="actuators/q_in",
            data_type=DataType.FLOAT,
            access=Access.READ_WRITE,
            engineering_unit="m3/s",
            value_range=(0.0, p.q_in_max),
        ),
        Item(
            path="sensors/level",
            data_type=DataType.FLOAT,
            access=Access.READ,
            engineering_unit="m",
            value_range=(0.0, p.level_max),
        ),
        Item(
            path="sensors/outflow",
            data_type=DataType.FLOAT,
            access=Access.READ,
            engineering_unit="m3/s",
        ),
    )
    slew_rates: dict[str, float] = {}
    settle: dict[str, float] = {}
    if realism == Realism.REAL_CONSTRAINED:
        slew_rates = {"sensors/level": 0.05, "actuators/q_in": 0.1}
        settle = {"sensors/level": 1e-3, "actuators/q_in": 1e-3}
    return DeviceDescriptor(
        device_id=device_id,
        device_class=TANK_CLASS,
        realism=realism,
        items=items,
        slew_rates=slew_rates,
        settle_epsilon=settle,
    )


def make_tank(
    device_id: str,
    realism: Realism = Realism.VIRTUAL,
    clock: Callable[[], float] | None = None,
    params: TankParams | None = None,
) -> Device:
    p = params or TankParams()
    return Device(tank_descriptor(device_id, realism, p), TankBackend(p), clock=clock)


class SignalBackend:
    def __init__(self, dt: float = 0.1):
        self.dt = dt
        self.setpoint = 0.0

    def state_paths(self) -> tuple[str, ...]:
        return ("setpoint",)

    def read_values(self) -> dict[str, Scalar]:
        return {"setpoint": self.setpoint, "mirror": self.setpoint}

    def apply_write(self, path: str, value: Scalar) -> None:
        if path == "setpoint":
            self.setpoint = float(value)

    def set_state(self, values: Mapping[str, Scalar]) -> None:
        if "setpoint" in values:
            self.setpoint = float(values["setpoint"])

    def step(self) -> None:
        pass


def signal_descriptor(device_id: str, realism: Realism) -> DeviceDescriptor:
    items = (
        Item(
            path="setpoint",
            data_type=DataType.FLOAT,
            access=Access.READ_WRITE,
            value_range=(-1000.0, 1000.0),
        ),
        Item(path="mirror", data_type=DataType.FLOAT, access=Access.READ),
    )
    slew_rates: dict[str, float] = {}
    settle: dict[str, float] = {}
    if realism == Realism.REAL_CONSTRAINED:
        slew_rates = {"setpoint": 10.0}
        settle = {"setpoint": 1e-3}
    return DeviceDescriptor(
        device_id=device_id,
        device_class=SIGNAL_CLASS,
        realism=realism,
        items=items,
        slew_rates=slew_rates,
        settle_epsilon=settle,
    )


def make_signal(
    device_id: str,
    realism: Realism = Realism.VIRTUAL,
    clock: Callable[[], float] | None = None,
    dt: float = 0.1,
) -> Device:
    return Device(signal_descriptor(device_id, realism), SignalBackend(dt), clock=clock)


_FACTORIES: dict[str, Callable[..., Device]] = {
    TANK_CLASS: make_tank,
    SIGNAL_CLASS: make_signal,
}


def known_classes() -> tuple[str, ...]:
    return tuple(sorted(_FACTORIES))


def make_device(
    device_class: str,
    device_id: str,
    realism: Realism,
    clock: Callable[[], float] | None = None,
    dt: float | None = None,
) -> Device:
    try:
        factory = _FACTORIES[device_class]
    except KeyError:
        raise KeyError(f"unknown device class {device_class!r}") from None
    if device_class == TANK_CLASS:
        params = TankParams(dt=dt) if dt else None
        return factory(device_id, realism, clock=clock, params=params)
    return factory(device_id, realism, clock=clock, dt=dt or 0.1)


def class_descriptor(device_class: str, realism: Realism, device_id: str = "") -> DeviceDescriptor:
    """Descriptor of a class without instantiating a simulator."""
    did = device_id or f"{device_class}-template"
    if device_class == TANK_CLASS:
        return tank_descriptor(did, realism)
    if device_class == SIGNAL_CLASS:
        return signal_descriptor(did, realism)
    raise KeyError(f"unknown device class {device_class!r}")


def initial_snapshot(device_class: str, device_id: str = "") -> Snapshot:
    """The class's power-on state, usable as a restore target."""
    device = make_device(device_class, device_id or f"{device_class}-init", Realism.VIRTUAL)
    return device.snapshot()


def tank_trajectory(
    seconds: float, q_in: float, params: TankParams | None = None
) -> list[TankState]:
    """Simulate from empty with constant inflow; returns one state per step."""
    p = params or TankParams()
    state = TankState(q_in=q_in)
    out = [state]
    steps = round(seconds / p.dt)
    for _ in range(steps):
        state = step_tank(state, p)
        out.append(state)
    return out
