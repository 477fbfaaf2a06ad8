"""Service configuration.

Flat key=value text file; any key can be overridden by an environment
variable named ELAB_<KEY> with dots replaced by underscores and upper-cased
(e.g. ``scheduler.quantum`` -> ``ELAB_SCHEDULER_QUANTUM``).

Recognized keys::

    listen_address = 127.0.0.1:8080
    data_dir = ./elab-data
    scheduler.quantum = 300
    scheduler.shadow_on_wait = true
    sim.dt = 0.1
    time.scale = 1.0
    clock.auto = true
    device.<class>.count = 1
    device.<class>.realism = REAL_CONSTRAINED | VIRTUAL
    token.<token> = <user_id>:<LEARNER|STAFF|ADMIN>
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .device_core import Realism
from .sim_devices import known_classes


class ConfigError(ValueError):
    pass


ACTOR_KINDS = ("LEARNER", "STAFF", "ADMIN")


@dataclass(frozen=True)
class TokenInfo:
    user_id: str
    kind: str  # LEARNER | STAFF | ADMIN


@dataclass(frozen=True)
class DeviceClassConfig:
    device_class: str
    count: int
    realism: Realism


@dataclass
class ServiceConfig:
    listen_address: str = "127.0.0.1:8080"
    data_dir: Path = Path("./elab-data")
    quantum: float = 300.0
    shadow_on_wait: bool = True
    sim_dt: float = 0.1
    time_scale: float = 1.0
    auto_clock: bool = True
    devices: dict[str, DeviceClassConfig] = field(default_factory=dict)
    tokens: dict[str, TokenInfo] = field(default_factory=dict)

    @property
    def host(self) -> str:
        return self.listen_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        try:
            return int(self.listen_address.rsplit(":", 1)[1])
        except (IndexError, ValueError):
            raise ConfigError(f"listen_address {self.listen_address!r} has no port") from None

    def validate(self) -> None:
        if self.quantum <= 0:
            raise ConfigError("scheduler.quantum must be positive")
        if self.sim_dt <= 0:
            raise ConfigError("sim.dt must be positive")
        if self.time_scale <= 0:
            raise ConfigError("time.scale must be positive")
        for cfg in self.devices.values():
            if cfg.count < 0:
                raise ConfigError(f"device.{cfg.device_class}.count must be >= 0")
            if cfg.device_class not in known_classes():
                raise ConfigError(
                    f"unknown device class {cfg.device_class!r}; "
                    f"known: {', '.join(known_classes())}"
                )


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {raw!r}")


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}") from None


def parse_config(text: str, env: dict[str, str] | None = None) -> ServiceConfig:
    env = dict(os.environ if env is None else env)
    pairs: dict[str, str] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value, got {raw_line!r}")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()

    # Environment overrides: a key is overridable whether or not it appears
    # in the file; we scan the union of file keys and known scalar keys.
    def env_key(key: str) -> str:
        return "ELAB_" + key.upper().replace(".", "_")

    scalar_keys = [
        "listen_address",
        "data_dir",
        "scheduler.quantum",
        "scheduler.shadow_on_wait",
        "sim.dt",
        "time.scale",
        "clock.auto",
    ]
    for key in set(list(pairs) + scalar_keys):
        override = env.get(env_key(key))
        if override is not None:
            pairs[key] = override

    config = ServiceConfig()
    devices: dict[str, DeviceClassConfig] = {}
    device_raw: dict[str, dict[str, str]] = {}
    for key, value in pairs.items():
        if key == "listen_address":
            config.listen_address = value
        elif key == "data_dir":
            config.data_dir = Path(value)
        elif key == "scheduler.quantum":
            config.quantum = _parse_float(value, key)
        elif key == "scheduler.shadow_on_wait":
            config.shadow_on_wait = _parse_bool(value, key)
        elif key == "sim.dt":
            config.sim_dt = _parse_float(value, key)
        elif key == "time.scale":
            config.time_scale = _parse_float(value, key)
        elif key == "clock.auto":
            config.auto_clock = _parse_bool(value, key)
        elif key.startswith("device."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in ("count", "realism"):
                raise ConfigError(f"bad device key {key!r}")
            device_raw.setdefault(parts[1], {})[parts[2]] = value
        elif key.startswith("token."):
            token = key[len("token."):]
            if ":" not in value:
                raise ConfigError(f"{key}: expected <user>:<KIND>, got {value!r}")
            user_id, _, kind = value.partition(":")
            kind = kind.strip().upper()
            if kind not in ACTOR_KINDS:
                raise ConfigError(f"{key}: kind must be one of {ACTOR_KINDS}")
            config.tokens[token] = TokenInfo(user_id=user_id.strip(), kind=kind)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    for device_class, fields in device_raw.items():
        try:
            count = int(fields.get("count", "1"))
        except ValueError:
            raise ConfigError(f"device.{device_class}.count: not an integer") from None
        realism_raw = fields.get("realism", "REAL_CONSTRAINED")
        try:
            realism = Realism(realism_raw)
        except ValueError:
            raise ConfigError(
                f"device.{device_class}.realism: {realism_raw!r} is not a realism flag"
            ) from None
        devices[device_class] = DeviceClassConfig(device_class, count, realism)
    config.devices = devices
    config.validate()
    return config


def load_config(path: Path | str, env: dict[str, str] | None = None) -> ServiceConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, env=env)
