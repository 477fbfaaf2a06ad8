"""Scenario/device compatibility checking.

Collects the device items a scenario (or a slice of it) needs and matches
them structurally against device descriptors: the path must exist with the
same data type, an access mode that covers the need, and a value range
containing the required one. Behavioral compatibility (dynamics, timing)
is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .device_core import DeviceDescriptor
from .learning_design import Access, DataType, RequiredItem
from .packaging import SliceSelector, UnitOfLearning, reachable_activity_ids


class TypeConflict(ValueError):
    """Two requirements in one scenario disagree on an item's data type."""

    def __init__(self, device_class: str, path: str, a: DataType, b: DataType):
        super().__init__(
            f"{device_class}:{path} required as both {a.value} and {b.value}"
        )
        self.device_class = device_class
        self.path = path


class ViolationKind(str, Enum):
    MISSING_ITEM = "MISSING_ITEM"
    TYPE_MISMATCH = "TYPE_MISMATCH"
    ACCESS_INSUFFICIENT = "ACCESS_INSUFFICIENT"
    RANGE_EXCEEDS = "RANGE_EXCEEDS"
    CLASS_UNAVAILABLE = "CLASS_UNAVAILABLE"


@dataclass(frozen=True)
class Violation:
    device_class: str
    path: str
    kind: ViolationKind
    detail: str


@dataclass(frozen=True)
class CompatReport:
    compatible: bool
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class RequirementSet:
    """Per device class, the merged item requirements keyed by path."""

    classes: Mapping[str, Mapping[str, RequiredItem]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.classes


def _merge_access(a: Access, b: Access) -> Access:
    if a == b:
        return a
    return Access.READ_WRITE


def _merge_range(
    a: tuple[float, float] | None, b: tuple[float, float] | None
) -> tuple[float, float] | None:
    # Hull; an unconstrained side keeps the merge unconstrained.
    if a is None or b is None:
        return None
    return (min(a[0], b[0]), max(a[1], b[1]))


def requirements_of(
    uol: UnitOfLearning, selector: SliceSelector | None = None
) -> RequirementSet:
    """Merged device requirements of the activities the selector reaches."""
    manifest = uol.manifest
    kept = reachable_activity_ids(manifest, selector)
    env_ids = {
        ref
        for a in manifest.activities
        if a.id in kept
        for ref in a.environment_refs
    }
    merged: dict[str, dict[str, RequiredItem]] = {}
    for env in manifest.environments:
        if env.id not in env_ids:
            continue
        for req in env.device_requirements:
            per_class = merged.setdefault(req.device_class, {})
            for item in req.items:
                existing = per_class.get(item.path)
                if existing is None:
                    per_class[item.path] = item
                    continue
                if existing.data_type != item.data_type:
                    raise TypeConflict(
                        req.device_class, item.path, existing.data_type, item.data_type
                    )
                per_class[item.path] = RequiredItem(
                    path=item.path,
                    data_type=item.data_type,
                    access=_merge_access(existing.access, item.access),
                    value_range=_merge_range(existing.value_range, item.value_range),
                )
    return RequirementSet(classes=merged)


def _access_covers(offered: Access, needed: Access) -> bool:
    return offered == Access.READ_WRITE or offered == needed


def _item_violations(
    device_class: str, required: RequiredItem, descriptor: DeviceDescriptor
) -> list[Violation]:
    items = {i.path: i for i in descriptor.items}
    offered = items.get(required.path)
    if offered is None:
        return [
            Violation(
                device_class,
                required.path,
                ViolationKind.MISSING_ITEM,
                f"device {descriptor.device_id!r} has no item {required.path!r}",
            )
        ]
    out: list[Violation] = []
    if offered.data_type != required.data_type:
        out.append(
            Violation(
                device_class,
                required.path,
                ViolationKind.TYPE_MISMATCH,
                f"need {required.data_type.value}, device offers {offered.data_type.value}",
            )
        )
    if not _access_covers(offered.access, required.access):
        out.append(
            Violation(
                device_class,
                required.path,
                ViolationKind.ACCESS_INSUFFICIENT,
                f"need {required.access.value}, device offers {offered.access.value}",
            )
        )
    if required.value_range is not None and offered.value_range is not None:
        lo, hi = required.value_range
        dev_lo, dev_hi = offered.value_range
        if lo < dev_lo or hi > dev_hi:
            out.append(
                Violation(
                    device_class,
                    required.path,
                    ViolationKind.RANGE_EXCEEDS,
                    f"need [{lo}, {hi}], device covers [{dev_lo}, {dev_hi}]",
                )
            )
    return out


def check_compat(
    requirements: RequirementSet, descriptors: Iterable[DeviceDescriptor]
) -> CompatReport:
    """Match each required class against its best-fitting descriptor.

    The best candidate is the descriptor of that class with the fewest
    violations (ties broken by device id); its violations are what the
    report carries. Reports are deterministic including ordering.
    """
    descriptors = list(descriptors)
    violations: list[Violation] = []
    for device_class in sorted(requirements.classes):
        required_items = requirements.classes[device_class]
        candidates = sorted(
            (d for d in descriptors if d.device_class == device_class),
            key=lambda d: d.device_id,
        )
        if not candidates:
            violations.append(
                Violation(
                    device_class,
                    "",
                    ViolationKind.CLASS_UNAVAILABLE,
                    f"no device of class {device_class!r}",
                )
            )
            continue
        best: list[Violation] | None = None
        for descriptor in candidates:
            found: list[Violation] = []
            for path in sorted(required_items):
                found.extend(_item_violations(device_class, required_items[path], descriptor))
            if best is None or len(found) < len(best):
                best = found
            if not best:
                break
        violations.extend(best or [])
    return CompatReport(compatible=not violations, violations=tuple(violations))
