"""Scenario manifest model, XML codec, and validator.

A manifest describes who takes part in a lab scenario (roles), what they do
(activities, optionally grouped into sequence/selection structures), where
they do it (environments: learning objects, services, device requirements),
and in which order (method: plays of ordered acts of role-parts).

The XML vocabulary is documented in docs/manifest-schema.md. Serialization
is canonical: fixed section order, declaration order within sections,
sorted attributes, 2-space indent. ``parse_manifest(serialize_manifest(m))``
is structurally equal to ``m`` for every valid manifest.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum

from .xmlio import XmlWriter, fmt_bool, fmt_float, parse_bool

ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")

UNBOUNDED = None  # max_persons value meaning "no upper limit"


class XmlSyntaxError(ValueError):
    """The document is not well-formed XML."""


class SchemaError(ValueError):
    """A required element or attribute is missing or unreadable."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} (at {path})")
        self.path = path


class InvalidManifest(ValueError):
    """Operation requires a manifest that validates ok."""

    def __init__(self, report: "ValidationReport"):
        codes = sorted({i.code for i in report.issues if i.severity == Severity.ERROR})
        super().__init__(f"manifest fails validation: {', '.join(codes)}")
        self.report = report


class RoleKind(str, Enum):
    LEARNER = "LEARNER"
    STAFF = "STAFF"


class ActivityKind(str, Enum):
    LEARNING = "LEARNING"
    SUPPORT = "SUPPORT"
    STRUCTURE = "STRUCTURE"


class CompletionRule(str, Enum):
    USER_CHOICE = "USER_CHOICE"
    AUTO_ON_CHILDREN = "AUTO_ON_CHILDREN"


class StructureMode(str, Enum):
    SEQUENCE = "SEQUENCE"
    SELECTION = "SELECTION"


class DataType(str, Enum):
    FLOAT = "FLOAT"
    INT = "INT"
    BOOL = "BOOL"
    STRING = "STRING"


class Access(str, Enum):
    READ = "READ"
    WRITE = "WRITE"
    READ_WRITE = "READ_WRITE"


class Severity(str, Enum):
    ERROR = "ERROR"
    WARNING = "WARNING"


@dataclass(frozen=True)
class Role:
    id: str
    kind: RoleKind
    min_persons: int = 0
    max_persons: int | None = UNBOUNDED


@dataclass(frozen=True)
class Structure:
    mode: StructureMode
    children: tuple[str, ...]
    number_to_select: int | None = None


@dataclass(frozen=True)
class Activity:
    id: str
    kind: ActivityKind
    title: str
    environment_refs: tuple[str, ...] = ()
    content_ref: str | None = None
    completion: CompletionRule = CompletionRule.USER_CHOICE
    structure: Structure | None = None
    initially_hidden: bool = False


@dataclass(frozen=True)
class RequiredItem:
    path: str
    data_type: DataType
    access: Access
    value_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class DeviceRequirement:
    device_class: str
    items: tuple[RequiredItem, ...]


@dataclass(frozen=True)
class Environment:
    id: str
    learning_objects: tuple[str, ...] = ()
    services: tuple[str, ...] = ()
    device_requirements: tuple[DeviceRequirement, ...] = ()


@dataclass(frozen=True)
class RolePart:
    id: str
    role_ref: str
    activity_ref: str


@dataclass(frozen=True)
class Act:
    id: str
    role_parts: tuple[RolePart, ...]


@dataclass(frozen=True)
class Play:
    id: str
    acts: tuple[Act, ...]


@dataclass(frozen=True)
class Method:
    plays: tuple[Play, ...]


@dataclass(frozen=True)
class ResourceRef:
    id: str
    path: str
    media_type: str = "application/octet-stream"


@dataclass(frozen=True)
class Manifest:
    identifier: str
    title: str
    roles: tuple[Role, ...] = ()
    activities: tuple[Activity, ...] = ()
    environments: tuple[Environment, ...] = ()
    method: Method = Method(plays=())
    resources: tuple[ResourceRef, ...] = ()
    # Parser notes (unknown elements etc.); not part of structural identity.
    parse_warnings: tuple[str, ...] = field(default=(), compare=False)

    def activity(self, activity_id: str) -> Activity:
        for a in self.activities:
            if a.id == activity_id:
                return a
        raise KeyError(activity_id)

    def role(self, role_id: str) -> Role:
        for r in self.roles:
            if r.id == role_id:
                return r
        raise KeyError(role_id)

    def environment(self, env_id: str) -> Environment:
        for e in self.environments:
            if e.id == env_id:
                return e
        raise KeyError(env_id)


@dataclass(frozen=True)
class Issue:
    severity: Severity
    code: str
    element_id: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[Issue, ...]

    def errors(self) -> tuple[Issue, ...]:
        return tuple(i for i in self.issues if i.severity == Severity.ERROR)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_KNOWN_CHILDREN = {
    "manifest": {"roles", "activities", "environments", "method", "resources"},
    "roles": {"role"},
    "activities": {"activity"},
    "activity": {"environment-ref", "structure"},
    "structure": {"child"},
    "environments": {"environment"},
    "environment": {"learning-object", "service", "device-requirement"},
    "device-requirement": {"item"},
    "method": {"play"},
    "play": {"act"},
    "act": {"role-part"},
    "resources": {"resource"},
}


def _attr(el: ET.Element, name: str, path: str) -> str:
    value = el.get(name)
    if value is None:
        raise SchemaError(f"missing required attribute {name!r}", path)
    return value


def _enum_attr(el: ET.Element, name: str, enum_cls, path: str):
    raw = _attr(el, name, path)
    try:
        return enum_cls(raw)
    except ValueError:
        raise SchemaError(f"attribute {name!r} has invalid value {raw!r}", path) from None


def _int_attr(el: ET.Element, name: str, path: str, default: int | None) -> int | None:
    raw = el.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"attribute {name!r} is not an integer: {raw!r}", path) from None


def _float_attr(el: ET.Element, name: str, path: str) -> float | None:
    raw = el.get(name)
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(f"attribute {name!r} is not a number: {raw!r}", path) from None


def _bool_attr(el: ET.Element, name: str, path: str, default: bool) -> bool:
    raw = el.get(name)
    if raw is None:
        return default
    try:
        return parse_bool(raw)
    except ValueError:
        raise SchemaError(f"attribute {name!r} is not a boolean: {raw!r}", path) from None


def _warn_unknown(el: ET.Element, path: str, warnings: list[str]) -> None:
    known = _KNOWN_CHILDREN.get(el.tag, set())
    for child in el:
        if child.tag not in known:
            warnings.append(f"unknown element <{child.tag}> ignored (at {path}/{child.tag})")


def _indexed(parent: ET.Element, tag: str, parent_path: str):
    for i, child in enumerate(parent.findall(tag), start=1):
        yield child, f"{parent_path}/{tag}[{i}]"


def parse_manifest(xml_text: str | bytes) -> Manifest:
    """Parse manifest XML into the domain model.

    Strict about structure (missing required attributes raise SchemaError),
    tolerant about vocabulary (unknown elements are ignored and recorded as
    warnings, surfaced later by validate_manifest). Referential and bounds
    problems never raise here; they become validation issues.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise XmlSyntaxError(f"malformed XML: {exc}") from exc

    warnings: list[str] = []
    if root.tag != "manifest":
        raise SchemaError(f"root element must be <manifest>, got <{root.tag}>", root.tag)
    path = "manifest"
    identifier = _attr(root, "identifier", path)
    title = _attr(root, "title", path)
    _warn_unknown(root, path, warnings)

    roles: list[Role] = []
    section = root.find("roles")
    if section is not None:
        _warn_unknown(section, f"{path}/roles", warnings)
        for el, p in _indexed(section, "role", f"{path}/roles"):
            max_raw = el.get("max-persons", "UNBOUNDED")
            if max_raw == "UNBOUNDED":
                max_persons = UNBOUNDED
            else:
                try:
                    max_persons = int(max_raw)
                except ValueError:
                    raise SchemaError(
                        f"attribute 'max-persons' is not an integer or UNBOUNDED: {max_raw!r}", p
                    ) from None
            roles.append(
                Role(
                    id=_attr(el, "id", p),
                    kind=_enum_attr(el, "kind", RoleKind, p),
                    min_persons=_int_attr(el, "min-persons", p, 0),
                    max_persons=max_persons,
                )
            )

    activities: list[Activity] = []
    section = root.find("activities")
    if section is not None:
        _warn_unknown(section, f"{path}/activities", warnings)
        for el, p in _indexed(section, "activity", f"{path}/activities"):
            kind = _enum_attr(el, "kind", ActivityKind, p)
            _warn_unknown(el, p, warnings)
            env_refs = tuple(
                _attr(ref, "ref", rp) for ref, rp in _indexed(el, "environment-ref", p)
            )
            structure = None
            stru_el = el.find("structure")
            if stru_el is not None:
                sp = f"{p}/structure"
                _warn_unknown(stru_el, sp, warnings)
                structure = Structure(
                    mode=_enum_attr(stru_el, "mode", StructureMode, sp),
                    children=tuple(
                        _attr(c, "ref", cp) for c, cp in _indexed(stru_el, "child", sp)
                    ),
                    number_to_select=_int_attr(stru_el, "number-to-select", sp, None),
                )
            default_completion = (
                CompletionRule.AUTO_ON_CHILDREN
                if kind == ActivityKind.STRUCTURE
                else CompletionRule.USER_CHOICE
            )
            raw_completion = el.get("completion")
            if raw_completion is None:
                completion = default_completion
            else:
                try:
                    completion = CompletionRule(raw_completion)
                except ValueError:
                    raise SchemaError(
                        f"attribute 'completion' has invalid value {raw_completion!r}", p
                    ) from None
            activities.append(
                Activity(
                    id=_attr(el, "id", p),
                    kind=kind,
                    title=_attr(el, "title", p),
                    environment_refs=env_refs,
                    content_ref=el.get("content-ref"),
                    completion=completion,
                    structure=structure,
                    initially_hidden=_bool_attr(el, "initially-hidden", p, False),
                )
            )

    environments: list[Environment] = []
    section = root.find("environments")
    if section is not None:
        _warn_unknown(section, f"{path}/environments", warnings)
        for el, p in _indexed(section, "environment", f"{path}/environments"):
            _warn_unknown(el, p, warnings)
            requirements = []
            for req_el, rp in _indexed(el, "device-requirement", p):
                _warn_unknown(req_el, rp, warnings)
                items = []
                for item_el, ip in _indexed(req_el, "item", rp):
                    lo = _float_attr(item_el, "lo", ip)
                    hi = _float_attr(item_el, "hi", ip)
                    if (lo is None) != (hi is None):
                        raise SchemaError("attributes 'lo' and 'hi' must appear together", ip)
                    items.append(
                        RequiredItem(
                            path=_attr(item_el, "path", ip),
                            data_type=_enum_attr(item_el, "data-type", DataType, ip),
                            access=_enum_attr(item_el, "access", Access, ip),
                            value_range=None if lo is None else (lo, hi),
                        )
                    )
                requirements.append(
                    DeviceRequirement(
                        device_class=_attr(req_el, "device-class", rp),
                        items=tuple(items),
                    )
                )
            environments.append(
                Environment(
                    id=_attr(el, "id", p),
                    learning_objects=tuple(
                        _attr(lo_el, "ref", lp) for lo_el, lp in _indexed(el, "learning-object", p)
                    ),
                    services=tuple(
                        _attr(s_el, "id", sp) for s_el, sp in _indexed(el, "service", p)
                    ),
                    device_requirements=tuple(requirements),
                )
            )

    plays: list[Play] = []
    section = root.find("method")
    if section is not None:
        _warn_unknown(section, f"{path}/method", warnings)
        for play_el, pp in _indexed(section, "play", f"{path}/method"):
            _warn_unknown(play_el, pp, warnings)
            acts = []
            for act_el, ap in _indexed(play_el, "act", pp):
                _warn_unknown(act_el, ap, warnings)
                role_parts = tuple(
                    RolePart(
                        id=_attr(rp_el, "id", rpp),
                        role_ref=_attr(rp_el, "role-ref", rpp),
                        activity_ref=_attr(rp_el, "activity-ref", rpp),
                    )
                    for rp_el, rpp in _indexed(act_el, "role-part", ap)
                )
                acts.append(Act(id=_attr(act_el, "id", ap), role_parts=role_parts))
            plays.append(Play(id=_attr(play_el, "id", pp), acts=tuple(acts)))

    resources: list[ResourceRef] = []
    section = root.find("resources")
    if section is not None:
        _warn_unknown(section, f"{path}/resources", warnings)
        for el, p in _indexed(section, "resource", f"{path}/resources"):
            resources.append(
                ResourceRef(
                    id=_attr(el, "id", p),
                    path=_attr(el, "path", p),
                    media_type=el.get("media-type", "application/octet-stream"),
                )
            )

    return Manifest(
        identifier=identifier,
        title=title,
        roles=tuple(roles),
        activities=tuple(activities),
        environments=tuple(environments),
        method=Method(plays=tuple(plays)),
        resources=tuple(resources),
        parse_warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _element_ids(m: Manifest):
    """Yield (id, kind-label) for every declared element."""
    for r in m.roles:
        yield r.id, "role"
    for a in m.activities:
        yield a.id, "activity"
    for e in m.environments:
        yield e.id, "environment"
    for p in m.method.plays:
        yield p.id, "play"
        for act in p.acts:
            yield act.id, "act"
            for rp in act.role_parts:
                yield rp.id, "role-part"
    for res in m.resources:
        yield res.id, "resource"


def validate_manifest(m: Manifest) -> ValidationReport:
    """Check every manifest invariant; violations are reported, never raised."""
    issues: list[Issue] = []

    def err(code: str, element_id: str, message: str) -> None:
        issues.append(Issue(Severity.ERROR, code, element_id, message))

    def warn(code: str, element_id: str, message: str) -> None:
        issues.append(Issue(Severity.WARNING, code, element_id, message))

    for note in m.parse_warnings:
        warn("UNKNOWN_ELEMENT", "", note)

    seen: dict[str, str] = {}
    for element_id, label in _element_ids(m):
        if not ID_RE.match(element_id):
            err("INVALID_ID", element_id, f"{label} id {element_id!r} is not a valid identifier")
        if element_id in seen:
            err(
                "DUPLICATE_ID",
                element_id,
                f"id {element_id!r} declared as both {seen[element_id]} and {label}",
            )
        else:
            seen[element_id] = label
    if not ID_RE.match(m.identifier):
        err("INVALID_ID", m.identifier, "manifest identifier is not a valid identifier")

    role_ids = {r.id for r in m.roles}
    activity_ids = {a.id for a in m.activities}
    resource_ids = {r.id for r in m.resources}
    env_ids = {e.id for e in m.environments}

    for r in m.roles:
        if r.min_persons < 0:
            err("PERSON_BOUNDS", r.id, f"min_persons {r.min_persons} is negative")
        if r.max_persons is not UNBOUNDED:
            if r.max_persons < 1:
                err("PERSON_BOUNDS", r.id, f"max_persons {r.max_persons} must be positive")
            elif r.min_persons > r.max_persons:
                err(
                    "PERSON_BOUNDS",
                    r.id,
                    f"min_persons {r.min_persons} exceeds max_persons {r.max_persons}",
                )

    for a in m.activities:
        if a.kind == ActivityKind.STRUCTURE and a.structure is None:
            err("STRUCTURE_MISSING", a.id, "STRUCTURE activity has no <structure> element")
        if a.kind != ActivityKind.STRUCTURE and a.structure is not None:
            err("STRUCTURE_UNEXPECTED", a.id, f"{a.kind.value} activity carries a structure")
        if a.kind == ActivityKind.STRUCTURE and a.completion != CompletionRule.AUTO_ON_CHILDREN:
            err("STRUCTURE_COMPLETION", a.id, "STRUCTURE activities complete AUTO_ON_CHILDREN")
        if a.initially_hidden and a.kind != ActivityKind.SUPPORT:
            err("HIDDEN_NOT_SUPPORT", a.id, "initially-hidden applies to SUPPORT activities only")
        if a.structure is not None:
            s = a.structure
            for child in s.children:
                if child not in activity_ids:
                    err("DANGLING_REF", a.id, f"structure child {child!r} is not an activity")
            if s.mode == StructureMode.SELECTION:
                if s.number_to_select is None or s.number_to_select < 1:
                    err("SELECT_COUNT", a.id, "SELECTION requires a positive number-to-select")
                elif s.number_to_select > len(s.children):
                    err(
                        "SELECT_COUNT",
                        a.id,
                        f"number-to-select {s.number_to_select} exceeds "
                        f"{len(s.children)} children",
                    )
            elif s.number_to_select is not None:
                warn("SELECT_COUNT", a.id, "number-to-select is ignored for SEQUENCE")
        for ref in a.environment_refs:
            if ref not in env_ids:
                err("DANGLING_REF", a.id, f"environment-ref {ref!r} does not resolve")
        if a.content_ref is not None and a.content_ref not in resource_ids:
            err("DANGLING_REF", a.id, f"content-ref {a.content_ref!r} does not resolve")

    # Cycle check over the structure child graph (only through structures).
    graph = {
        a.id: [c for c in a.structure.children]
        for a in m.activities
        if a.structure is not None
    }
    state: dict[str, int] = {}  # 1 = on stack, 2 = done

    def visit(node: str, owner: str) -> bool:
        if state.get(node) == 1:
            return True
        if state.get(node) == 2:
            return False
        state[node] = 1
        for child in graph.get(node, ()):
            if child in graph or child == node:
                if visit(child, owner):
                    state[node] = 2
                    return True
        state[node] = 2
        return False

    for node in graph:
        state.clear()
        if visit(node, node):
            err("STRUCTURE_CYCLE", node, "structure children form a cycle")

    for e in m.environments:
        for ref in e.learning_objects:
            if ref not in resource_ids:
                err("DANGLING_REF", e.id, f"learning-object {ref!r} does not resolve")
        for req in e.device_requirements:
            paths_seen = set()
            for item in req.items:
                if item.path in paths_seen:
                    err(
                        "REQ_DUP_PATH",
                        e.id,
                        f"duplicate item path {item.path!r} in requirement on {req.device_class}",
                    )
                paths_seen.add(item.path)
                if item.value_range is not None:
                    lo, hi = item.value_range
                    if lo > hi:
                        err("REQ_RANGE", e.id, f"range [{lo}, {hi}] on {item.path!r} is inverted")
                    if item.data_type not in (DataType.FLOAT, DataType.INT):
                        err(
                            "REQ_RANGE_TYPE",
                            e.id,
                            f"range on {item.path!r} requires a numeric data type",
                        )

    if not m.method.plays:
        err("EMPTY_METHOD", m.identifier, "method declares no play")
    for p in m.method.plays:
        if not p.acts:
            err("EMPTY_PLAY", p.id, "play declares no act")
        for act in p.acts:
            if not act.role_parts:
                err("EMPTY_ACT", act.id, "act declares no role-part")
            for rp in act.role_parts:
                if rp.role_ref not in role_ids:
                    err("DANGLING_REF", rp.id, f"role-ref {rp.role_ref!r} does not resolve")
                if rp.activity_ref not in activity_ids:
                    err(
                        "DANGLING_REF",
                        rp.id,
                        f"activity-ref {rp.activity_ref!r} does not resolve",
                    )

    ok = not any(i.severity == Severity.ERROR for i in issues)
    return ValidationReport(ok=ok, issues=tuple(issues))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize_manifest(m: Manifest) -> str:
    """Emit canonical manifest XML; requires the manifest to validate ok."""
    report = validate_manifest(m)
    if not report.ok:
        raise InvalidManifest(report)

    w = XmlWriter()
    w.open("manifest", identifier=m.identifier, title=m.title)

    w.open("roles")
    for r in m.roles:
        w.element(
            "role",
            id=r.id,
            kind=r.kind.value,
            **{
                "min-persons": str(r.min_persons),
                "max-persons": "UNBOUNDED" if r.max_persons is UNBOUNDED else str(r.max_persons),
            },
        )
    w.close()

    w.open("activities")
    for a in m.activities:
        attrs = {
            "id": a.id,
            "kind": a.kind.value,
            "title": a.title,
            "completion": a.completion.value,
            "content-ref": a.content_ref,
            "initially-hidden": fmt_bool(a.initially_hidden) if a.initially_hidden else None,
        }
        if not a.environment_refs and a.structure is None:
            w.element("activity", **attrs)
            continue
        w.open("activity", **attrs)
        for ref in a.environment_refs:
            w.element("environment-ref", ref=ref)
        if a.structure is not None:
            s = a.structure
            w.open(
                "structure",
                mode=s.mode.value,
                **{
                    "number-to-select": None
                    if s.number_to_select is None
                    else str(s.number_to_select)
                },
            )
            for child in s.children:
                w.element("child", ref=child)
            w.close()
        w.close()
    w.close()

    w.open("environments")
    for e in m.environments:
        if not (e.learning_objects or e.services or e.device_requirements):
            w.element("environment", id=e.id)
            continue
        w.open("environment", id=e.id)
        for ref in e.learning_objects:
            w.element("learning-object", ref=ref)
        for sid in e.services:
            w.element("service", id=sid)
        for req in e.device_requirements:
            w.open("device-requirement", **{"device-class": req.device_class})
            for item in req.items:
                lo, hi = (None, None) if item.value_range is None else item.value_range
                w.element(
                    "item",
                    path=item.path,
                    access=item.access.value,
                    lo=None if lo is None else fmt_float(lo),
                    hi=None if hi is None else fmt_float(hi),
                    **{"data-type": item.data_type.value},
                )
            w.close()
        w.close()
    w.close()

    w.open("method")
    for p in m.method.plays:
        w.open("play", id=p.id)
        for act in p.acts:
            w.open("act", id=act.id)
            for rp in act.role_parts:
                w.element(
                    "role-part",
                    id=rp.id,
                    **{"role-ref": rp.role_ref, "activity-ref": rp.activity_ref},
                )
            w.close()
        w.close()
    w.close()

    w.open("resources")
    for res in m.resources:
        w.element("resource", id=res.id, path=res.path, **{"media-type": res.media_type})
    w.close()

    w.close()
    return w.result()
