"""Units of learning as ZIP packages: load/save, slice, merge.

A package is a ZIP with ``imsmanifest.xml`` at its root and every declared
resource stored under its package-relative path. ``save_package`` output is
canonical (manifest entry first, resources sorted by path, fixed
timestamps), so equal units produce byte-identical archives.
"""

from __future__ import annotations

import dataclasses
import io
import posixpath
import zipfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from . import learning_design as ld
from .learning_design import InvalidManifest, Manifest

MANIFEST_NAME = "imsmanifest.xml"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class NotAnArchive(ValueError):
    """Input bytes are not a readable ZIP container."""


class MissingManifest(ValueError):
    """Archive has no imsmanifest.xml at its root."""


class MissingResource(ValueError):
    def __init__(self, resource_ids: Iterable[str]):
        self.resource_ids = tuple(sorted(resource_ids))
        super().__init__(f"declared resources missing from archive: {', '.join(self.resource_ids)}")


class InvalidUnit(ValueError):
    """Unit violates its structural invariants."""


class UnknownSelectorId(ValueError):
    def __init__(self, ids: Iterable[str]):
        self.ids = tuple(sorted(ids))
        super().__init__(f"selector ids not in manifest: {', '.join(self.ids)}")


class EmptySelection(ValueError):
    """Selector selects nothing."""


class IdConflict(ValueError):
    def __init__(self, ids: Iterable[str]):
        self.ids = tuple(sorted(ids))
        super().__init__(f"colliding ids: {', '.join(self.ids)}")


class MergeInvalid(ValueError):
    """Merge result fails manifest validation (cross-kind id reuse etc.)."""


@dataclass(frozen=True)
class PackageResource:
    path: str
    data: bytes
    media_type: str = "application/octet-stream"


@dataclass(frozen=True)
class UnitOfLearning:
    manifest: Manifest
    resources: Mapping[str, PackageResource] = field(default_factory=dict)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "resources", dict(self.resources))

    def __eq__(self, other):
        if not isinstance(other, UnitOfLearning):
            return NotImplemented
        return self.manifest == other.manifest and dict(self.resources) == dict(other.resources)


class PolicyKind(str, Enum):
    REJECT = "REJECT"
    PREFER_LEFT = "PREFER_LEFT"
    RENAME_RIGHT = "RENAME_RIGHT"


@dataclass(frozen=True)
class ConflictPolicy:
    kind: PolicyKind
    suffix: str = ""

    def __post_init__(self):
        if self.kind == PolicyKind.RENAME_RIGHT and not self.suffix:
            raise ValueError("RENAME_RIGHT needs a nonempty suffix")


REJECT = ConflictPolicy(PolicyKind.REJECT)
PREFER_LEFT = ConflictPolicy(PolicyKind.PREFER_LEFT)


def rename_right(suffix: str) -> ConflictPolicy:
    return ConflictPolicy(PolicyKind.RENAME_RIGHT, suffix)


@dataclass(frozen=True)
class SliceSelector:
    play_ids: frozenset[str] | None = None
    activity_ids: frozenset[str] | None = None

    def __post_init__(self):
        if (self.play_ids is None) == (self.activity_ids is None):
            raise ValueError("selector takes exactly one of play_ids / activity_ids")
        chosen = self.play_ids if self.play_ids is not None else self.activity_ids
        if not chosen:
            raise EmptySelection("selector is empty")

    @classmethod
    def plays(cls, *ids: str) -> "SliceSelector":
        return cls(play_ids=frozenset(ids))

    @classmethod
    def activities(cls, *ids: str) -> "SliceSelector":
        return cls(activity_ids=frozenset(ids))


def _safe_path(path: str) -> bool:
    if not path or path.startswith("/") or "\\" in path:
        return False
    normalized = posixpath.normpath(path)
    return normalized == path and not normalized.startswith("..")


def _check_unit(uol: UnitOfLearning) -> None:
    report = ld.validate_manifest(uol.manifest)
    if not report.ok:
        raise InvalidUnit(f"manifest fails validation: {report.errors()}")
    declared = {r.id: r for r in uol.manifest.resources}
    for rid, ref in declared.items():
        entry = uol.resources.get(rid)
        if entry is None:
            raise InvalidUnit(f"declared resource {rid!r} has no package entry")
        if entry.path != ref.path:
            raise InvalidUnit(f"resource {rid!r} path mismatch: {entry.path!r} != {ref.path!r}")
    for rid in uol.resources:
        if rid not in declared:
            raise InvalidUnit(f"package entry {rid!r} is not declared in the manifest")
    by_path: dict[str, bytes] = {}
    for rid, entry in uol.resources.items():
        if not _safe_path(entry.path) or entry.path == MANIFEST_NAME:
            raise InvalidUnit(f"resource {rid!r} has unsafe path {entry.path!r}")
        if entry.path in by_path and by_path[entry.path] != entry.data:
            raise InvalidUnit(f"path {entry.path!r} declared twice with different content")
        by_path[entry.path] = entry.data


def load_package(archive: bytes) -> UnitOfLearning:
    """Read a package archive into a unit of learning.

    The manifest must parse and validate ok and every declared resource must
    be present. Files not declared in the manifest are ignored, each noted
    in the returned unit's ``warnings``.
    """
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive))
    except zipfile.BadZipFile as exc:
        raise NotAnArchive(f"not a ZIP archive: {exc}") from exc
    with zf:
        names = set(zf.namelist())
        if MANIFEST_NAME not in names:
            raise MissingManifest(f"archive has no {MANIFEST_NAME} at its root")
        manifest = ld.parse_manifest(zf.read(MANIFEST_NAME).decode("utf-8"))
        report = ld.validate_manifest(manifest)
        if not report.ok:
            raise InvalidManifest(report)

        resources: dict[str, PackageResource] = {}
        missing: list[str] = []
        declared_paths = set()
        for ref in manifest.resources:
            declared_paths.add(ref.path)
            if ref.path in names and _safe_path(ref.path):
                resources[ref.id] = PackageResource(
                    path=ref.path, data=zf.read(ref.path), media_type=ref.media_type
                )
            else:
                missing.append(ref.id)
        if missing:
            raise MissingResource(missing)

        warnings = tuple(
            f"undeclared file ignored: {name}"
            for name in sorted(names)
            if name != MANIFEST_NAME and name not in declared_paths and not name.endswith("/")
        )
    return UnitOfLearning(manifest=manifest, resources=resources, warnings=warnings)


def save_package(uol: UnitOfLearning) -> bytes:
    """Write the canonical archive; ``load_package`` of the result equals ``uol``."""
    try:
        _check_unit(uol)
    except InvalidUnit:
        raise
    except InvalidManifest as exc:
        raise InvalidUnit(str(exc)) from exc

    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as zf:
        def write(name: str, data: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)

        write(MANIFEST_NAME, ld.serialize_manifest(uol.manifest).encode("utf-8"))
        written: set[str] = set()
        for entry in sorted(uol.resources.values(), key=lambda r: r.path):
            if entry.path not in written:
                write(entry.path, entry.data)
                written.add(entry.path)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Slicing
# ---------------------------------------------------------------------------


def _structure_closure(manifest: Manifest, seed: set[str]) -> set[str]:
    """Activities reachable from ``seed`` through structure children."""
    amap = {a.id: a for a in manifest.activities}
    out: set[str] = set()
    stack = [aid for aid in seed]
    while stack:
        aid = stack.pop()
        if aid in out:
            continue
        out.add(aid)
        a = amap.get(aid)
        if a is not None and a.structure is not None:
            stack.extend(a.structure.children)
    return out


def reachable_activity_ids(manifest: Manifest, selector: SliceSelector | None) -> set[str]:
    """Activity ids kept by a selector (all method-referenced ones if None)."""
    if selector is None:
        return {a.id for a in manifest.activities}
    if selector.play_ids is not None:
        known = {p.id for p in manifest.method.plays}
        unknown = selector.play_ids - known
        if unknown:
            raise UnknownSelectorId(unknown)
        seed = {
            rp.activity_ref
            for p in manifest.method.plays
            if p.id in selector.play_ids
            for act in p.acts
            for rp in act.role_parts
        }
    else:
        known = {a.id for a in manifest.activities}
        unknown = selector.activity_ids - known
        if unknown:
            raise UnknownSelectorId(unknown)
        seed = set(selector.activity_ids)
    return _structure_closure(manifest, seed)


def _fresh_id(base: str, taken: set[str]) -> str:
    candidate = base
    n = 1
    while candidate in taken:
        n += 1
        candidate = f"{base}-{n}"
    taken.add(candidate)
    return candidate


def slice_package(uol: UnitOfLearning, selector: SliceSelector) -> UnitOfLearning:
    """Keep the selected plays (or a synthesized play over selected
    activities) plus everything they transitively reference."""
    m = uol.manifest
    kept_activities = reachable_activity_ids(m, selector)

    if selector.play_ids is not None:
        plays = tuple(p for p in m.method.plays if p.id in selector.play_ids)
        kept_roles = {
            rp.role_ref for p in plays for act in p.acts for rp in act.role_parts
        }
    else:
        # Synthesize one play/act binding each selected activity to the
        # roles that address it in the source method (first declared role
        # as fallback for activities the method never references).
        taken = {eid for eid, _ in ld._element_ids(m)}
        play_id = _fresh_id("selected-play", taken)
        act_id = _fresh_id("selected-act", taken)
        role_parts = []
        kept_roles = set()
        ordered = [a.id for a in m.activities if a.id in selector.activity_ids]
        for aid in ordered:
            bindings = []
            for p in m.method.plays:
                for act in p.acts:
                    for rp in act.role_parts:
                        if rp.activity_ref == aid and rp.role_ref not in bindings:
                            bindings.append(rp.role_ref)
            if not bindings and m.roles:
                bindings = [m.roles[0].id]
            for role_id in bindings:
                role_parts.append(
                    ld.RolePart(id=_fresh_id(f"selected-rp-{aid}", taken), role_ref=role_id,
                                activity_ref=aid)
                )
                kept_roles.add(role_id)
        plays = (ld.Play(id=play_id, acts=(ld.Act(id=act_id, role_parts=tuple(role_parts)),)),)

    kept_envs = {
        ref
        for a in m.activities
        if a.id in kept_activities
        for ref in a.environment_refs
    }
    kept_resources = {
        a.content_ref for a in m.activities if a.id in kept_activities and a.content_ref
    }
    kept_resources |= {
        ref
        for e in m.environments
        if e.id in kept_envs
        for ref in e.learning_objects
    }

    manifest = dataclasses.replace(
        m,
        roles=tuple(r for r in m.roles if r.id in kept_roles),
        activities=tuple(a for a in m.activities if a.id in kept_activities),
        environments=tuple(e for e in m.environments if e.id in kept_envs),
        method=ld.Method(plays=plays),
        resources=tuple(r for r in m.resources if r.id in kept_resources),
        parse_warnings=(),
    )
    resources = {rid: res for rid, res in uol.resources.items() if rid in kept_resources}
    return UnitOfLearning(manifest=manifest, resources=resources)


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------


def _rewrite_manifest_ids(m: Manifest, mapping: dict[str, str]) -> Manifest:
    def ref(x: str | None) -> str | None:
        return None if x is None else mapping.get(x, x)

    roles = tuple(dataclasses.replace(r, id=ref(r.id)) for r in m.roles)
    activities = tuple(
        dataclasses.replace(
            a,
            id=ref(a.id),
            environment_refs=tuple(ref(e) for e in a.environment_refs),
            content_ref=ref(a.content_ref),
            structure=None
            if a.structure is None
            else dataclasses.replace(
                a.structure, children=tuple(ref(c) for c in a.structure.children)
            ),
        )
        for a in m.activities
    )
    environments = tuple(
        dataclasses.replace(
            e,
            id=ref(e.id),
            learning_objects=tuple(ref(x) for x in e.learning_objects),
        )
        for e in m.environments
    )
    plays = tuple(
        ld.Play(
            id=ref(p.id),
            acts=tuple(
                ld.Act(
                    id=ref(act.id),
                    role_parts=tuple(
                        ld.RolePart(
                            id=ref(rp.id),
                            role_ref=ref(rp.role_ref),
                            activity_ref=ref(rp.activity_ref),
                        )
                        for rp in act.role_parts
                    ),
                )
                for act in p.acts
            ),
        )
        for p in m.method.plays
    )
    resources = tuple(dataclasses.replace(r, id=ref(r.id)) for r in m.resources)
    return dataclasses.replace(
        m,
        roles=roles,
        activities=activities,
        environments=environments,
        method=ld.Method(plays=plays),
        resources=resources,
        parse_warnings=(),
    )


def _drop_ids(m: Manifest, drop: set[str]) -> Manifest:
    plays = []
    for p in m.method.plays:
        if p.id in drop:
            continue
        acts = []
        for act in p.acts:
            if act.id in drop:
                continue
            rps = tuple(rp for rp in act.role_parts if rp.id not in drop)
            acts.append(ld.Act(id=act.id, role_parts=rps))
        plays.append(ld.Play(id=p.id, acts=tuple(acts)))
    return dataclasses.replace(
        m,
        roles=tuple(r for r in m.roles if r.id not in drop),
        activities=tuple(a for a in m.activities if a.id not in drop),
        environments=tuple(e for e in m.environments if e.id not in drop),
        method=ld.Method(plays=tuple(plays)),
        resources=tuple(r for r in m.resources if r.id not in drop),
        parse_warnings=(),
    )


def _unique_path(path: str, taken: dict[str, bytes], data: bytes) -> str:
    if path not in taken or taken[path] == data:
        return path
    stem, dot, ext = path.rpartition(".")
    if not dot:
        stem, ext = path, ""
    n = 1
    while True:
        candidate = f"{stem}__{n}{dot}{ext}" if dot else f"{stem}__{n}"
        if candidate not in taken or taken[candidate] == data:
            return candidate
        n += 1


def merge_packages(
    left: UnitOfLearning, right: UnitOfLearning, policy: ConflictPolicy
) -> UnitOfLearning:
    """Union of two units; right's plays append after left's.

    Id collisions resolve per policy: REJECT raises, PREFER_LEFT drops
    right's colliding declarations (references then resolve to left's
    elements), RENAME_RIGHT suffixes right's colliding ids and rewrites
    references. Resource path clashes with differing bytes get the right
    path deterministically renamed.
    """
    _check_unit(left)
    _check_unit(right)
    left_ids = {eid for eid, _ in ld._element_ids(left.manifest)}
    right_ids = {eid for eid, _ in ld._element_ids(right.manifest)}
    colliding = left_ids & right_ids

    right_manifest = right.manifest
    right_resources = dict(right.resources)
    if colliding:
        if policy.kind == PolicyKind.REJECT:
            raise IdConflict(colliding)
        if policy.kind == PolicyKind.PREFER_LEFT:
            right_manifest = _drop_ids(right_manifest, colliding)
            for rid in colliding:
                right_resources.pop(rid, None)
        else:
            taken = left_ids | right_ids
            mapping = {}
            for cid in sorted(colliding):
                candidate = cid + policy.suffix
                while candidate in taken:
                    candidate += policy.suffix
                taken.add(candidate)
                mapping[cid] = candidate
            right_manifest = _rewrite_manifest_ids(right_manifest, mapping)
            right_resources = {mapping.get(rid, rid): res for rid, res in right_resources.items()}

    # Resolve resource path clashes that carry different bytes.
    paths: dict[str, bytes] = {res.path: res.data for res in left.resources.values()}
    fixed_resources: dict[str, PackageResource] = {}
    path_renames: dict[str, str] = {}
    for rid, res in right_resources.items():
        new_path = _unique_path(res.path, paths, res.data)
        if new_path != res.path:
            path_renames[res.path] = new_path
            res = dataclasses.replace(res, path=new_path)
        paths[res.path] = res.data
        fixed_resources[rid] = res
    if path_renames:
        right_manifest = dataclasses.replace(
            right_manifest,
            resources=tuple(
                dataclasses.replace(r, path=path_renames.get(r.path, r.path))
                for r in right_manifest.resources
            ),
        )

    lm = left.manifest
    merged = dataclasses.replace(
        lm,
        roles=lm.roles + right_manifest.roles,
        activities=lm.activities + right_manifest.activities,
        environments=lm.environments + right_manifest.environments,
        method=ld.Method(plays=lm.method.plays + right_manifest.method.plays),
        resources=lm.resources + right_manifest.resources,
        parse_warnings=(),
    )
    report = ld.validate_manifest(merged)
    if not report.ok:
        raise MergeInvalid(f"merge result invalid: {report.errors()}")
    resources = dict(left.resources)
    resources.update(fixed_resources)
    return UnitOfLearning(manifest=merged, resources=resources)
