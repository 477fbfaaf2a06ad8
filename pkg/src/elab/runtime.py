"""Activity sequencing engine.

Instantiates runs from scenario manifests, exposes each user's current
activities, records completions, advances acts, and reports per-user
progress. All operations are pure: they take a run value and return a new
run plus the events the transition produced, so identical command sequences
always yield identical histories.

Sequencing rules:

* A play sits on one current act at a time; it advances when every
  role-part of that act is complete for every user holding the role.
* A structure activity completes per its mode: SEQUENCE when all children
  are complete, SELECTION when ``number_to_select`` children are.
* Hidden SUPPORT activities stay out of the visible set until revealed by
  a staff notification, but hiddenness never changes completion rules.
* Completions are shared per (user, activity) pair: an activity completed
  under one role-part counts everywhere it is referenced.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from .learning_design import (
    Act,
    ActivityKind,
    Environment,
    InvalidManifest,
    Manifest,
    RoleKind,
    StructureMode,
    validate_manifest,
)

SYSTEM_ACTOR = "SYSTEM"


class RunStatus(str, Enum):
    ACTIVE = "ACTIVE"
    COMPLETED = "COMPLETED"


class RunEventKind(str, Enum):
    RUN_CREATED = "RUN_CREATED"
    ACTIVITY_COMPLETED = "ACTIVITY_COMPLETED"
    ACT_ADVANCED = "ACT_ADVANCED"
    PLAY_DONE = "PLAY_DONE"
    RUN_DONE = "RUN_DONE"
    ACTIVITY_REVEALED = "ACTIVITY_REVEALED"
    NOTIFIED = "NOTIFIED"


class UnknownRole(ValueError):
    pass


class RoleUnderfilled(ValueError):
    def __init__(self, role_id: str, needed: int, got: int):
        super().__init__(f"role {role_id!r} needs {needed} person(s), got {got}")
        self.role_id, self.needed, self.got = role_id, needed, got


class RoleOverfilled(ValueError):
    def __init__(self, role_id: str, limit: int, got: int):
        super().__init__(f"role {role_id!r} allows {limit} person(s), got {got}")
        self.role_id, self.limit, self.got = role_id, limit, got


class UnknownUser(ValueError):
    pass


class NotVisible(ValueError):
    pass


class AlreadyCompleted(ValueError):
    pass


class RunNotActive(ValueError):
    pass


class NotStaff(ValueError):
    pass


class NotHiddenSupport(ValueError):
    pass


@dataclass(frozen=True)
class RunEvent:
    seq: int
    at: float
    kind: RunEventKind
    actor: str
    payload: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Run:
    id: str
    uol_ref: str
    assignments: Mapping[str, frozenset[str]]
    play_states: Mapping[str, int]  # play id -> current act index; == len(acts) when done
    completion: Mapping[tuple[str, str], float]  # (user, activity) -> completed_at
    revealed: frozenset[str] = frozenset()
    status: RunStatus = RunStatus.ACTIVE
    next_seq: int = 1

    def roles_of(self, user: str) -> frozenset[str]:
        try:
            return self.assignments[user]
        except KeyError:
            raise UnknownUser(f"user {user!r} is not assigned in run {self.id!r}") from None


@dataclass(frozen=True)
class VisibleActivity:
    activity_id: str
    title: str
    kind: ActivityKind
    source_role_part: str
    actionable: bool
    environment: Environment | None = None


def _play_done(manifest: Manifest, run: Run, play_id: str) -> bool:
    play = next(p for p in manifest.method.plays if p.id == play_id)
    return run.play_states[play_id] >= len(play.acts)


def _is_complete(manifest: Manifest, run: Run, user: str, activity_id: str) -> bool:
    a = manifest.activity(activity_id)
    if a.structure is None:
        return (user, activity_id) in run.completion
    s = a.structure
    done = sum(1 for c in s.children if _is_complete(manifest, run, user, c))
    if s.mode == StructureMode.SEQUENCE:
        return done == len(s.children)
    return done >= (s.number_to_select or 1)


def _act_complete(manifest: Manifest, run: Run, act: Act) -> bool:
    for rp in act.role_parts:
        for user, roles in run.assignments.items():
            if rp.role_ref in roles and not _is_complete(manifest, run, user, rp.activity_ref):
                return False
    return True


def _expose(manifest: Manifest, run: Run, user: str, activity_id: str) -> list[str]:
    """Activity ids a role-part on ``activity_id`` currently exposes."""
    a = manifest.activity(activity_id)
    if a.structure is None:
        return [activity_id]
    s = a.structure
    if s.mode == StructureMode.SEQUENCE:
        for child in s.children:
            if not _is_complete(manifest, run, user, child):
                return _expose(manifest, run, user, child)
        return []
    done = sum(1 for c in s.children if _is_complete(manifest, run, user, c))
    if done >= (s.number_to_select or 1):
        return []
    out: list[str] = []
    for child in s.children:
        if not _is_complete(manifest, run, user, child):
            out.extend(_expose(manifest, run, user, child))
    return out


def _hidden(manifest: Manifest, run: Run, activity_id: str) -> bool:
    a = manifest.activity(activity_id)
    return a.initially_hidden and activity_id not in run.revealed


def leaf_activities(manifest: Manifest, activity_id: str) -> frozenset[str]:
    """Leaves under an activity; the activity itself if it is a leaf."""
    a = manifest.activity(activity_id)
    if a.structure is None:
        return frozenset({activity_id})
    out: set[str] = set()
    for child in a.structure.children:
        out |= leaf_activities(manifest, child)
    return frozenset(out)


def _settle(manifest: Manifest, run: Run, at: float, events: list[RunEvent]) -> Run:
    """Advance every play as far as completed acts allow, then close the run."""
    seq = run.next_seq
    play_states = dict(run.play_states)
    for play in manifest.method.plays:
        idx = play_states[play.id]
        while idx < len(play.acts) and _act_complete(manifest, run, play.acts[idx]):
            if idx + 1 < len(play.acts):
                events.append(
                    RunEvent(
                        seq,
                        at,
                        RunEventKind.ACT_ADVANCED,
                        SYSTEM_ACTOR,
                        {"play_id": play.id, "from_index": idx, "to_index": idx + 1},
                    )
                )
            else:
                events.append(
                    RunEvent(
                        seq, at, RunEventKind.PLAY_DONE, SYSTEM_ACTOR, {"play_id": play.id}
                    )
                )
            seq += 1
            idx += 1
        play_states[play.id] = idx
    status = run.status
    all_done = all(play_states[p.id] >= len(p.acts) for p in manifest.method.plays)
    if status == RunStatus.ACTIVE and all_done:
        status = RunStatus.COMPLETED
        events.append(RunEvent(seq, at, RunEventKind.RUN_DONE, SYSTEM_ACTOR, {}))
        seq += 1
    return replace(run, play_states=play_states, status=status, next_seq=seq)


def create_run(
    manifest: Manifest,
    assignments: Mapping[str, frozenset[str] | set[str] | tuple[str, ...] | list[str]],
    run_id: str,
    uol_ref: str = "",
    at: float = 0.0,
) -> tuple[Run, list[RunEvent]]:
    """Start a run with users assigned to roles; role person bounds apply."""
    report = validate_manifest(manifest)
    if not report.ok:
        raise InvalidManifest(report)
    role_ids = {r.id for r in manifest.roles}
    normalized = {user: frozenset(roles) for user, roles in assignments.items()}
    for user, roles in normalized.items():
        unknown = roles - role_ids
        if unknown:
            raise UnknownRole(f"user {user!r} assigned to unknown role(s): {sorted(unknown)}")
    for role in manifest.roles:
        holders = sum(1 for roles in normalized.values() if role.id in roles)
        if holders < role.min_persons:
            raise RoleUnderfilled(role.id, role.min_persons, holders)
        if role.max_persons is not None and holders > role.max_persons:
            raise RoleOverfilled(role.id, role.max_persons, holders)

    run = Run(
        id=run_id,
        uol_ref=uol_ref or manifest.identifier,
        assignments=normalized,
        play_states={p.id: 0 for p in manifest.method.plays},
        completion={},
        next_seq=1,
    )
    events = [
        RunEvent(
            1,
            at,
            RunEventKind.RUN_CREATED,
            SYSTEM_ACTOR,
            {
                "run_id": run_id,
                "uol_ref": run.uol_ref,
                "assignments": {u: sorted(r) for u, r in normalized.items()},
            },
        )
    ]
    run = replace(run, next_seq=2)
    run = _settle(manifest, run, at, events)
    return run, events


def visible_activities(manifest: Manifest, run: Run, user: str) -> list[VisibleActivity]:
    """The user's activities in every play's current act, structures expanded."""
    roles = run.roles_of(user)
    out: list[VisibleActivity] = []
    seen: set[tuple[str, str]] = set()
    for play in manifest.method.plays:
        idx = run.play_states[play.id]
        if idx >= len(play.acts):
            continue
        for rp in play.acts[idx].role_parts:
            if rp.role_ref not in roles:
                continue
            for aid in _expose(manifest, run, user, rp.activity_ref):
                if _hidden(manifest, run, aid) or (rp.id, aid) in seen:
                    continue
                seen.add((rp.id, aid))
                a = manifest.activity(aid)
                env = (
                    manifest.environment(a.environment_refs[0])
                    if a.environment_refs
                    else None
                )
                out.append(
                    VisibleActivity(
                        activity_id=aid,
                        title=a.title,
                        kind=a.kind,
                        source_role_part=rp.id,
                        actionable=(user, aid) not in run.completion,
                        environment=env,
                    )
                )
    return out


def complete_activity(
    manifest: Manifest, run: Run, user: str, activity_id: str, at: float = 0.0
) -> tuple[Run, list[RunEvent]]:
    """Record a completion and advance whatever acts it finishes."""
    if run.status != RunStatus.ACTIVE:
        raise RunNotActive(f"run {run.id!r} is {run.status.value}")
    if (user, activity_id) in run.completion:
        raise AlreadyCompleted(f"{user!r} already completed {activity_id!r}")
    visible = visible_activities(manifest, run, user)
    if not any(v.activity_id == activity_id and v.actionable for v in visible):
        raise NotVisible(f"activity {activity_id!r} is not actionable for {user!r}")

    completion = dict(run.completion)
    completion[(user, activity_id)] = at
    events = [
        RunEvent(
            run.next_seq,
            at,
            RunEventKind.ACTIVITY_COMPLETED,
            user,
            {"user": user, "activity_id": activity_id},
        )
    ]
    run = replace(run, completion=completion, next_seq=run.next_seq + 1)
    run = _settle(manifest, run, at, events)
    return run, events


def notify(
    manifest: Manifest,
    run: Run,
    actor: str,
    target_role: str,
    activity_id: str,
    at: float = 0.0,
) -> tuple[Run, list[RunEvent]]:
    """Staff-only: reveal a hidden SUPPORT activity."""
    if run.status != RunStatus.ACTIVE:
        raise RunNotActive(f"run {run.id!r} is {run.status.value}")
    actor_roles = run.roles_of(actor)
    if not any(
        manifest.role(rid).kind == RoleKind.STAFF for rid in actor_roles
    ):
        raise NotStaff(f"{actor!r} holds no staff role")
    if target_role not in {r.id for r in manifest.roles}:
        raise UnknownRole(f"target role {target_role!r} is not declared")
    try:
        a = manifest.activity(activity_id)
    except KeyError:
        raise NotHiddenSupport(f"no such activity {activity_id!r}") from None
    if a.kind != ActivityKind.SUPPORT or not a.initially_hidden:
        raise NotHiddenSupport(f"activity {activity_id!r} is not a hidden SUPPORT activity")

    events = [
        RunEvent(
            run.next_seq,
            at,
            RunEventKind.NOTIFIED,
            actor,
            {"actor": actor, "target_role": target_role, "activity_id": activity_id},
        ),
        RunEvent(
            run.next_seq + 1,
            at,
            RunEventKind.ACTIVITY_REVEALED,
            SYSTEM_ACTOR,
            {"activity_id": activity_id, "target_role": target_role},
        ),
    ]
    run = replace(
        run, revealed=run.revealed | {activity_id}, next_seq=run.next_seq + 2
    )
    return run, events


def run_status(manifest: Manifest, run: Run) -> dict:
    """Progress tree: per play the current act, per user the completed
    fraction of all leaf activities the method addresses to them."""
    plays = []
    for play in manifest.method.plays:
        idx = run.play_states[play.id]
        done = idx >= len(play.acts)
        plays.append(
            {
                "play_id": play.id,
                "current_act_index": None if done else idx,
                "current_act_id": None if done else play.acts[idx].id,
                "done": done,
            }
        )
    users = []
    for user, roles in run.assignments.items():
        addressed: set[str] = set()
        for play in manifest.method.plays:
            for act in play.acts:
                for rp in act.role_parts:
                    if rp.role_ref in roles:
                        addressed |= leaf_activities(manifest, rp.activity_ref)
        completed = sum(1 for aid in addressed if (user, aid) in run.completion)
        fraction = completed / len(addressed) if addressed else 1.0
        users.append(
            {
                "user": user,
                "completed": completed,
                "total": len(addressed),
                "fraction": fraction,
            }
        )
    return {"run_id": run.id, "status": run.status.value, "plays": plays, "users": users}
