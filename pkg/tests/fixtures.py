"""Shared builders for test manifests and packages."""

from __future__ import annotations

from elab.learning_design import (
    Access,
    Act,
    Activity,
    ActivityKind,
    CompletionRule,
    DataType,
    DeviceRequirement,
    Environment,
    Manifest,
    Method,
    Play,
    RequiredItem,
    ResourceRef,
    Role,
    RoleKind,
    RolePart,
    Structure,
    StructureMode,
)
from elab.packaging import PackageResource, UnitOfLearning, save_package


def minimal_manifest(identifier: str = "uol-min") -> Manifest:
    """One learner role, one learning activity, one play/act/role-part."""
    return Manifest(
        identifier=identifier,
        title="Minimal unit",
        roles=(Role(id="r-learner", kind=RoleKind.LEARNER, min_persons=1, max_persons=None),),
        activities=(Activity(id="a1", kind=ActivityKind.LEARNING, title="Do the thing"),),
        method=Method(
            plays=(
                Play(
                    id="p1",
                    acts=(Act(id="act1", role_parts=(RolePart("rp1", "r-learner", "a1"),)),),
                ),
            )
        ),
    )


def staffed_manifest() -> Manifest:
    """Learner + staff roles, a hidden support activity, two-act method."""
    return Manifest(
        identifier="uol-staffed",
        title="Staffed unit",
        roles=(
            Role(id="r-learner", kind=RoleKind.LEARNER, min_persons=1, max_persons=None),
            Role(id="r-staff", kind=RoleKind.STAFF, min_persons=1, max_persons=2),
        ),
        activities=(
            Activity(id="a1", kind=ActivityKind.LEARNING, title="Experiment"),
            Activity(id="a2", kind=ActivityKind.LEARNING, title="Report"),
            Activity(
                id="hint",
                kind=ActivityKind.SUPPORT,
                title="Hint",
                initially_hidden=True,
            ),
            Activity(id="watch", kind=ActivityKind.SUPPORT, title="Monitor learners"),
        ),
        method=Method(
            plays=(
                Play(
                    id="p1",
                    acts=(
                        Act(
                            id="act1",
                            role_parts=(
                                RolePart("rp1", "r-learner", "a1"),
                                RolePart("rp2", "r-staff", "watch"),
                            ),
                        ),
                        Act(id="act2", role_parts=(RolePart("rp3", "r-learner", "a2"),)),
                    ),
                ),
            )
        ),
    )


def tank_lab_manifest() -> Manifest:
    """The sample tank scenario: 2+ learners, an instructor, a hidden hint.

    Act 1 binds learners to the steady-level exercise and the (hidden) hint,
    and the instructor to monitoring; act 2 is the write-up. The instructor
    must reveal the hint before the learners can finish act 1.
    """
    return Manifest(
        identifier="uol-tank-lab",
        title="Water level control lab",
        roles=(
            Role(id="r-learner", kind=RoleKind.LEARNER, min_persons=1, max_persons=None),
            Role(id="r-instructor", kind=RoleKind.STAFF, min_persons=1, max_persons=2),
        ),
        activities=(
            Activity(
                id="a-steady",
                kind=ActivityKind.LEARNING,
                title="Reach a steady level of 1 m",
                environment_refs=("e-tank",),
                content_ref="res-instructions",
            ),
            Activity(
                id="a-hint",
                kind=ActivityKind.SUPPORT,
                title="Hint: balance inflow and outflow",
                initially_hidden=True,
            ),
            Activity(id="a-report", kind=ActivityKind.LEARNING, title="Write up the results"),
            Activity(id="a-monitor", kind=ActivityKind.SUPPORT, title="Monitor the learners"),
        ),
        environments=(
            Environment(
                id="e-tank",
                learning_objects=("res-instructions",),
                services=("chat",),
                device_requirements=(
                    DeviceRequirement(
                        device_class="tank",
                        items=(
                            RequiredItem(
                                path="actuators/q_in",
                                data_type=DataType.FLOAT,
                                access=Access.READ_WRITE,
                                value_range=(0.0, 0.1),
                            ),
                            RequiredItem(
                                path="sensors/level",
                                data_type=DataType.FLOAT,
                                access=Access.READ,
                                value_range=(0.0, 1.5),
                            ),
                        ),
                    ),
                ),
            ),
        ),
        method=Method(
            plays=(
                Play(
                    id="p-lab",
                    acts=(
                        Act(
                            id="act-experiment",
                            role_parts=(
                                RolePart("rp-steady", "r-learner", "a-steady"),
                                RolePart("rp-hint", "r-learner", "a-hint"),
                                RolePart("rp-monitor", "r-instructor", "a-monitor"),
                            ),
                        ),
                        Act(
                            id="act-report",
                            role_parts=(RolePart("rp-report", "r-learner", "a-report"),),
                        ),
                    ),
                ),
            )
        ),
        resources=(
            ResourceRef(
                id="res-instructions", path="content/instructions.html", media_type="text/html"
            ),
        ),
    )


def tank_lab_unit() -> UnitOfLearning:
    return UnitOfLearning(
        manifest=tank_lab_manifest(),
        resources={
            "res-instructions": PackageResource(
                path="content/instructions.html",
                data=b"<h1>Hold the level at 1 m</h1>",
                media_type="text/html",
            )
        },
    )


def tank_lab_archive() -> bytes:
    return save_package(tank_lab_unit())


def service_config_text(
    data_dir,
    quantum: float = 10.0,
    time_scale: float = 20.0,
    auto_clock: bool = False,
    tank_count: int = 1,
) -> str:
    return f"""
# test service configuration
listen_address = 127.0.0.1:0
data_dir = {data_dir}
scheduler.quantum = {quantum}
sim.dt = 0.1
time.scale = {time_scale}
clock.auto = {'true' if auto_clock else 'false'}
device.tank.count = {tank_count}
device.tank.realism = REAL_CONSTRAINED
token.admintok = root:ADMIN
token.stafftok = sam:STAFF
token.anatok = ana:LEARNER
token.bobtok = bob:LEARNER
"""


def sequence_manifest() -> Manifest:
    """A SEQUENCE structure over two leaf activities."""
    return Manifest(
        identifier="uol-seq",
        title="Sequenced unit",
        roles=(Role(id="r-learner", kind=RoleKind.LEARNER, min_persons=1, max_persons=None),),
        activities=(
            Activity(id="a", kind=ActivityKind.LEARNING, title="First"),
            Activity(id="b", kind=ActivityKind.LEARNING, title="Second"),
            Activity(
                id="seq",
                kind=ActivityKind.STRUCTURE,
                title="In order",
                completion=CompletionRule.AUTO_ON_CHILDREN,
                structure=Structure(mode=StructureMode.SEQUENCE, children=("a", "b")),
            ),
        ),
        method=Method(
            plays=(
                Play(
                    id="p1",
                    acts=(Act(id="act1", role_parts=(RolePart("rp1", "r-learner", "seq"),)),),
                ),
            )
        ),
    )
