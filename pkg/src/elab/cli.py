"""elab command line.

    elab serve --config FILE
    elab package validate|slice|merge|pack ...
    elab compat check PKG.zip [--play ID]... --devices descriptors.json
    elab sim tank --seconds N --q-in X [--dt D]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import compat as compat_mod
from . import packaging
from .config import load_config
from .device_core import descriptor_from_json_dict
from .learning_design import parse_manifest, serialize_manifest, validate_manifest
from .sim_devices import TankParams, tank_trajectory


@click.group()
def main():
    """Remote/virtual laboratory management service."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path):
    """Run the HTTP service."""
    import socket

    import uvicorn

    from .api import create_app
    from .service import ServiceState

    config = load_config(config_path)
    try:
        with socket.socket() as probe:
            probe.bind((config.host, config.port))
    except OSError as exc:
        raise click.ClickException(
            f"cannot bind {config.listen_address}: {exc}"
        ) from exc
    state = ServiceState(config)
    app = create_app(state)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        state.close()


@main.group()
def package():
    """Work with unit-of-learning packages."""


def _load(path: str) -> packaging.UnitOfLearning:
    try:
        return packaging.load_package(Path(path).read_bytes())
    except Exception as exc:
        raise click.ClickException(f"{path}: {exc}") from exc


@package.command()
@click.argument("archive", type=click.Path(exists=True))
def validate(archive):
    """Validate a package; exit 1 on errors."""
    uol = _load(archive)
    report = validate_manifest(uol.manifest)
    for warning in uol.warnings:
        click.echo(f"WARNING  {warning}")
    for issue in report.issues:
        click.echo(f"{issue.severity.value:8} {issue.code} [{issue.element_id}] {issue.message}")
    click.echo(f"{'ok' if report.ok else 'INVALID'}: {uol.manifest.identifier}")
    if not report.ok:
        sys.exit(1)


@package.command(name="slice")
@click.argument("archive", type=click.Path(exists=True))
@click.option("--play", "plays", multiple=True, help="Play id to keep (repeatable).")
@click.option("--activity", "activities", multiple=True, help="Activity id to keep (repeatable).")
@click.option("-o", "--output", required=True, type=click.Path())
def slice_cmd(archive, plays, activities, output):
    """Slice a package down to selected plays or activities."""
    if bool(plays) == bool(activities):
        raise click.ClickException("select either --play ids or --activity ids")
    uol = _load(archive)
    selector = (
        packaging.SliceSelector.plays(*plays)
        if plays
        else packaging.SliceSelector.activities(*activities)
    )
    try:
        result = packaging.slice_package(uol, selector)
    except (packaging.UnknownSelectorId, packaging.EmptySelection) as exc:
        raise click.ClickException(str(exc)) from exc
    Path(output).write_bytes(packaging.save_package(result))
    click.echo(f"wrote {output}: {len(result.manifest.method.plays)} play(s), "
               f"{len(result.resources)} resource(s)")


@package.command()
@click.argument("left", type=click.Path(exists=True))
@click.argument("right", type=click.Path(exists=True))
@click.option(
    "--policy",
    type=click.Choice(["reject", "prefer-left", "rename-right"]),
    default="reject",
    show_default=True,
)
@click.option("--suffix", default="_b", show_default=True, help="Suffix for rename-right.")
@click.option("-o", "--output", required=True, type=click.Path())
def merge(left, right, policy, suffix, output):
    """Merge two packages; right's plays append after left's."""
    policies = {
        "reject": packaging.REJECT,
        "prefer-left": packaging.PREFER_LEFT,
        "rename-right": packaging.rename_right(suffix),
    }
    try:
        result = packaging.merge_packages(_load(left), _load(right), policies[policy])
    except (packaging.IdConflict, packaging.MergeInvalid) as exc:
        raise click.ClickException(str(exc)) from exc
    Path(output).write_bytes(packaging.save_package(result))
    click.echo(f"wrote {output}")


@package.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path())
def pack(directory, output):
    """Build a package archive from a directory holding imsmanifest.xml."""
    root = Path(directory)
    manifest_path = root / packaging.MANIFEST_NAME
    if not manifest_path.exists():
        raise click.ClickException(f"{directory} has no {packaging.MANIFEST_NAME}")
    manifest = parse_manifest(manifest_path.read_text(encoding="utf-8"))
    report = validate_manifest(manifest)
    if not report.ok:
        for issue in report.errors():
            click.echo(f"ERROR {issue.code} [{issue.element_id}] {issue.message}", err=True)
        raise click.ClickException("manifest does not validate")
    resources = {}
    for ref in manifest.resources:
        path = root / ref.path
        if not path.exists():
            raise click.ClickException(f"declared resource missing: {ref.path}")
        resources[ref.id] = packaging.PackageResource(
            path=ref.path, data=path.read_bytes(), media_type=ref.media_type
        )
    uol = packaging.UnitOfLearning(manifest=manifest, resources=resources)
    Path(output).write_bytes(packaging.save_package(uol))
    click.echo(f"wrote {output}")


@main.group()
def compat():
    """Scenario/device compatibility checks."""


@compat.command()
@click.argument("archive", type=click.Path(exists=True))
@click.option("--play", "plays", multiple=True, help="Check only these plays.")
@click.option("--devices", "devices_path", required=True, type=click.Path(exists=True),
              help="JSON list of device descriptors.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              show_default=True)
def check(archive, plays, devices_path, fmt):
    """Check a package (or a slice of it) against device descriptors."""
    uol = _load(archive)
    selector = packaging.SliceSelector.plays(*plays) if plays else None
    try:
        requirements = compat_mod.requirements_of(uol, selector)
    except (packaging.UnknownSelectorId, compat_mod.TypeConflict) as exc:
        raise click.ClickException(str(exc)) from exc
    raw = json.loads(Path(devices_path).read_text(encoding="utf-8"))
    descriptors = [descriptor_from_json_dict(d) for d in raw]
    report = compat_mod.check_compat(requirements, descriptors)
    if fmt == "json":
        click.echo(
            json.dumps(
                {
                    "compatible": report.compatible,
                    "violations": [
                        {
                            "device_class": v.device_class,
                            "path": v.path,
                            "kind": v.kind.value,
                            "detail": v.detail,
                        }
                        for v in report.violations
                    ],
                },
                indent=2,
            )
        )
    else:
        for v in report.violations:
            click.echo(f"{v.kind.value:20} {v.device_class}:{v.path}  {v.detail}")
        click.echo("compatible" if report.compatible else "NOT compatible")
    if not report.compatible:
        sys.exit(1)


@main.group()
def sim():
    """Offline simulator runs."""


@sim.command()
@click.option("--seconds", type=float, required=True)
@click.option("--q-in", "q_in", type=float, required=True)
@click.option("--dt", type=float, default=0.1, show_default=True)
def tank(seconds, q_in, dt):
    """Print a CSV tank trajectory (sim_time, q_in, level)."""
    params = TankParams(dt=dt)
    if not (0.0 <= q_in <= params.q_in_max):
        raise click.ClickException(f"q-in must be within [0, {params.q_in_max}]")
    click.echo("sim_time,q_in,level")
    for state in tank_trajectory(seconds, q_in, params):
        click.echo(f"{state.sim_time:.6g},{state.q_in:.6g},{state.level:.6g}")


if __name__ == "__main__":
    main()
