"""HTTP API over the service state.

JSON endpoints for packages, runs, and sessions; raw XML on /da; a
held-open NDJSON event stream on /events. Auth is bearer-token based with
three actor kinds (LEARNER, STAFF, ADMIN) from the service config.
"""

from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import compat as compat_mod
from . import packaging, runtime, scheduler as sched_mod
from .config import ServiceConfig, TokenInfo
from .learning_design import InvalidManifest
from .service import ServiceState, UnknownPackage, UnknownRun


class HealthResponse(BaseModel):
    status: str
    devices: int
    last_seq: int
    sim_time: float


class PackageUploadResponse(BaseModel):
    package_id: str
    identifier: str
    title: str
    ok: bool
    warnings: list[str]


class RunCreateRequest(BaseModel):
    package_id: str
    assignments: dict[str, list[str]]


class CompleteRequest(BaseModel):
    user: str
    activity_id: str


class NotifyRequest(BaseModel):
    target_role: str
    activity_id: str


class SessionCreateRequest(BaseModel):
    run_id: str
    user: str
    device_class: str


class SessionView(BaseModel):
    session_id: str
    booking_id: str
    run_id: str
    user: str
    device_class: str
    mode: str
    device_id: str | None
    da_endpoint: str
    queue_position: int | None


class ViolationView(BaseModel):
    device_class: str
    path: str
    kind: str
    detail: str


class CompatResponse(BaseModel):
    package_id: str
    compatible: bool
    violations: list[ViolationView] = Field(default_factory=list)


_CONFLICTS = (
    runtime.NotVisible,
    runtime.AlreadyCompleted,
    runtime.RunNotActive,
    runtime.RoleUnderfilled,
    runtime.RoleOverfilled,
    runtime.UnknownRole,
    runtime.NotHiddenSupport,
    sched_mod.RunNotActive,
)


def create_app(state: ServiceState) -> FastAPI:
    config: ServiceConfig = state.config

    async def lifespan(app: FastAPI):
        if config.auto_clock:
            state.start_clock()
        yield
        state.stop_clock()

    app = FastAPI(title="elab", lifespan=lifespan)
    app.state.service = state

    def principal_of(request: Request) -> TokenInfo:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip()
        info = config.tokens.get(token)
        if info is None:
            raise HTTPException(status_code=401, detail="missing or unknown token")
        return info

    def require(principal: TokenInfo, *kinds: str) -> None:
        if principal.kind not in kinds:
            raise HTTPException(
                status_code=403, detail=f"requires one of {kinds}, token is {principal.kind}"
            )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok",
            devices=len(state.registry),
            last_seq=state.log.last_seq,
            sim_time=state.clock(),
        )

    @app.post("/packages", response_model=PackageUploadResponse)
    async def upload_package(request: Request, principal: TokenInfo = Depends(principal_of)):
        require(principal, "ADMIN")
        body = await request.body()
        try:
            return PackageUploadResponse(**state.upload_package(body))
        except (packaging.NotAnArchive, packaging.MissingManifest,
                packaging.MissingResource, InvalidManifest) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/packages/{package_id}/compat", response_model=CompatResponse)
    def package_compat(
        package_id: str,
        device_class: str | None = Query(default=None),
        principal: TokenInfo = Depends(principal_of),
    ):
        try:
            uol = state.get_package(package_id)
        except UnknownPackage as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        try:
            requirements = compat_mod.requirements_of(uol)
        except compat_mod.TypeConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        if device_class is not None:
            requirements = compat_mod.RequirementSet(
                classes={
                    cls: items
                    for cls, items in requirements.classes.items()
                    if cls == device_class
                }
            )
        report = compat_mod.check_compat(requirements, state.descriptors())
        return CompatResponse(
            package_id=package_id,
            compatible=report.compatible,
            violations=[
                ViolationView(
                    device_class=v.device_class,
                    path=v.path,
                    kind=v.kind.value,
                    detail=v.detail,
                )
                for v in report.violations
            ],
        )

    @app.post("/runs")
    def create_run(body: RunCreateRequest, principal: TokenInfo = Depends(principal_of)):
        require(principal, "ADMIN", "STAFF")
        try:
            return state.create_run(body.package_id, body.assignments)
        except UnknownPackage as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except _CONFLICTS as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/runs/{run_id}")
    def run_view(run_id: str, principal: TokenInfo = Depends(principal_of)):
        try:
            return state.run_view(run_id)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/runs/{run_id}/activities")
    def run_activities(
        run_id: str, user: str = Query(...), principal: TokenInfo = Depends(principal_of)
    ):
        try:
            return state.activities(run_id, user)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except runtime.UnknownUser as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/runs/{run_id}/complete")
    def complete_activity(
        run_id: str, body: CompleteRequest, principal: TokenInfo = Depends(principal_of)
    ):
        if principal.kind == "LEARNER" and principal.user_id != body.user:
            raise HTTPException(status_code=403, detail="learners complete their own work")
        try:
            return state.complete(run_id, body.user, body.activity_id)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except runtime.UnknownUser as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except _CONFLICTS as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.post("/runs/{run_id}/notify")
    def notify(run_id: str, body: NotifyRequest, principal: TokenInfo = Depends(principal_of)):
        require(principal, "STAFF", "ADMIN")
        try:
            return state.notify(run_id, principal.user_id, body.target_role, body.activity_id)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (runtime.NotStaff, runtime.UnknownUser) as exc:
            raise HTTPException(status_code=403, detail=str(exc)) from exc
        except _CONFLICTS as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/runs/{run_id}/status")
    def run_status(run_id: str, principal: TokenInfo = Depends(principal_of)):
        try:
            return state.status(run_id)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions", response_model=SessionView)
    def open_session(body: SessionCreateRequest, principal: TokenInfo = Depends(principal_of)):
        try:
            return SessionView(**state.open_session(body.run_id, body.user, body.device_class))
        except (UnknownRun, sched_mod.UnknownDeviceClass) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except _CONFLICTS as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/sessions/{session_id}", response_model=SessionView)
    def session_view(session_id: str, principal: TokenInfo = Depends(principal_of)):
        try:
            return SessionView(**state.session_view(session_id))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}") from exc

    @app.delete("/sessions/{session_id}")
    def close_session(session_id: str, principal: TokenInfo = Depends(principal_of)):
        try:
            return state.close_session(session_id)
        except sched_mod.UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/da")
    async def data_access(request: Request, principal: TokenInfo = Depends(principal_of)):
        body = await request.body()
        xml = state.handle_da(body, actor=principal.user_id)
        return Response(content=xml, media_type="application/xml")

    @app.get("/events")
    async def events(
        since: int = Query(default=0, ge=0),
        follow: bool = Query(default=True),
        principal: TokenInfo = Depends(principal_of),
    ):
        async def stream():
            cursor = since
            while True:
                batch = state.events_since(cursor)
                for event in batch:
                    cursor = event.seq
                    yield event.to_json() + "\n"
                if not follow:
                    return
                await asyncio.sleep(0.1)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
