"""Service state + HTTP API tests (in-process, manual clock)."""

from __future__ import annotations

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from elab.api import create_app
from elab.config import parse_config
from elab.service import ServiceState, fold_events
from elab import dataccess as da

from .fixtures import service_config_text, tank_lab_archive

ADMIN = {"Authorization": "Bearer admintok"}
STAFF = {"Authorization": "Bearer stafftok"}
ANA = {"Authorization": "Bearer anatok"}
BOB = {"Authorization": "Bearer bobtok"}


@pytest.fixture
def state(tmp_path):
    config = parse_config(service_config_text(tmp_path / "data"), env={})
    service_state = ServiceState(config)
    yield service_state
    service_state.close()


@pytest.fixture
def client(state):
    app = create_app(state)
    with TestClient(app) as test_client:
        test_client.service_state = state
        yield test_client


def upload_tank_package(client) -> str:
    response = client.post("/packages", content=tank_lab_archive(), headers=ADMIN)
    assert response.status_code == 200, response.text
    return response.json()["package_id"]


def start_run(client, package_id, users=("ana", "bob")) -> str:
    assignments = {u: ["r-learner"] for u in users}
    assignments["sam"] = ["r-instructor"]
    response = client.post(
        "/runs", json={"package_id": package_id, "assignments": assignments}, headers=ADMIN
    )
    assert response.status_code == 200, response.text
    return response.json()["run_id"]


def test_health_open(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["devices"] == 1


def test_auth_required(client):
    assert client.post("/packages", content=b"x").status_code == 401
    assert client.get("/runs/run-1").status_code == 401
    assert client.get("/events", params={"follow": False}).status_code == 401


def test_learner_cannot_admin_or_notify(client):
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)
    assert client.post("/packages", content=b"x", headers=ANA).status_code == 403
    assert (
        client.post(
            "/runs", json={"package_id": package_id, "assignments": {}}, headers=ANA
        ).status_code
        == 403
    )
    response = client.post(
        f"/runs/{run_id}/notify",
        json={"target_role": "r-learner", "activity_id": "a-hint"},
        headers=ANA,
    )
    assert response.status_code == 403
    # and learners cannot complete on someone else's behalf
    response = client.post(
        f"/runs/{run_id}/complete",
        json={"user": "bob", "activity_id": "a-steady"},
        headers=ANA,
    )
    assert response.status_code == 403


def test_package_upload_and_compat(client):
    package_id = upload_tank_package(client)
    response = client.get(f"/packages/{package_id}/compat", headers=ANA)
    assert response.status_code == 200
    body = response.json()
    assert body["compatible"] is True
    # requirement filtered to a class nobody registered
    response = client.get(
        f"/packages/{package_id}/compat", params={"device_class": "laser"}, headers=ANA
    )
    assert response.json()["compatible"] is True  # no requirements on that class


def test_bad_package_rejected(client):
    response = client.post("/packages", content=b"not a zip", headers=ADMIN)
    assert response.status_code == 400


def test_run_flow_via_api(client):
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)

    activities = client.get(
        f"/runs/{run_id}/activities", params={"user": "ana"}, headers=ANA
    ).json()
    assert [a["activity_id"] for a in activities] == ["a-steady"]
    env = activities[0]["environment"]
    assert env["device_classes"] == ["tank"]

    # complete the visible activity
    response = client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-steady"},
        headers=ANA,
    )
    assert response.status_code == 200

    # hint still hidden; instructor reveals it
    response = client.post(
        f"/runs/{run_id}/notify",
        json={"target_role": "r-learner", "activity_id": "a-hint"},
        headers=STAFF,
    )
    assert response.status_code == 200
    activities = client.get(
        f"/runs/{run_id}/activities", params={"user": "ana"}, headers=ANA
    ).json()
    assert {a["activity_id"] for a in activities} == {"a-steady", "a-hint"}

    status = client.get(f"/runs/{run_id}/status", headers=STAFF).json()
    fractions = {u["user"]: u["fraction"] for u in status["users"]}
    assert fractions["ana"] == pytest.approx(1 / 3)
    assert status["status"] == "ACTIVE"


def test_complete_conflicts(client):
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)
    ok = client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-steady"},
        headers=ANA,
    )
    assert ok.status_code == 200
    dup = client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-steady"},
        headers=ANA,
    )
    assert dup.status_code == 409
    invisible = client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-report"},
        headers=ANA,
    )
    assert invisible.status_code == 409


def test_session_lifecycle_and_da(client):
    state = client.service_state
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)

    first = client.post(
        "/sessions",
        json={"run_id": run_id, "user": "ana", "device_class": "tank"},
        headers=ANA,
    ).json()
    assert first["mode"] == "REAL"
    assert first["device_id"] == "tank-1"

    second = client.post(
        "/sessions",
        json={"run_id": run_id, "user": "bob", "device_class": "tank"},
        headers=BOB,
    ).json()
    assert second["mode"] == "SHADOW"
    assert second["queue_position"] == 1

    # drive the real tank through /da
    write = da.encode_request(
        da.WriteRequest(
            first["device_id"],
            (da.WriteSpec("actuators/q_in", da.DataType.FLOAT, 0.05),),
        )
    )
    response = client.post("/da", content=write, headers=ANA)
    assert response.status_code == 200
    decoded = da.decode_response(response.text)
    assert decoded.results[0].accepted

    # write-through snapshot persisted before the ack
    saved = state.store.load(run_id, "ana", "tank")
    assert saved is not None and saved.state["actuators/q_in"] == 0.05

    read = da.encode_request(da.ReadRequest(first["device_id"], ("actuators/q_in",)))
    decoded = da.decode_response(client.post("/da", content=read, headers=ANA).text)
    assert decoded.values[0].value == 0.05

    view = client.get(f"/sessions/{first['session_id']}", headers=ANA).json()
    assert view["mode"] == "REAL"
    closed = client.delete(f"/sessions/{first['session_id']}", headers=ANA)
    assert closed.status_code == 200
    again = client.delete(f"/sessions/{first['session_id']}", headers=ANA)
    assert again.status_code == 404
    # bob got promoted on release
    view = client.get(f"/sessions/{second['session_id']}", headers=BOB).json()
    assert view["mode"] in ("RESTORING", "REAL")


def test_preemption_via_service_clock(client):
    state = client.service_state
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)
    first = client.post(
        "/sessions",
        json={"run_id": run_id, "user": "ana", "device_class": "tank"},
        headers=ANA,
    ).json()
    second = client.post(
        "/sessions",
        json={"run_id": run_id, "user": "bob", "device_class": "tank"},
        headers=BOB,
    ).json()
    for _ in range(12):
        state.advance_time(1.0)
    ana_view = client.get(f"/sessions/{first['session_id']}", headers=ANA).json()
    bob_view = client.get(f"/sessions/{second['session_id']}", headers=BOB).json()
    assert ana_view["mode"] == "SHADOW"
    assert bob_view["mode"] in ("RESTORING", "REAL")


def test_event_stream_snapshot_and_resume(client):
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)
    with client.stream(
        "GET", "/events", params={"follow": False}, headers=STAFF
    ) as response:
        lines = [json.loads(l) for l in response.iter_lines() if l]
    assert lines[0]["seq"] == 1
    kinds = [e["kind"] for e in lines]
    assert "PACKAGE_UPLOADED" in kinds
    assert "RUN_CREATED" in kinds
    last = lines[-1]["seq"]
    client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-steady"},
        headers=ANA,
    )
    with client.stream(
        "GET", "/events", params={"follow": False, "since": last}, headers=STAFF
    ) as response:
        tail = [json.loads(l) for l in response.iter_lines() if l]
    assert [e["kind"] for e in tail] == ["ACTIVITY_COMPLETED"]
    assert tail[0]["seq"] == last + 1


def test_live_event_stream_follows(tmp_path):
    # Held-open streaming needs real HTTP semantics (client disconnects),
    # so this one runs against a uvicorn server.
    import httpx

    from .live_server import LiveService

    with LiveService(tmp_path / "data") as live:
        with httpx.Client(base_url=live.base_url, timeout=10.0) as http:
            response = http.post("/packages", content=tank_lab_archive(), headers=ADMIN)
            package_id = response.json()["package_id"]
            seen = []
            with http.stream("GET", "/events", headers=STAFF) as stream:
                for line in stream.iter_lines():
                    if line:
                        seen.append(json.loads(line))
                    if seen and seen[-1]["kind"] == "PACKAGE_UPLOADED":
                        break
            assert seen[-1]["stream_id"] == package_id
            # events appended while a consumer waits arrive without reconnect
            collected: list[dict] = []
            done = threading.Event()

            def consume():
                with http.stream(
                    "GET", "/events", params={"since": seen[-1]["seq"]}, headers=STAFF
                ) as stream:
                    for line in stream.iter_lines():
                        if line:
                            collected.append(json.loads(line))
                            done.set()
                            return

            consumer = threading.Thread(target=consume, daemon=True)
            consumer.start()
            time.sleep(0.3)
            http.post(
                "/runs",
                json={
                    "package_id": package_id,
                    "assignments": {"ana": ["r-learner"], "sam": ["r-instructor"]},
                },
                headers=ADMIN,
            )
            assert done.wait(timeout=5.0)
            consumer.join(timeout=5.0)
            assert collected[0]["kind"] == "RUN_CREATED"


def test_replay_equals_live(client):
    state = client.service_state
    package_id = upload_tank_package(client)
    run_id = start_run(client, package_id)
    client.post(
        f"/runs/{run_id}/complete",
        json={"user": "ana", "activity_id": "a-steady"},
        headers=ANA,
    )
    client.post(
        f"/runs/{run_id}/notify",
        json={"target_role": "r-learner", "activity_id": "a-hint"},
        headers=STAFF,
    )
    client.post(
        "/sessions", json={"run_id": run_id, "user": "ana", "device_class": "tank"}, headers=ANA
    )
    folded = fold_events(state.events_since(0), state.packages_dir)
    assert folded.runs[run_id].run == state.runs[run_id].run
    assert set(folded.packages) == set(state.packages)
    live_modes = {s.id: s.mode for s in state.scheduler.open_sessions()}
    folded_modes = {
        r.session_id: r.mode for r in folded.sessions.values() if r.mode.value != "CLOSED"
    }
    assert folded_modes == live_modes


def test_restart_recovers_state(tmp_path):
    config = parse_config(service_config_text(tmp_path / "data"), env={})
    state = ServiceState(config)
    app = create_app(state)
    with TestClient(app) as client:
        package_id = upload_tank_package(client)
        run_id = start_run(client, package_id)
        client.post(
            f"/runs/{run_id}/complete",
            json={"user": "ana", "activity_id": "a-steady"},
            headers=ANA,
        )
        session = client.post(
            "/sessions",
            json={"run_id": run_id, "user": "ana", "device_class": "tank"},
            headers=ANA,
        ).json()
        write = da.encode_request(
            da.WriteRequest(
                session["device_id"],
                (da.WriteSpec("actuators/q_in", da.DataType.FLOAT, 0.07),),
            )
        )
        client.post("/da", content=write, headers=ANA)
        state.advance_time(5.0)
        old_run = state.runs[run_id].run
        old_session_id = session["session_id"]
    state.close()  # "crash": nothing flushed beyond what was acknowledged

    revived = ServiceState(parse_config(service_config_text(tmp_path / "data"), env={}))
    try:
        assert revived.runs[run_id].run == old_run
        session = revived.scheduler.sessions[old_session_id]
        # the holder re-enters via RESTORING toward the persisted write
        assert session.mode.value in ("RESTORING", "REAL")
        target = revived.store.load(run_id, "ana", "tank")
        assert target.state["actuators/q_in"] == 0.07
        # next run id continues past the recovered one
        new_run = revived.create_run(package_id, {"ana": ["r-learner"], "sam": ["r-instructor"]})
        assert new_run["run_id"] != run_id
    finally:
        revived.close()
