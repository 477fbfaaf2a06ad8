#!/usr/bin/env python3
"""Launch an elab service for the console's end-to-end tests.

Prints one JSON line {"port": ..., "zip": ...} once the app is constructed,
then serves until killed. The sample package archive is written next to the
data dir so the test can upload it through the API.
"""

import json
import socket
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT))  # for tests.fixtures

import uvicorn

from elab.api import create_app
from elab.config import parse_config
from elab.service import ServiceState
from tests.fixtures import service_config_text, tank_lab_archive


def main() -> None:
    tmp = Path(tempfile.mkdtemp(prefix="elab-e2e-"))
    config = parse_config(
        service_config_text(tmp / "data", quantum=10.0, time_scale=20.0, auto_clock=True),
        env={},
    )
    state = ServiceState(config)
    app = create_app(state)
    zip_path = tmp / "tank-lab.zip"
    zip_path.write_bytes(tank_lab_archive())
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    print(json.dumps({"port": port, "zip": str(zip_path)}), flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
