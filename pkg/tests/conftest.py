"""Shared fixtures: a live HTTP server and an in-process CLI invoker."""

import io
import sys
import threading
import time
from types import SimpleNamespace

import pytest
import uvicorn

from quest.cli import entrypoint
from quest.httpapi import create_app
from quest.service import ScoreboardService


@pytest.fixture
def live_server(tmp_path):
    """Real uvicorn instance on an ephemeral port, fresh state per test."""
    service = ScoreboardService(tmp_path / "server-events.jsonl")
    config = uvicorn.Config(create_app(service), host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("scoreboard server failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield SimpleNamespace(url=f"http://127.0.0.1:{port}", service=service,
                          log_path=tmp_path / "server-events.jsonl")
    server.should_exit = True
    thread.join(timeout=10)


@pytest.fixture
def invoke(monkeypatch, capsys):
    """Run the CLI in-process; returns (exit_code, stdout, stderr)."""

    def _invoke(*argv, stdin=None):
        if stdin is not None:
            monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
        code = entrypoint([str(a) for a in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _invoke


@pytest.fixture(autouse=True)
def _isolated_cli_environment(monkeypatch, tmp_path):
    """Keep CLI config/repo lookups inside the test sandbox."""
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg-config"))
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "xdg-data"))
    for var in ("QUEST_REPO", "QUEST_SERVICE", "QUEST_TOKEN"):
        monkeypatch.delenv(var, raising=False)
