from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from blendkit import fixtures
from blendkit.controller import Blender
from blendkit.mock import materialize_config, start_mock
from blendkit.policy import ScriptedClock

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        mark = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}" + (f" -- {detail}" if detail else ""))


@pytest.fixture
def social_fixture() -> dict:
    return json.loads(fixtures.mock_fixture_path().read_text())


@pytest.fixture
def clock():
    return ScriptedClock(1000.0)


@pytest.fixture
def social_mock(clock):
    with start_mock(fixtures.mock_fixture_path(), clock=clock.now) as server:
        yield server


@pytest.fixture
def config_dir(tmp_path, social_mock):
    return materialize_config(fixtures.config_dir(), tmp_path / "config", social_mock.base_url)


@pytest.fixture
def blender(config_dir, clock):
    return Blender(config_dir, clock=clock)


def write_server(directory, doc: dict, filename: str | None = None):
    apis = directory / "apis"
    apis.mkdir(parents=True, exist_ok=True)
    path = apis / (filename or f"{doc['name']}.json")
    path.write_text(json.dumps(doc, indent=2))
    return path


GOLDEN_DIR = Path(__file__).parent / "golden"


def normalized_chain(result, base_url: str) -> dict:
    """Chain result without timing and with the mock's address replaced by a constant."""
    text = json.dumps(result.to_dict(timing=False), sort_keys=True)
    return json.loads(text.replace(base_url, "http://mock"))


def golden(name: str, actual: dict) -> dict:
    """Stored golden document; written from ``actual`` when BLENDKIT_REGEN_GOLDEN=1."""
    path = GOLDEN_DIR / f"{name}.json"
    if os.environ.get("BLENDKIT_REGEN_GOLDEN") == "1":
        GOLDEN_DIR.mkdir(exist_ok=True)
        path.write_text(json.dumps(actual, indent=2, sort_keys=True) + "\n")
    return json.loads(path.read_text())
