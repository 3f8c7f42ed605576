"""Bundled descriptions, chains and mock fixtures standing in for the social platforms."""

from __future__ import annotations

from pathlib import Path

ROOT = Path(__file__).resolve().parent


def config_dir() -> Path:
    return ROOT / "config"


def chain_path(name: str) -> Path:
    return ROOT / "chains" / f"{name}.json"


def mock_fixture_path(name: str = "social") -> Path:
    return ROOT / "mock" / f"{name}.json"


SERVER_NAMES = ("facebook-like", "photo-service", "twitter-generic", "twitter-search",
                "video-service")
