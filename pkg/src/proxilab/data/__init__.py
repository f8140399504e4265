"""Bundled data files: the interaction dialogue and the SocNav-style fixture."""

from importlib import resources
from pathlib import Path


def _data_path(name: str) -> Path:
    return Path(resources.files(__package__) / name)


def dialogue_path() -> Path:
    return _data_path("dialogue.json")


def socnav_fixture_path() -> Path:
    return _data_path("socnav_fixture.jsonl")
