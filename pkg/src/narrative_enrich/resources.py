"""Access to packaged resource files (prompt templates, schemas, word lists)."""

from __future__ import annotations

import json
from importlib import resources


def _root():
    return resources.files("narrative_enrich") / "resources"


def load_resource_text(name: str) -> str:
    return (_root() / name).read_text(encoding="utf-8")


def load_resource_json(name: str) -> dict | list:
    return json.loads(load_resource_text(name))


def prompt_template(name: str) -> str:
    """Raw text of a prompt template; trailing newline added by editors is
    not part of the prompt."""
    text = load_resource_text(f"prompts/{name}.txt")
    return text[:-1] if text.endswith("\n") else text
