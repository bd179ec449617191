"""Versioned prompt templates shipped with the package.

Templates live under ``tablecrew/prompts`` and use ``<<token>>`` placeholders,
which cannot collide with literal braces in skill texts.
"""
from __future__ import annotations

from importlib import resources


def load_prompt(name: str) -> str:
    return (
        resources.files("tablecrew").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    )


def render_prompt(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace(f"<<{key}>>", str(value))
    return out
