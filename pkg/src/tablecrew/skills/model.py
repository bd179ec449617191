"""Skill documents: YAML frontmatter plus a Markdown or script body.

A knowledge skill's body is a document; a function skill's body is an
executable script with a declared command-line entry, and its frontmatter
additionally carries ``entry`` (the command) and ``args`` (the named-argument
manifest used for the backwards-compatibility check).
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..errors import SyntaxInvalid

SKILL_KINDS = ("function", "knowledge")
_NAME_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")
REQUIRED_FRONTMATTER = ("name", "kind", "description", "version")


@dataclass(frozen=True)
class Skill:
    name: str
    kind: str
    description: str
    version: int
    body: str
    frontmatter: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"skill name {self.name!r} is not kebab-case")
        if self.kind not in SKILL_KINDS:
            raise ValueError(f"unknown skill kind {self.kind!r}")
        if self.version < 1:
            raise ValueError("version must be >= 1")

    @property
    def entry(self) -> str | None:
        return self.frontmatter.get("entry")

    @property
    def arg_manifest(self) -> tuple[str, ...]:
        args = self.frontmatter.get("args") or []
        return tuple(str(a) for a in args)

    def with_version(self, version: int, body: str | None = None,
                     frontmatter: dict[str, Any] | None = None) -> "Skill":
        fm = dict(self.frontmatter if frontmatter is None else frontmatter)
        fm["version"] = version
        return Skill(
            name=self.name,
            kind=self.kind,
            description=fm.get("description", self.description),
            version=version,
            body=self.body if body is None else body,
            frontmatter=fm,
        )


def render_skill_document(skill: Skill) -> str:
    fm: dict[str, Any] = {
        "name": skill.name,
        "kind": skill.kind,
        "description": skill.description,
        "version": skill.version,
    }
    for key, value in skill.frontmatter.items():
        if key not in fm:
            fm[key] = value
    header = yaml.safe_dump(fm, sort_keys=False, allow_unicode=True, default_flow_style=False)
    return f"---\n{header}---\n{skill.body}"


def parse_skill_document(text: str) -> Skill:
    """Parse a frontmatter-plus-body document into a Skill.

    Raises SyntaxInvalid when the frontmatter block is missing, unparseable,
    or lacks a required key.
    """
    if not text.startswith("---\n"):
        raise SyntaxInvalid("skill document must start with a frontmatter block")
    end = text.find("\n---\n", 4)
    if end == -1:
        raise SyntaxInvalid("unterminated frontmatter block")
    header = text[4:end + 1]
    body = text[end + len("\n---\n"):]
    try:
        fm = yaml.safe_load(header)
    except yaml.YAMLError as exc:
        raise SyntaxInvalid(f"bad frontmatter YAML: {exc}") from exc
    if not isinstance(fm, dict):
        raise SyntaxInvalid("frontmatter must be a mapping")
    for key in REQUIRED_FRONTMATTER:
        if key not in fm:
            raise SyntaxInvalid(f"frontmatter missing required key {key!r}")
    try:
        version = int(fm["version"])
    except (TypeError, ValueError) as exc:
        raise SyntaxInvalid("frontmatter version must be an integer") from exc
    try:
        return Skill(
            name=str(fm["name"]),
            kind=str(fm["kind"]),
            description=str(fm["description"]),
            version=version,
            body=body,
            frontmatter=fm,
        )
    except ValueError as exc:
        raise SyntaxInvalid(str(exc)) from exc


def validate_skill(skill: Skill, script_validator=None) -> None:
    """Gate registration: function bodies must parse, knowledge frontmatter must be complete.

    *script_validator* parses a function body in the deployment's script
    language; the default is the Python grammar.
    """
    if skill.kind == "function":
        validator = script_validator or python_script_validator
        validator(skill.body)
        if not skill.entry:
            raise SyntaxInvalid("function skill must declare an entry command")
    else:
        for key in REQUIRED_FRONTMATTER:
            if key not in skill.frontmatter:
                raise SyntaxInvalid(f"frontmatter missing required key {key!r}")


def python_script_validator(body: str) -> None:
    """Full-body syntax validation for the default script language."""
    try:
        ast.parse(body)
    except SyntaxError as exc:
        raise SyntaxInvalid(f"script body does not parse: {exc}") from exc
