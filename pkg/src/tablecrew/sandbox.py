"""Per-worker filesystem sandbox with path containment."""
from __future__ import annotations

import os
from pathlib import Path

from .errors import SandboxViolation


class Sandbox:
    """A private directory; every file path a tool touches must resolve inside it."""

    def __init__(self, root: Path):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)

    def resolve(self, relative: str) -> Path:
        """Normalise *relative* against the root; raise on escape attempts."""
        candidate = Path(relative)
        if candidate.is_absolute():
            resolved = Path(os.path.realpath(candidate))
        else:
            resolved = Path(os.path.realpath(self.root / candidate))
        try:
            resolved.relative_to(self.root)
        except ValueError:
            raise SandboxViolation(f"path {relative!r} escapes sandbox {self.root}")
        return resolved
