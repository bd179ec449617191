"""Pluggable text-generation backends.

The runtime never fine-tunes anything; backends are frozen text-in/text-out
services. Two implementations ship here: a deterministic scripted backend
driven by a playbook file (for fixtures and tests), and an HTTP backend
speaking the wire contract ``{prompt, max_tokens, temperature, timeout_s}``
-> ``{text}`` or ``{error}``.
"""
from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

from .clock import Clock, SystemClock
from .errors import BackendError, GenerationTimeout, PlaybookMiss


@runtime_checkable
class GenerationBackend(Protocol):
    def generate(self, prompt: str, *, max_tokens: int = 2048,
                 temperature: float = 0.0, timeout_s: float = 120.0) -> str: ...


@dataclass
class PlaybookEntry:
    """One prompt-pattern -> response-sequence mapping.

    ``delays_s`` simulates generation latency against the injected clock;
    a delay beyond the call budget raises GenerationTimeout. When the
    response sequence is exhausted the last response repeats.
    """

    pattern: str
    responses: list[str]
    delays_s: list[float] = field(default_factory=list)
    _cursor: int = 0

    def next_response(self) -> tuple[str, float]:
        idx = min(self._cursor, len(self.responses) - 1)
        delay = self.delays_s[idx] if idx < len(self.delays_s) else 0.0
        self._cursor += 1
        return self.responses[idx], delay


class ScriptedBackend:
    """Deterministic backend: first playbook entry whose regex matches the prompt wins."""

    def __init__(self, entries: list[PlaybookEntry], clock: Clock | None = None, seed: int = 0):
        self.entries = entries
        self.clock = clock or SystemClock()
        self.seed = seed
        self.calls = 0

    @classmethod
    def from_playbook(cls, path: Path, clock: Clock | None = None, seed: int = 0) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            PlaybookEntry(
                pattern=e["pattern"],
                responses=list(e["responses"]),
                delays_s=list(e.get("delays_s", [])),
            )
            for e in data["entries"]
        ]
        return cls(entries, clock=clock, seed=seed)

    def generate(self, prompt: str, *, max_tokens: int = 2048,
                 temperature: float = 0.0, timeout_s: float = 120.0) -> str:
        self.calls += 1
        for entry in self.entries:
            if re.search(entry.pattern, prompt, re.DOTALL):
                response, delay = entry.next_response()
                if delay:
                    self.clock.sleep(min(delay, timeout_s))
                if delay > timeout_s:
                    raise GenerationTimeout(
                        f"scripted generation took {delay}s > budget {timeout_s}s"
                    )
                return response
        raise PlaybookMiss(f"no playbook pattern matches prompt starting {prompt[:80]!r}")


class HTTPBackend:
    """JSON-over-HTTP backend honouring the generation wire contract."""

    def __init__(self, url: str, api_key: str = "", default_timeout_s: float = 120.0):
        if not url:
            raise ValueError("backend URL required")
        self.url = url
        self.api_key = api_key
        self.default_timeout_s = default_timeout_s

    def generate(self, prompt: str, *, max_tokens: int = 2048,
                 temperature: float = 0.0, timeout_s: float | None = None) -> str:
        budget = timeout_s if timeout_s is not None else self.default_timeout_s
        payload = json.dumps({
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
            "timeout_s": budget,
        }).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=budget) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except TimeoutError as exc:
            raise GenerationTimeout(f"generation exceeded {budget}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(getattr(exc, "reason", None), TimeoutError):
                raise GenerationTimeout(f"generation exceeded {budget}s") from exc
            raise BackendError(str(exc)) from exc
        if "error" in data:
            raise BackendError(str(data["error"]))
        if "text" not in data:
            raise BackendError(f"malformed backend response keys {sorted(data)}")
        return data["text"]


def _balanced_end(text: str, start: int) -> int | None:
    opener = text[start]
    closer = "}" if opener == "{" else "]"
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == opener:
            depth += 1
        elif ch == closer:
            depth -= 1
            if depth == 0:
                return i
    return None


def extract_json_payload(text: str) -> dict | list | None:
    """Pull the first balanced JSON object or array out of free-form text."""
    for start, ch in enumerate(text):
        if ch not in "{[":
            continue
        end = _balanced_end(text, start)
        if end is None:
            continue
        try:
            return json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            continue
    return None
