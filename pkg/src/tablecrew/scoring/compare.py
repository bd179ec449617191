"""Type-specific cell comparators: exact, numeric-tolerance, URL, judged text."""
from __future__ import annotations

import logging
import re
import urllib.parse
from dataclasses import dataclass

from ..errors import TableCrewError
from ..prompting import load_prompt, render_prompt
from ..tables import NA, Cell

logger = logging.getLogger(__name__)


class ParseFailure(TableCrewError):
    """A numeric cell did not parse; counts as a mismatch."""


@dataclass
class ComparatorConfig:
    numeric_rel_tol: float = 1e-4
    numeric_abs_floor: float = 1e-9
    case_fold: bool = True
    collapse_whitespace: bool = True
    strip_terminal_punctuation: bool = True
    semantic_judge: object | None = None  # GenerationBackend, optional

    def __post_init__(self):
        if self.numeric_rel_tol <= 0 or self.numeric_abs_floor <= 0:
            raise ValueError("tolerances must be positive")


def normalize_text(raw: str, config: ComparatorConfig) -> str:
    out = raw.strip()
    if config.collapse_whitespace:
        out = " ".join(out.split())
    if config.strip_terminal_punctuation:
        out = out.rstrip(".,;:!?")
    if config.case_fold:
        out = out.casefold()
    return out


_UNRESERVED = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~")


def _decode_unreserved(segment: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(segment):
        if segment[i] == "%" and i + 2 < len(segment):
            hexpart = segment[i + 1:i + 3]
            try:
                ch = chr(int(hexpart, 16))
            except ValueError:
                out.append(segment[i])
                i += 1
                continue
            if ch in _UNRESERVED:
                out.append(ch)
                i += 3
                continue
        out.append(segment[i])
        i += 1
    return "".join(out)


def normalize_url(raw: str) -> str:
    """Canonicalise: lowercase scheme/host, drop default port and fragment,
    trim a single trailing slash on non-root paths, decode unreserved
    percent-escapes. The query string is preserved verbatim. Non-URLs pass
    through trimmed."""
    trimmed = raw.strip()
    parts = urllib.parse.urlsplit(trimmed)
    if not parts.scheme or not parts.netloc:
        return trimmed
    scheme = parts.scheme.lower()
    host = parts.hostname.lower() if parts.hostname else ""
    port = parts.port
    default_port = {"http": 80, "https": 443}.get(scheme)
    netloc = host
    if parts.username:
        cred = parts.username + (f":{parts.password}" if parts.password else "")
        netloc = f"{cred}@{host}"
    if port is not None and port != default_port:
        netloc += f":{port}"
    path = _decode_unreserved(parts.path)
    if len(path) > 1 and path.endswith("/"):
        path = path[:-1]
    out = f"{scheme}://{netloc}{path}"
    if parts.query:
        out += f"?{parts.query}"
    return out


_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}\b)")
_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(\S{0,6})$")


def parse_numeric(raw: str) -> float:
    """Parse a web-sourced number: thousands separators and one trailing unit token allowed."""
    cleaned = _THOUSANDS_RE.sub("", raw.strip())
    m = _NUMBER_RE.match(cleaned)
    if not m:
        raise ParseFailure(f"not a number: {raw!r}")
    unit = m.group(2)
    if unit and any(ch.isdigit() for ch in unit):
        raise ParseFailure(f"trailing token {unit!r} is not a unit in {raw!r}")
    return float(m.group(1))


def numbers_match(a: float, b: float, config: ComparatorConfig) -> bool:
    return abs(a - b) <= max(config.numeric_abs_floor,
                             config.numeric_rel_tol * max(abs(a), abs(b)))


def _judge_says_match(judge, a: str, b: str) -> bool:
    prompt = render_prompt(load_prompt("semantic_judge"), a=a, b=b)
    answer = judge.generate(prompt, max_tokens=8, temperature=0.0, timeout_s=60.0)
    return answer.strip().casefold().startswith("yes")


def compare_cell(pred: Cell, gold: Cell, config: ComparatorConfig | None = None) -> bool:
    """Kind-dispatched equality; the "NA" sentinel matches only itself."""
    config = config or ComparatorConfig()
    if pred.kind != gold.kind:
        raise ValueError(f"cell kinds differ: {pred.kind!r} vs {gold.kind!r}")
    if pred.raw == NA or gold.raw == NA:
        return pred.raw == gold.raw

    kind = pred.kind
    if kind in ("categorical", "date"):
        return normalize_text(pred.raw, config) == normalize_text(gold.raw, config)
    if kind == "numeric":
        try:
            a = parse_numeric(pred.raw)
            b = parse_numeric(gold.raw)
        except ParseFailure as exc:
            logger.warning("numeric mismatch by parse failure: %s", exc)
            return False
        return numbers_match(a, b, config)
    if kind == "url":
        return normalize_url(pred.raw) == normalize_url(gold.raw)
    # free text
    if config.semantic_judge is not None:
        return _judge_says_match(config.semantic_judge, pred.raw, gold.raw)
    return normalize_text(pred.raw, config) == normalize_text(gold.raw, config)
