"""The web environment: live HTTP search/fetch plus a recorded-fixture twin.

The fixture variant is a pure function of (request, corpus): identical
request sequences yield identical observations across runs and hosts, which
makes web-dependent episodes reproducible at desk scale. Recording persists
every (method, request) -> response pair under a content-addressed key;
transport errors are recorded too and replay as the same failure.
"""
from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

from .clock import Clock, SystemClock
from .errors import FixtureMiss, WebTransportError

SEARCH_API_KEY_ENV = "SEARCH_API_KEY"

MISS_ERROR = "error"
MISS_EMPTY = "empty"


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    snippet: str

    def to_record(self) -> dict:
        return {"title": self.title, "url": self.url, "snippet": self.snippet}


@runtime_checkable
class WebEnvironment(Protocol):
    def search(self, query: str) -> list[SearchResult]: ...

    def fetch(self, url: str) -> str: ...


def normalise_request(method: str, request: str) -> str:
    if method == "search":
        return " ".join(request.split())
    return request.strip()


def fixture_key(method: str, request: str) -> str:
    normalised = normalise_request(method, request)
    return hashlib.sha256(f"{method}\n{normalised}".encode("utf-8")).hexdigest()


class FixtureCorpus:
    """Directory of JSON records {key, method, request, response, meta}."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, method: str, request: str, response, meta: dict | None = None) -> str:
        key = fixture_key(method, request)
        record = {
            "key": key,
            "method": method,
            "request": normalise_request(method, request),
            "response": response,
            "meta": meta or {},
        }
        (self.root / f"{key}.json").write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return key

    def get(self, method: str, request: str) -> dict | None:
        path = self.root / f"{fixture_key(method, request)}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json"))


class FixtureEnvironment:
    """Replay environment resolving requests by exact (normalised) match."""

    def __init__(self, corpus: FixtureCorpus, miss_policy: str = MISS_ERROR):
        if miss_policy not in (MISS_ERROR, MISS_EMPTY):
            raise ValueError(f"unknown miss policy {miss_policy!r}")
        self.corpus = corpus
        self.miss_policy = miss_policy

    def _resolve(self, method: str, request: str):
        record = self.corpus.get(method, request)
        if record is None:
            if self.miss_policy == MISS_ERROR:
                raise FixtureMiss(f"{method} request not in corpus: {request!r}")
            return [] if method == "search" else ""
        response = record["response"]
        if isinstance(response, dict) and "error" in response:
            raise WebTransportError(str(response["error"]))
        return response

    def search(self, query: str) -> list[SearchResult]:
        response = self._resolve("search", query)
        return [SearchResult(**r) for r in response]

    def fetch(self, url: str) -> str:
        return self._resolve("fetch", url)


class LiveWebEnvironment:
    """Live search via a configurable HTTP endpoint, with politeness delay.

    Search wire: POST {"query": ...} -> {"results": [{title, url, snippet}]}.
    Fetch: GET the url, text body. Per-request timeout enforced; a delay is
    inserted between consecutive requests.
    """

    def __init__(
        self,
        search_url: str,
        api_key: str = "",
        timeout_s: float = 30.0,
        politeness_delay_s: float = 0.5,
        clock: Clock | None = None,
    ):
        self.search_url = search_url
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.politeness_delay_s = politeness_delay_s
        self.clock = clock or SystemClock()
        self._last_request_at: float | None = None

    def _be_polite(self) -> None:
        if self._last_request_at is not None:
            elapsed = self.clock.now() - self._last_request_at
            remaining = self.politeness_delay_s - elapsed
            if remaining > 0:
                self.clock.sleep(remaining)
        self._last_request_at = self.clock.now()

    def search(self, query: str) -> list[SearchResult]:
        if not self.search_url:
            raise WebTransportError("no search endpoint configured")
        self._be_polite()
        payload = json.dumps({"query": query}).encode("utf-8")
        req = urllib.request.Request(
            self.search_url, data=payload, headers={"Content-Type": "application/json"}
        )
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise WebTransportError(f"search failed: {exc}") from exc
        return [
            SearchResult(
                title=r.get("title", ""), url=r.get("url", ""), snippet=r.get("snippet", "")
            )
            for r in data.get("results", [])
        ]

    def fetch(self, url: str) -> str:
        self._be_polite()
        req = urllib.request.Request(url, headers={"User-Agent": "tablecrew/0.1"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.read().decode("utf-8", errors="replace")
        except (urllib.error.URLError, TimeoutError) as exc:
            raise WebTransportError(f"fetch failed: {exc}") from exc


class RecordingEnvironment:
    """Pass-through wrapper persisting every exchange into a corpus."""

    def __init__(self, live: WebEnvironment, corpus: FixtureCorpus):
        self.live = live
        self.corpus = corpus

    def search(self, query: str) -> list[SearchResult]:
        try:
            results = self.live.search(query)
        except WebTransportError as exc:
            self.corpus.put("search", query, {"error": str(exc)}, meta={"transport_error": True})
            raise
        self.corpus.put("search", query, [r.to_record() for r in results])
        return results

    def fetch(self, url: str) -> str:
        try:
            text = self.live.fetch(url)
        except WebTransportError as exc:
            self.corpus.put("fetch", url, {"error": str(exc)}, meta={"transport_error": True})
            raise
        self.corpus.put("fetch", url, text)
        return text


def record_fixture(
    live_env: WebEnvironment,
    request_log: Iterable[tuple[str, str]],
    output_corpus: Path | FixtureCorpus,
) -> FixtureCorpus:
    """Run a (method, request) log against the live environment, persisting everything.

    Transport errors are recorded as such (and re-raised downstream on replay);
    recording continues past them.
    """
    corpus = output_corpus if isinstance(output_corpus, FixtureCorpus) else FixtureCorpus(output_corpus)
    recorder = RecordingEnvironment(live_env, corpus)
    for method, request in request_log:
        try:
            if method == "search":
                recorder.search(request)
            elif method == "fetch":
                recorder.fetch(request)
            else:
                raise ValueError(f"unknown method {method!r}")
        except WebTransportError:
            continue
    return corpus
