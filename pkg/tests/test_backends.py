import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tablecrew.backends import (
    HTTPBackend,
    PlaybookEntry,
    ScriptedBackend,
    extract_json_payload,
)
from tablecrew.clock import FakeClock
from tablecrew.errors import BackendError, GenerationTimeout, PlaybookMiss


def test_scripted_backend_matches_first_pattern():
    backend = ScriptedBackend([
        PlaybookEntry(pattern=r"alpha", responses=["A"]),
        PlaybookEntry(pattern=r"beta", responses=["B"]),
    ])
    assert backend.generate("contains beta keyword") == "B"
    assert backend.generate("alpha and beta") == "A"


def test_scripted_backend_advances_and_repeats_last():
    backend = ScriptedBackend([PlaybookEntry(pattern=r".", responses=["one", "two"])])
    assert [backend.generate("x") for _ in range(4)] == ["one", "two", "two", "two"]


def test_scripted_backend_miss_raises():
    backend = ScriptedBackend([PlaybookEntry(pattern=r"nope", responses=["n"])])
    with pytest.raises(PlaybookMiss):
        backend.generate("something else")


def test_scripted_backend_delay_advances_fake_clock():
    clock = FakeClock()
    backend = ScriptedBackend(
        [PlaybookEntry(pattern=r".", responses=["slow"], delays_s=[5.0])], clock=clock
    )
    assert backend.generate("x", timeout_s=120.0) == "slow"
    assert clock.now() == 5.0


def test_scripted_backend_timeout_signal():
    clock = FakeClock()
    backend = ScriptedBackend(
        [PlaybookEntry(pattern=r".", responses=["never"], delays_s=[130.0])], clock=clock
    )
    with pytest.raises(GenerationTimeout):
        backend.generate("x", timeout_s=120.0)


def test_scripted_backend_from_playbook(tmp_path):
    path = tmp_path / "pb.json"
    path.write_text(json.dumps({
        "entries": [{"pattern": "hi", "responses": ["hello"], "delays_s": [0.0]}],
    }), encoding="utf-8")
    backend = ScriptedBackend.from_playbook(path)
    assert backend.generate("say hi") == "hello"


class _GenHandler(BaseHTTPRequestHandler):
    behaviour = "ok"

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        request = json.loads(self.rfile.read(length))
        assert set(request) == {"prompt", "max_tokens", "temperature", "timeout_s"}
        if self.behaviour == "hang":
            time.sleep(1.0)
        if self.behaviour == "error":
            payload = {"error": "model unavailable"}
        else:
            payload = {"text": f"echo:{request['prompt']}"}
        body = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def gen_server():
    server = HTTPServer(("127.0.0.1", 0), _GenHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


def test_http_backend_wire_contract(gen_server):
    _GenHandler.behaviour = "ok"
    backend = HTTPBackend(f"http://127.0.0.1:{gen_server.server_port}/")
    assert backend.generate("ping", max_tokens=16, temperature=0.0, timeout_s=5.0) == "echo:ping"


def test_http_backend_error_payload(gen_server):
    _GenHandler.behaviour = "error"
    backend = HTTPBackend(f"http://127.0.0.1:{gen_server.server_port}/")
    with pytest.raises(BackendError):
        backend.generate("ping", timeout_s=5.0)


def test_http_backend_timeout(gen_server):
    _GenHandler.behaviour = "hang"
    backend = HTTPBackend(f"http://127.0.0.1:{gen_server.server_port}/")
    try:
        with pytest.raises(GenerationTimeout):
            backend.generate("ping", timeout_s=0.2)
    finally:
        _GenHandler.behaviour = "ok"


def test_extract_json_object_from_prose():
    text = 'Sure! Here you go: {"tool": "search", "args": {"query": "x"}} hope that helps'
    assert extract_json_payload(text) == {"tool": "search", "args": {"query": "x"}}


def test_extract_json_array():
    text = 'plan:\n[{"instruction": "a", "partition": "p"}]\n'
    assert extract_json_payload(text) == [{"instruction": "a", "partition": "p"}]


def test_extract_json_handles_nested_braces_in_strings():
    text = '{"respond": "cells like {this} and \\"quoted\\" stay intact"}'
    assert extract_json_payload(text)["respond"].startswith("cells like {this}")


def test_extract_json_none_when_absent():
    assert extract_json_payload("no json here") is None
