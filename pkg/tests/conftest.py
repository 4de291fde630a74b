"""Shared fixtures: a tiny handwritten corpus and a stub chat server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from textcredit.corpus import Dataset, FeatureSpec, LoanRecord


def make_record(
    rid: str,
    label: int,
    features: dict | None = None,
    human_text: str = "stable business. repaid on time.",
    amount: float = 100.0,
    rate: float = 0.1,
    refined: dict | None = None,
) -> LoanRecord:
    return LoanRecord(
        id=rid,
        features=features or {},
        human_text=human_text,
        label=label,
        loan_amount=amount,
        interest_rate=rate,
        term_months=3,
        refined_texts=refined or {},
    )


def make_dataset(records, schema=()) -> Dataset:
    return Dataset(records=tuple(records), schema=tuple(schema))


@pytest.fixture
def tiny_schema():
    return (
        FeatureSpec("income", "continuous"),
        FeatureSpec("region", "categorical"),
    )


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        server = self.server
        server.requests.append(
            json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        )
        status, body = server.script[min(len(server.requests) - 1, len(server.script) - 1)]
        payload = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep test output quiet
        pass


class StubChatServer:
    """Minimal chat-completions endpoint with a scripted response sequence.

    ``script`` entries are (status, body); the last entry repeats.  Use
    ``ok(text)`` to build a well-formed completion body.
    """

    def __init__(self, script):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._httpd.script = script
        self._httpd.requests = []
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self):
        return self._httpd.requests

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    @staticmethod
    def ok(text: str) -> tuple[int, str]:
        return 200, json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]})


@pytest.fixture
def stub_server_factory():
    servers = []

    def factory(script):
        server = StubChatServer(script)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()
