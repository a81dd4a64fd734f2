"""Loopback mock servers for the LMM endpoint and the messaging webhook.

Both run a ``ThreadingHTTPServer`` on 127.0.0.1 with an ephemeral port and
record every request. Use them as context managers.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _MockServer:
    path = "/"

    def __init__(self):
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd = None
        self._thread = None

    # subclasses return (status, body_dict_or_bytes)
    def respond(self, index: int, body: bytes, headers: dict):
        raise NotImplementedError

    def start(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            disable_nagle_algorithm = True

            def log_message(self, fmt, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length)
                headers = {k.lower(): v for k, v in self.headers.items()}
                with server._lock:
                    index = len(server.requests)
                    server.requests.append({"path": self.path, "headers": headers, "body": body})
                status, payload = server.respond(index, body, headers)
                raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.02,), daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}{self.path}"

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def json_bodies(self) -> list:
        with self._lock:
            return [json.loads(r["body"]) for r in self.requests]


class MockLmmServer(_MockServer):
    """Scriptable chat-completions endpoint.

    ``script`` is a list of ``(status, content)`` steps consumed one per
    request; the last step repeats once the script runs out. ``responder``,
    if given, overrides the script and maps the parsed request document to
    ``(status, content)``.
    """

    path = "/v1/chat/completions"

    def __init__(self, script=None, responder=None):
        super().__init__()
        self.script = list(script or [(200, "HPJ149")])
        self.responder = responder

    @classmethod
    def fixed(cls, answer: str):
        return cls([(200, answer)])

    @classmethod
    def fail_then_succeed(cls, failures: int, answer: str, status: int = 429):
        return cls([(status, None)] * failures + [(200, answer)])

    @classmethod
    def always_failing(cls, status: int = 429):
        return cls([(status, None)])

    @classmethod
    def malformed(cls, answer: str = "The plate is ABC1234"):
        return cls([(200, answer)])

    def respond(self, index, body, headers):
        if self.responder is not None:
            status, content = self.responder(json.loads(body))
        else:
            status, content = self.script[min(index, len(self.script) - 1)]
        if status >= 300 or content is None:
            return status, {"error": {"message": "scripted failure", "code": status}}
        return status, {
            "id": f"mock-{index}",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content},
                         "finish_reason": "stop"}],
        }


class MockWebhook(_MockServer):
    """Push-message sink recording bodies; ``statuses`` scripts replies, then 200 forever."""

    path = "/v2/bot/message/push"

    def __init__(self, statuses=None, always: int | None = None):
        super().__init__()
        self.statuses = list(statuses or [])
        self.always = always

    def respond(self, index, body, headers):
        if self.always is not None:
            status = self.always
        else:
            status = self.statuses[index] if index < len(self.statuses) else 200
        return status, ({} if status < 300 else {"message": "scripted failure"})

    def texts(self) -> list[str]:
        return [m["text"] for doc in self.json_bodies() for m in doc["messages"]]
