"""Local stand-in for a chat-completion endpoint, for tests and offline demos."""

from __future__ import annotations

import json
import threading
from collections.abc import Callable
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockLlmServer:
    """Serve canned completions on ``127.0.0.1``.

    ``responder`` maps the prompt to the completion text. ``status_script``
    is a list of HTTP status codes returned (in order) before the first
    successful answer; it lets tests simulate outages and auth failures.
    """

    def __init__(self, responder: Callable[[str], str] | str = "", status_script: list[int] | None = None):
        if isinstance(responder, str):
            text = responder
            responder = lambda _prompt: text
        self.responder = responder
        self.status_script = list(status_script or [])
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))) or b"{}")
                with mock._lock:
                    mock.requests.append({"body": body, "auth": self.headers.get("Authorization")})
                    status = mock.status_script.pop(0) if mock.status_script else 200
                if status != 200:
                    self.send_response(status)
                    self.end_headers()
                    return
                prompt = body["messages"][-1]["content"]
                out = json.dumps({"choices": [{"message": {"role": "assistant",
                                                           "content": mock.responder(prompt)}}]})
                data = out.encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self) -> MockLlmServer:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> MockLlmServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
