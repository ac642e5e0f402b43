"""Read-only HTTP facade over pre-built BM25 and QAC indexes.

Endpoints (JSON bodies):

* ``GET /suggest?prefix=&n=&k=`` -> ``[{text, source, v, s, rerank_score}]``
* ``GET /search?q=&k=`` -> ``[{doc_id, entity_type, score, rank}]``
* ``GET /stats`` -> request counts

Indexes are loaded from a directory holding ``bm25_index.json`` and
``qac_index.json``; :meth:`ServiceState.reload` swaps both at once.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .qac import QacIndex, RerankWeights, suggest
from .retrieval import InvertedIndex, search

logger = logging.getLogger(__name__)

BM25_FILE = "bm25_index.json"
QAC_FILE = "qac_index.json"


def suggestion_rows(index: QacIndex, prefix: str, K: int, N: int, weights: RerankWeights) -> list[dict]:
    return [c.to_dict() for c in suggest(index, prefix, K, N, weights)]


def search_rows(index: InvertedIndex, query: str, k: int) -> list[dict]:
    return [
        {"doc_id": h.doc_id, "entity_type": index.entity_types[index.doc_index[h.doc_id]].value,
         "score": h.score, "rank": h.rank}
        for h in search(index, query, k)
    ]


@dataclass(frozen=True)
class Snapshot:
    bm25: InvertedIndex | None = None
    qac: QacIndex | None = None
    K: int = 10
    N: int = 10
    weights: RerankWeights = field(default_factory=RerankWeights)


class ServiceState:
    """Holds the current :class:`Snapshot`; readers never see a half-swapped state."""

    def __init__(self, snapshot: Snapshot | None = None):
        self._snapshot = snapshot or Snapshot()
        self._lock = threading.Lock()
        self.requests: Counter[str] = Counter()

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def swap(self, snapshot: Snapshot) -> None:
        with self._lock:
            self._snapshot = snapshot

    def reload(self, index_dir: str | Path, K: int | None = None, N: int | None = None,
               weights: RerankWeights | None = None) -> None:
        base = Path(index_dir)
        cur = self._snapshot
        bm25 = InvertedIndex.load(base / BM25_FILE) if (base / BM25_FILE).exists() else None
        qac = QacIndex.load(base / QAC_FILE) if (base / QAC_FILE).exists() else None
        self.swap(Snapshot(bm25, qac, K or cur.K, N or cur.N, weights or cur.weights))

    def count(self, endpoint: str) -> None:
        with self._lock:
            self.requests[endpoint] += 1


class _BadRequest(Exception):
    pass


def _int_param(params: dict, name: str, default: int | None, minimum: int = 1) -> int:
    raw = params.get(name)
    if raw is None:
        if default is None:
            raise _BadRequest(f"missing {name}")
        return default
    try:
        val = int(raw[0])
    except ValueError:
        raise _BadRequest(f"{name} must be an integer") from None
    if val < minimum:
        raise _BadRequest(f"{name} must be >= {minimum}")
    return val


def make_handler(state: ServiceState):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, body) -> None:
            data = json.dumps(body, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            url = urlparse(self.path)
            params = parse_qs(url.query, keep_blank_values=True)
            snap = state.snapshot
            state.count(url.path)
            try:
                if url.path == "/suggest":
                    if "prefix" not in params:
                        raise _BadRequest("missing prefix")
                    n = _int_param(params, "n", snap.N)
                    k = _int_param(params, "k", snap.K)
                    if snap.qac is None:
                        return self._send(503, {"error": "QAC index not loaded"})
                    return self._send(200, suggestion_rows(snap.qac, params["prefix"][0], k, n, snap.weights))
                if url.path == "/search":
                    if "q" not in params:
                        raise _BadRequest("missing q")
                    k = _int_param(params, "k", 10)
                    if snap.bm25 is None:
                        return self._send(503, {"error": "search index not loaded"})
                    return self._send(200, search_rows(snap.bm25, params["q"][0], k))
                if url.path == "/stats":
                    return self._send(200, {"requests": dict(state.requests)})
                return self._send(404, {"error": f"no route {url.path}"})
            except _BadRequest as exc:
                return self._send(400, {"error": str(exc)})

    return Handler


class SearchService:
    """Threaded HTTP server bound to a :class:`ServiceState`."""

    def __init__(self, state: ServiceState, host: str = "127.0.0.1", port: int = 0):
        self.state = state
        self.httpd = ThreadingHTTPServer((host, port), make_handler(state))
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> SearchService:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self) -> SearchService:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
