"""Operator-facing HTTP API over a running pipeline.

Endpoints (all JSON unless noted):

    GET  /health                     liveness and pipeline counters
    GET  /config                     the active configuration
    GET  /model                      current VAR matrices and standardization
    GET  /events?since=<id>          event records with id > since
    GET  /events/<id>                one event record (features, decision path)
    POST /threshold                  {"value": 12, "operator": "op1"}
    POST /events/<id>/label          {"class": "spike", "operator": "op1"}
    GET  /export/features.csv        training CSV (operator labels supersede)
    GET  /stream                     server-sent events: snapshot, then live
                                     score / event_open / event_close /
                                     threshold records in order
"""

from __future__ import annotations

import json
import logging
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from gridwatch.pipeline import Pipeline

log = logging.getLogger("gridwatch.server")


def _json_bytes(payload) -> bytes:
    return json.dumps(payload, sort_keys=True).encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "gridwatch"

    @property
    def pipeline(self) -> Pipeline:
        return self.server.pipeline  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug(fmt, *args)

    def _send_json(self, payload, status: int = 200):
        body = _json_bytes(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, text: str, content_type: str):
        body = text.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/health":
                self._send_json(self.pipeline.health())
            elif url.path == "/config":
                self._send_json(self.pipeline.config.to_dict())
            elif url.path == "/model":
                view = self.pipeline.model_view()
                view["threshold"] = self.pipeline.threshold
                self._send_json(view)
            elif url.path == "/events":
                since = int(parse_qs(url.query).get("since", ["0"])[0])
                self._send_json({"events": self.pipeline.store.events_since(since)})
            elif len(parts) == 2 and parts[0] == "events":
                record = self.pipeline.store.get(int(parts[1]))
                if record is None:
                    self._send_json({"error": f"no event {parts[1]}"}, status=404)
                else:
                    self._send_json(record)
            elif url.path == "/export/features.csv":
                self._send_text(self.pipeline.export_features_csv(), "text/csv")
            elif url.path == "/stream":
                self._stream()
            else:
                self._send_json({"error": "not found"}, status=404)
        except (ValueError, KeyError) as exc:
            self._send_json({"error": str(exc)}, status=400)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            body = self._read_body()
            if url.path == "/threshold":
                value = float(body["value"])
                ack = self.pipeline.request_threshold(value, str(body.get("operator", "operator")))
                self._send_json(ack)
            elif len(parts) == 3 and parts[0] == "events" and parts[2] == "label":
                event_id = int(parts[1])
                try:
                    record = self.pipeline.label_event(
                        event_id,
                        str(body["class"]),
                        str(body.get("operator", "operator")),
                        datetime.now(timezone.utc).isoformat(),
                    )
                except KeyError as exc:
                    self._send_json({"error": str(exc)}, status=404)
                    return
                self._send_json({"ok": True, "label": record})
            else:
                self._send_json({"error": "not found"}, status=404)
        except (ValueError, TypeError) as exc:
            self._send_json({"error": str(exc)}, status=400)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _sse(self, record: dict):
        kind = record.get("type", "message")
        data = json.dumps(record, sort_keys=True)
        self.wfile.write(f"event: {kind}\ndata: {data}\n\n".encode("utf-8"))
        self.wfile.flush()

    def _stream(self):
        sub, snapshot = self.pipeline.hub.subscribe()
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        last_drops = 0
        try:
            self._sse(snapshot)
            while True:
                for record in sub.next_batch(timeout=1.0):
                    self._sse(record)
                    if record.get("type") == "end":
                        return
                if sub.dropped_scores != last_drops:
                    last_drops = sub.dropped_scores
                    self._sse({"type": "score_drops", "count": last_drops})
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            sub.close()


class GridwatchServer:
    """ThreadingHTTPServer wrapper bound to one pipeline."""

    def __init__(self, pipeline: Pipeline, listen: str | None = None):
        host, _, port = (listen or pipeline.config.listen).rpartition(":")
        self.httpd = ThreadingHTTPServer((host or "127.0.0.1", int(port)), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.pipeline = pipeline  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="gridwatch-http", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
