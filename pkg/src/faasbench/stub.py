"""Loopback gateway stub for exercising the live driver.

Answers ``POST /function/<name>`` after a scripted delay and echoes the
request body back.
"""
from __future__ import annotations

import argparse
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _Handler(BaseHTTPRequestHandler):
    delay_s = 0.0
    status = 200

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        if self.delay_s:
            time.sleep(self.delay_s)
        if not self.path.startswith("/function/"):
            self.send_error(404)
            return
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass


class StubGateway:
    """Context manager running the stub on a background thread."""

    def __init__(self, delay_ms: float = 0.0, status: int = 200, host: str = "127.0.0.1", port: int = 0):
        handler = type("Handler", (_Handler,), {"delay_s": delay_ms / 1000.0, "status": status})
        self.server = ThreadingHTTPServer((host, port), handler)
        self.server.daemon_threads = True
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubGateway":
        self._thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv=None):
    p = argparse.ArgumentParser(description="loopback FaaS gateway stub")
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.add_argument("--port", type=int, default=8080)
    args = p.parse_args(argv)
    stub = StubGateway(args.delay_ms, port=args.port)
    print(f"stub gateway on {stub.url}")
    try:
        stub.server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
