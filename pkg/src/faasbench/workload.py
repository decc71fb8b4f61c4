"""Test plans, closed-loop pacing, chaining semantics and the live HTTP driver."""
from __future__ import annotations

import http.client
import logging
import threading
import time
from dataclasses import dataclass, fields, replace
from typing import Iterator, Optional
from urllib.parse import urlsplit

from .errors import ConfigError, InputError

log = logging.getLogger(__name__)

TEST_KINDS = ("overhead", "intensive", "payload", "scalability", "workflow")
CHAIN_MODES = ("none", "client", "server")

# classifier input; small enough to fit in two slow-start rounds
DEFAULT_INTENSIVE_PAYLOAD_KB = 24


@dataclass(frozen=True)
class TestPlan:
    kind: str
    function: str
    threads: int = 1
    pacing_ms: float = 200.0
    total_requests: Optional[int] = 100
    duration_ms: Optional[float] = None
    payload_kb: int = 0
    fib_n: int = 0
    chain_len: int = 1
    chain_mode: str = "none"

    __test__ = False  # not a pytest class

    @property
    def label(self) -> str:
        if self.kind == "payload":
            return f"payload-{self.payload_kb}kb"
        if self.kind == "scalability":
            return f"scalability-t{self.threads}-fib{self.fib_n}"
        if self.kind == "workflow":
            return f"workflow-{self.chain_mode}-{self.chain_len}"
        return self.kind

    @property
    def offered_rps(self) -> float:
        return self.threads * 1000.0 / self.pacing_ms

    def requests_for_thread(self, thread: int) -> Optional[int]:
        if self.total_requests is None:
            return None
        n, extra = divmod(self.total_requests, self.threads)
        return n + (1 if thread < extra else 0)


_DEFAULTS = {
    "overhead": dict(function="hello-world", threads=1, pacing_ms=200.0, total_requests=100),
    "intensive": dict(function="img-classifier-hub", threads=1, pacing_ms=2000.0, total_requests=100,
                      payload_kb=DEFAULT_INTENSIVE_PAYLOAD_KB),
    "payload": dict(function="payload-echo", threads=1, pacing_ms=5000.0, total_requests=100, payload_kb=1),
    "scalability": dict(function="fib-go", threads=100, pacing_ms=250.0, total_requests=None,
                        duration_ms=300_000.0, fib_n=1),
    "workflow": dict(function="payload-echo", threads=1, pacing_ms=100.0, total_requests=100, payload_kb=1,
                     chain_len=5, chain_mode="client"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(TestPlan)}


def _coerce(key, value):
    if value is None:
        return None
    if key in ("threads", "total_requests", "payload_kb", "fib_n", "chain_len"):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if key in ("pacing_ms", "duration_ms"):
        return float(value)
    return str(value)


def validate_plan(plan: TestPlan, force: bool = False) -> TestPlan:
    if plan.kind not in TEST_KINDS:
        raise ConfigError(f"unknown test {plan.kind!r} (expected one of {', '.join(TEST_KINDS)})")
    if plan.threads < 1:
        raise ConfigError("threads must be >= 1")
    if not plan.pacing_ms > 0:
        raise ConfigError("pacing_ms must be > 0")
    if plan.total_requests is None and plan.duration_ms is None:
        raise ConfigError("a plan needs total_requests or duration_ms")
    if plan.total_requests is not None and plan.total_requests < 0:
        raise ConfigError("total_requests must be >= 0")
    if plan.duration_ms is not None and not plan.duration_ms > 0:
        raise ConfigError("duration_ms must be > 0")
    if plan.payload_kb < 0:
        raise ConfigError("payload_kb must be >= 0")
    if not 0 <= plan.fib_n <= 40:
        raise ConfigError("fib_n must be in [0, 40]")
    if plan.chain_len < 1:
        raise ConfigError("chain_len must be >= 1")
    if plan.chain_mode not in CHAIN_MODES:
        raise ConfigError(f"chain_mode must be one of {', '.join(CHAIN_MODES)}")
    if plan.kind == "workflow" and plan.chain_mode == "none":
        raise ConfigError("workflow plans chain on the client or the server")
    if plan.kind != "workflow" and (plan.chain_mode != "none" or plan.chain_len != 1):
        raise ConfigError(f"{plan.kind} plans do not chain")
    if plan.kind == "scalability" and not force and not 100 <= plan.threads <= 500:
        raise ConfigError(f"scalability threads must be in [100, 500], got {plan.threads} (use force to override)")
    return plan


def build_plan(kind: str, overrides: Optional[dict] = None, force: bool = False) -> TestPlan:
    if kind not in _DEFAULTS:
        raise ConfigError(f"unknown test {kind!r} (expected one of {', '.join(TEST_KINDS)})")
    values = dict(_DEFAULTS[kind])
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES or key == "kind":
            raise ConfigError(f"unknown plan field {key!r}")
        values[key] = _coerce(key, value)
    try:
        plan = TestPlan(kind=kind, **values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return validate_plan(plan, force)


def first_issue(plan: TestPlan, thread: int) -> float:
    # threads are spread evenly over one pacing interval
    return thread * plan.pacing_ms / plan.threads


def next_issue(prev_issue: float, completion: float, pacing_ms: float) -> float:
    t = prev_issue + pacing_ms
    return t if t >= completion else completion


def thread_arrivals(plan: TestPlan, thread: int = 0) -> Iterator[float]:
    """Issue times for one logical thread.

    A coroutine: after each yielded issue time, ``send`` the completion
    time of that request to get the next issue time (``next()`` counts as
    an instant response).
    """
    limit = plan.requests_for_thread(thread)
    issued = 0
    t = first_issue(plan, thread)
    while (limit is None or issued < limit) and (plan.duration_ms is None or t < plan.duration_ms):
        completion = yield t
        issued += 1
        t = next_issue(t, t if completion is None else completion, plan.pacing_ms)


def chain_elapsed_client(per_request_times) -> float:
    """Client-side chain: each call is its own round trip, so elapsed is the plain sum."""
    if not per_request_times:
        raise InputError("a chain has at least one request")
    total = 0.0
    for t in per_request_times:
        if t < 0:
            raise InputError(f"negative request time {t!r}")
        total += t
    return total


def chain_elapsed_server(plan: TestPlan, scenario, topology, seed: int = 42, settings=None) -> list[float]:
    """Per-iteration elapsed of a server-side chain (one external request each)."""
    if plan.chain_len < 1:
        raise InputError("chain_len must be >= 1")
    from .cluster import run_sim

    plan = replace(plan, chain_mode="server")
    return [r.elapsed_ms for r in run_sim(plan, scenario, topology, seed, settings)]


@dataclass(frozen=True)
class RequestRecord:
    test_id: str
    scenario: str
    profile: str
    thread: int
    seq: int
    start_ms: float
    elapsed_ms: float
    success: bool
    chain_len: int = 1
    chain_mode: str = "none"

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.elapsed_ms


def payload_body(payload_kb: int) -> bytes:
    """Deterministic JSON body of exactly ``payload_kb * 1024`` bytes."""
    size = payload_kb * 1024
    if size == 0:
        return b""
    head, tail = b'{"data":"', b'"}'
    pad = size - len(head) - len(tail)
    if pad < 0:
        raise ConfigError("payload too small to hold a JSON body")
    alphabet = b"abcdefghijklmnopqrstuvwxyz0123456789"
    filler = (alphabet * (pad // len(alphabet) + 1))[:pad]
    return head + filler + tail


def _parse_gateway(url: str):
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        raise ConfigError(f"malformed gateway URL {url!r}")
    try:
        port = parts.port
    except ValueError as e:
        raise ConfigError(f"malformed gateway URL {url!r}: {e}") from None
    return parts.scheme, parts.hostname, port, parts.path.rstrip("/")


def _post(scheme, host, port, path, body, headers, timeout_s) -> bool:
    cls = http.client.HTTPSConnection if scheme == "https" else http.client.HTTPConnection
    conn = cls(host, port, timeout=timeout_s)
    try:
        conn.request("POST", path, body=body, headers=headers)
        resp = conn.getresponse()
        resp.read()
        return 200 <= resp.status < 300
    except (OSError, http.client.HTTPException) as e:
        log.debug("request to %s failed: %s", path, e)
        return False
    finally:
        conn.close()


def execute_plan_live(gateway_url: str, plan: TestPlan, timeout_ms: float = 30_000.0,
                      scenario: str = "live", profile: str = "live") -> list[RequestRecord]:
    """Run ``plan`` against a real gateway.

    Every request opens its own TCP connection (no keep-alive). Failures
    are recorded as unsuccessful and the run continues.
    """
    scheme, host, port, prefix = _parse_gateway(gateway_url)
    path = f"{prefix}/function/{plan.function}"
    body = payload_body(plan.payload_kb)
    headers = {"Content-Type": "application/json", "Connection": "close"}
    if plan.chain_mode == "server":
        headers["X-Chain-Length"] = str(plan.chain_len)
    calls = plan.chain_len if plan.chain_mode == "client" else 1
    timeout_s = timeout_ms / 1000.0
    per_thread: list[list[RequestRecord]] = [[] for _ in range(plan.threads)]
    t0 = time.perf_counter()

    def now_ms():
        return (time.perf_counter() - t0) * 1000.0

    def worker(thread: int):
        out = per_thread[thread]
        sched = thread_arrivals(plan, thread)
        completion = None
        seq = 0
        while True:
            try:
                issue = next(sched) if completion is None else sched.send(completion)
            except StopIteration:
                break
            wait = issue - now_ms()
            if wait > 0:
                time.sleep(wait / 1000.0)
            start = now_ms()
            times, ok = [], True
            for _ in range(calls):
                s = time.perf_counter()
                ok = _post(scheme, host, port, path, body, headers, timeout_s)
                times.append((time.perf_counter() - s) * 1000.0)
                if not ok:
                    break
            completion = now_ms()
            out.append(RequestRecord(plan.label, scenario, profile, thread, seq, start,
                                     chain_elapsed_client(times), ok, plan.chain_len, plan.chain_mode))
            seq += 1

    pool = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(plan.threads)]
    for th in pool:
        th.start()
    for th in pool:
        th.join()
    return [r for recs in per_thread for r in recs]
