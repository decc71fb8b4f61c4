"""Discrete-event model of the FaaS cluster.

The tester talks to the gateway on the master; the gateway hands each
invocation round-robin to a function replica on a worker, where it waits
FIFO for a free execution slot.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import ConfigError, InputError
from .netmodel import NetStreams, RngStream, link_time_split
from .scenario import ScenarioSpec, Topology
from .workload import RequestRecord, TestPlan, chain_elapsed_client, first_issue, next_issue

SERVICE_KINDS = ("constant", "linear_bytes", "fib_cost")
FUNCTION_NAMES = ("hello-world", "img-classifier-hub", "payload-echo", "fib-go")
FIB_MAX = 40


@dataclass(frozen=True)
class ServiceModel:
    kind: str
    base_ms: float = 0.0
    per_kb_ms: float = 0.0
    per_call_ns: float = 0.0

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise ConfigError(f"unknown service model kind {self.kind!r}")
        for name in ("base_ms", "per_kb_ms", "per_call_ns"):
            v = getattr(self, name)
            if not (v >= 0 and v != float("inf")):
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")
        if self.kind != "linear_bytes" and self.per_kb_ms:
            raise ConfigError("per_kb_ms only applies to linear_bytes models")
        if self.kind != "fib_cost" and self.per_call_ns:
            raise ConfigError("per_call_ns only applies to fib_cost models")


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    service: Mapping[str, ServiceModel]
    echoes_payload: bool = False
    resp_bytes_fixed: int = 64
    cpu_bound: bool = False

    def resp_bytes(self, req_bytes: int) -> int:
        return req_bytes if self.echoes_payload else self.resp_bytes_fixed


_FUNCTION_TRAITS = {
    "hello-world": dict(),
    "img-classifier-hub": dict(cpu_bound=True),
    "payload-echo": dict(echoes_payload=True),
    "fib-go": dict(cpu_bound=True),
}


def function_catalog(services: Mapping[str, Mapping[str, ServiceModel]],
                     resp_bytes: int = 64) -> dict[str, FunctionSpec]:
    return {name: FunctionSpec(name, dict(services.get(name, {})), resp_bytes_fixed=resp_bytes, **traits)
            for name, traits in _FUNCTION_TRAITS.items()}


def fib_calls(n: int) -> int:
    """Nodes in the naive recursive call tree of fib(n): 2*F(n+1) - 1."""
    if not 0 <= n <= FIB_MAX:
        raise InputError(f"fib n must be in [0, {FIB_MAX}], got {n}")
    a, b = 0, 1
    for _ in range(n + 1):
        a, b = b, a + b
    return 2 * a - 1


def base_service_ms(model: ServiceModel, req_bytes: int = 0, fib_n: Optional[int] = None) -> float:
    if model.kind == "constant":
        return model.base_ms
    if model.kind == "linear_bytes":
        return model.base_ms + model.per_kb_ms * (req_bytes / 1024)
    return model.base_ms + model.per_call_ns * fib_calls(fib_n or 0) / 1e6


def service_time(func: FunctionSpec, profile: str, req_bytes: int, fib_n: Optional[int],
                 rng: Optional[RngStream], eps: float = 0.08) -> float:
    try:
        model = func.service[profile]
    except KeyError:
        raise ConfigError(f"no service model for {func.name} on {profile}") from None
    ms = base_service_ms(model, req_bytes, fib_n)
    if eps and rng is not None:
        ms *= rng.uniform(1.0 - eps, 1.0 + eps)
    return ms


@dataclass
class WorkerState:
    slots: int
    queue: deque = field(default_factory=deque)
    replicas: dict = field(default_factory=dict)
    in_flight: int = 0
    pending: int = 0  # replicas scheduled but not yet up

    def capacity(self, function: str) -> int:
        return self.slots * self.replicas.get(function, 0)


@dataclass(frozen=True)
class AutoscalerConfig:
    rps_threshold_per_replica: float = 50.0
    scale_step: int = 1
    reaction_ms: float = 5000.0
    max_replicas_per_worker: int = 1
    check_interval_ms: float = 1000.0

    def __post_init__(self):
        if not self.rps_threshold_per_replica > 0:
            raise ConfigError("autoscale threshold must be > 0")
        if self.scale_step < 1 or self.max_replicas_per_worker < 1:
            raise ConfigError("scale_step and max_replicas_per_worker must be >= 1")
        if self.reaction_ms < 0 or not self.check_interval_ms > 0:
            raise ConfigError("reaction_ms must be >= 0 and check_interval_ms > 0")


def autoscale_step(workers: list[WorkerState], observed_rps: float, cfg: AutoscalerConfig,
                   now_ms: float, function: str) -> list[tuple[float, int]]:
    """Replica additions as ``(ready_at_ms, worker_index)`` pairs.

    Pending additions count as replicas so one burst is not scaled twice.
    """
    loads = [w.replicas.get(function, 0) + w.pending for w in workers]
    total = sum(loads)
    limit = cfg.max_replicas_per_worker * len(workers)
    if total < 1:
        want = 1
        ready = now_ms
    elif observed_rps > cfg.rps_threshold_per_replica * total and total < limit:
        want = min(cfg.scale_step, limit - total)
        ready = now_ms + cfg.reaction_ms
    else:
        return []
    out = []
    for _ in range(want):
        i = min((i for i in range(len(workers)) if loads[i] < cfg.max_replicas_per_worker),
                key=lambda i: loads[i])
        loads[i] += 1
        out.append((ready, i))
    return out


def worker_slots(vcpus: int, cpu_bound: bool, slots_factor: float = 1.0) -> int:
    return max(1, int(vcpus * slots_factor * (1 if cpu_bound else 2)))


# event kinds
_ISSUE, _SUB_ISSUE, _GW_ARRIVAL, _WORKER_ARRIVAL, _SERVICE_END, _SCALE_CHECK, _REPLICA_ADD = range(7)


class _Req:
    __slots__ = ("thread", "seq", "issue", "sub_start", "sub", "subs", "hop", "back", "fwd_int", "done")

    def __init__(self, thread, seq, issue):
        self.thread = thread
        self.seq = seq
        self.issue = issue
        self.sub_start = issue
        self.sub = 0
        self.subs = None
        self.hop = 1
        self.back = 0.0
        self.fwd_int = 0.0
        self.done = False


def run_sim(plan: TestPlan, scenario: ScenarioSpec, topology: Topology, seed: int = 42,
            settings=None, trace: Optional[list] = None) -> list[RequestRecord]:
    """Simulate one execution of ``plan``; records come back in completion order.

    ``trace``, if given, collects ``(time_ms, event, worker, thread, seq,
    in_flight, capacity)`` tuples for every service start and end.
    """
    if settings is None:
        from .config import default_settings
        settings = default_settings()
    if topology.worker_count < 1:
        raise ConfigError("a cluster needs at least one worker")
    funcs = function_catalog(settings.services, settings.resp_bytes)
    if plan.function not in funcs:
        raise ConfigError(f"unknown function {plan.function!r}")
    func = funcs[plan.function]
    profile = topology.profile.name
    if profile not in func.service:
        raise ConfigError(f"no service model for {func.name} on {profile}")

    fn = func.name
    label = plan.label
    threads = plan.threads
    pacing = plan.pacing_ms
    duration = plan.duration_ms
    chain_len = plan.chain_len
    client_chain = plan.chain_mode == "client" and chain_len > 1
    server_chain = plan.chain_mode == "server" and chain_len > 1
    timeout = settings.timeout_ms
    half_floor = settings.lan_floor_ms / 2
    hop_overhead = settings.server_hop_overhead_ms

    req_bytes = plan.payload_kb * 1024
    resp_bytes = func.resp_bytes(req_bytes)
    svc0 = base_service_ms(func.service[profile], req_bytes, plan.fib_n)
    eps = settings.noise_eps
    lo_noise, span_noise = 1.0 - eps, 2.0 * eps

    ext, ewan = scenario.cwan, scenario.ewan
    ext_on, int_on = not ext.is_zero, not ewan.is_zero
    ext_params = settings.transfer
    int_params = ext_params.internal()
    streams = NetStreams.from_seed(seed)
    ext_rng, int_rng, loss_rng = streams.ext_delay, streams.int_delay, streams.loss
    svc_rand = RngStream(seed, "service").random

    cap = settings.gateway_rps_cap.get(profile)
    gw_interval = 1000.0 / cap if cap else 0.0
    gw_next = 0.0

    slots = worker_slots(topology.profile.vcpus, func.cpu_bound, settings.slots_factor.get(profile, 1.0))
    workers = [WorkerState(slots, replicas={fn: 0}) for _ in range(topology.worker_count)]
    workers[0].replicas[fn] = 1
    ring = [0]
    rr = 0
    scaler = settings.autoscale
    arrivals_window = 0

    heap: list = []
    push = heapq.heappush
    pop = heapq.heappop
    counter = 0
    deadlines: deque = deque()
    records: list = []

    th_seq = [0] * threads
    th_left = [plan.requests_for_thread(i) for i in range(threads)]
    active = 0
    for i in range(threads):
        t0 = first_issue(plan, i)
        if (th_left[i] is None or th_left[i] > 0) and (duration is None or t0 < duration):
            push(heap, (t0, counter, _ISSUE, i, None))
            counter += 1
            active += 1
    if active and scaler is not None:
        push(heap, (scaler.check_interval_ms, counter, _SCALE_CHECK, None, None))
        counter += 1

    def thread_continue(th, issue, completion):
        nonlocal counter, active
        left = th_left[th]
        nxt = next_issue(issue, completion, pacing)
        if (left is None or left > 0) and (duration is None or nxt < duration):
            push(heap, (nxt, counter, _ISSUE, th, None))
            counter += 1
        else:
            active -= 1

    def finish(req, end, elapsed, ok):
        req.done = True
        records.append((end, req.thread, req.seq,
                        RequestRecord(label, scenario.name, profile, req.thread, req.seq, req.issue,
                                      elapsed, ok, chain_len, plan.chain_mode)))
        thread_continue(req.thread, req.issue, end)

    def send(req, t):
        # external leg (plus the gateway -> worker hop) for one request
        nonlocal counter
        deadlines.append((t + timeout, req, req.sub))
        if ext_on:
            fwd, back = link_time_split(ext, req_bytes, resp_bytes, ext_params, ext_rng, loss_rng)
        else:
            fwd = back = 0.0
        if int_on:
            f, b = link_time_split(ewan, req_bytes, resp_bytes, int_params, int_rng, loss_rng)
            req.fwd_int = f
            back += b
        req.hop = 1
        req.back = back + half_floor
        push(heap, (t + fwd + half_floor, counter, _GW_ARRIVAL, req, None))
        counter += 1

    def dispatch():
        nonlocal rr
        w = ring[rr % len(ring)]
        rr += 1
        return w

    def worker_arrival(req, w, t):
        nonlocal counter
        ws = workers[w]
        if ws.in_flight < ws.slots * ws.replicas[fn]:
            start_service(req, w, ws, t)
        else:
            ws.queue.append(req)

    def start_service(req, w, ws, t):
        nonlocal counter
        ws.in_flight += 1
        svc = svc0 * (lo_noise + span_noise * svc_rand()) if eps else svc0
        push(heap, (t + svc, counter, _SERVICE_END, req, w))
        counter += 1
        if trace is not None:
            trace.append((t, "start", w, req.thread, req.seq, ws.in_flight, ws.slots * ws.replicas[fn]))

    def drain(w, ws, t):
        q = ws.queue
        limit = ws.slots * ws.replicas[fn]
        while q and ws.in_flight < limit:
            start_service(q.popleft(), w, ws, t)

    while heap or deadlines:
        if deadlines and (not heap or deadlines[0][0] < heap[0][0]):
            t, req, sub = deadlines.popleft()
            if req.done or req.sub != sub:
                continue
            elapsed = (sum(req.subs) + timeout) if req.subs else timeout
            finish(req, t, elapsed, False)
            continue

        t, _, kind, a, b = pop(heap)

        if kind == _GW_ARRIVAL:
            arrivals_window += 1
            if gw_interval:
                start = gw_next if gw_next > t else t
                gw_next = start + gw_interval
            else:
                start = t
            w = dispatch()
            ta = start + a.fwd_int
            if ta == t:
                worker_arrival(a, w, t)
            else:
                push(heap, (ta, counter, _WORKER_ARRIVAL, a, w))
                counter += 1

        elif kind == _SERVICE_END:
            ws = workers[b]
            ws.in_flight -= 1
            if trace is not None:
                trace.append((t, "end", b, a.thread, a.seq, ws.in_flight, ws.slots * ws.replicas[fn]))
            if ws.queue:
                drain(b, ws, t)
            req = a
            if req.done:
                continue
            if server_chain and req.hop < chain_len:
                req.hop += 1
                arrivals_window += 1
                if int_on:
                    f, bk = link_time_split(ewan, req_bytes, resp_bytes, int_params, int_rng, loss_rng)
                    req.back += bk
                else:
                    f = 0.0
                ta = t + f + hop_overhead
                w = dispatch()
                if ta == t:
                    worker_arrival(req, w, t)
                else:
                    push(heap, (ta, counter, _WORKER_ARRIVAL, req, w))
                    counter += 1
                continue
            end = t + req.back
            sub_elapsed = end - req.sub_start
            if sub_elapsed > timeout:
                continue  # the pending deadline records the failure
            if client_chain:
                if req.subs is None:
                    req.subs = []
                req.subs.append(sub_elapsed)
                if len(req.subs) < chain_len:
                    req.sub += 1
                    req.sub_start = end
                    push(heap, (end, counter, _SUB_ISSUE, req, None))
                    counter += 1
                    continue
                finish(req, end, chain_elapsed_client(req.subs), True)
            else:
                finish(req, end, end - req.issue, True)

        elif kind == _ISSUE:
            th = a
            seq = th_seq[th]
            th_seq[th] = seq + 1
            if th_left[th] is not None:
                th_left[th] -= 1
            send(_Req(th, seq, t), t)

        elif kind == _WORKER_ARRIVAL:
            worker_arrival(a, b, t)

        elif kind == _SUB_ISSUE:
            send(a, t)

        elif kind == _SCALE_CHECK:
            observed = arrivals_window * 1000.0 / scaler.check_interval_ms
            arrivals_window = 0
            for ready, w in autoscale_step(workers, observed, scaler, t, fn):
                workers[w].pending += 1
                push(heap, (ready, counter, _REPLICA_ADD, None, w))
                counter += 1
            if active:
                push(heap, (t + scaler.check_interval_ms, counter, _SCALE_CHECK, None, None))
                counter += 1

        elif kind == _REPLICA_ADD:
            ws = workers[b]
            ws.pending -= 1
            ws.replicas[fn] += 1
            ring.append(b)
            drain(b, ws, t)

    records.sort(key=lambda r: (r[0], r[1], r[2]))
    return [r[3] for r in records]
