import dataclasses
import json
import socket

import pytest
from hypothesis import given, strategies as st

from faasbench.cluster import run_sim
from faasbench.errors import ConfigError, InputError
from faasbench.scenario import build_topology, derive_scenario
from faasbench.stub import StubGateway
from faasbench.workload import (RequestRecord, build_plan, chain_elapsed_client, chain_elapsed_server,
                                execute_plan_live, first_issue, payload_body, thread_arrivals)
from faasbench.metrics import median


def test_overhead_defaults():
    p = build_plan("overhead")
    assert (p.threads, p.pacing_ms, p.total_requests, p.function, p.payload_kb) == (1, 200.0, 100, "hello-world", 0)
    assert p.offered_rps == 5.0


def test_payload_override():
    p = build_plan("payload", {"payload_kb": 1000})
    assert (p.pacing_ms, p.payload_kb, p.function, p.label) == (5000.0, 1000, "payload-echo", "payload-1000kb")


def test_intensive_and_scalability_defaults():
    i = build_plan("intensive")
    assert (i.pacing_ms, i.function, i.total_requests) == (2000.0, "img-classifier-hub", 100)
    s = build_plan("scalability", {"threads": 300})
    assert (s.pacing_ms, s.duration_ms, s.function, s.fib_n, s.total_requests) == (250.0, 300_000.0, "fib-go", 1, None)
    assert s.label == "scalability-t300-fib1"


def test_workflow_defaults():
    w = build_plan("workflow", {"chain_len": 20, "chain_mode": "server"})
    assert (w.pacing_ms, w.total_requests, w.function, w.label) == (100.0, 100, "payload-echo", "workflow-server-20")


@pytest.mark.parametrize("kind,ov", [
    ("scalability", {"threads": 50}),
    ("scalability", {"threads": 501}),
    ("overhead", {"pacing_ms": 0}),
    ("overhead", {"chain_mode": "server"}),
    ("workflow", {"chain_mode": "none"}),
    ("overhead", {"bogus": 1}),
    ("nope", {}),
])
def test_build_plan_errors(kind, ov):
    with pytest.raises(ConfigError):
        build_plan(kind, ov)


def test_force_overrides_thread_range():
    assert build_plan("scalability", {"threads": 50}, force=True).threads == 50


def test_thread_arrivals_instant_responses():
    assert list(thread_arrivals(build_plan("overhead", {"total_requests": 3}))) == [0.0, 200.0, 400.0]


def test_thread_arrivals_slow_response_delays_next():
    gen = thread_arrivals(build_plan("overhead", {"total_requests": 3}))
    assert next(gen) == 0.0
    assert gen.send(350.0) == 350.0
    assert gen.send(400.0) == 550.0


def test_stagger():
    p = build_plan("scalability", {"threads": 100, "duration_ms": 1000})
    assert first_issue(p, 0) == 0.0
    assert first_issue(p, 50) == 125.0


@given(st.integers(1, 200), st.sampled_from([50.0, 100.0, 250.0, 1000.0]))
def test_offered_rate_identity(threads, pacing):
    duration = 100 * pacing
    plan = build_plan("scalability", {"threads": threads, "pacing_ms": pacing, "duration_ms": duration}, force=True)
    issued = sum(len(list(thread_arrivals(plan, t))) for t in range(threads))
    rate = issued / (duration / 1000)
    assert rate == pytest.approx(threads * 1000 / pacing, rel=0.01)


def test_requests_split_over_threads():
    p = build_plan("workflow", {"threads": 3, "total_requests": 10})
    assert [p.requests_for_thread(i) for i in range(3)] == [4, 3, 3]


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_chain_client_is_exact_sum(xs):
    total = 0.0
    for x in xs:
        total += x
    assert chain_elapsed_client(xs) == total


def test_chain_client_errors():
    with pytest.raises(InputError):
        chain_elapsed_client([])
    with pytest.raises(InputError):
        chain_elapsed_client([1.0, -1.0])


def test_client_chain_sim_is_sum_of_subrequests(settings):
    s = dataclasses.replace(settings, noise_eps=0.0)
    topo = build_topology("vm.large", 3)
    one = build_plan("workflow", {"total_requests": 1, "chain_len": 1})
    five = build_plan("workflow", {"total_requests": 1, "chain_len": 5})
    (r1,) = run_sim(one, derive_scenario("loc"), topo, 1, s)
    (r5,) = run_sim(five, derive_scenario("loc"), topo, 1, s)
    assert r5.elapsed_ms == pytest.approx(5 * r1.elapsed_ms, rel=1e-12)


def test_chain_elapsed_server_loc(settings):
    s = dataclasses.replace(settings, noise_eps=0.0, lan_floor_ms=0.0, server_hop_overhead_ms=0.0)
    plan = build_plan("workflow", {"total_requests": 2, "chain_len": 3})
    svc = s.services["payload-echo"]["vm.large"]
    expected = 3 * (svc.base_ms + svc.per_kb_ms)
    got = chain_elapsed_server(plan, derive_scenario("loc"), build_topology("vm.large", 3), 1, s)
    assert got == pytest.approx([expected, expected], abs=1e-9)


def test_payload_body_exact_size():
    for kb in (0, 1, 10, 1000):
        body = payload_body(kb)
        if kb:
            assert len(body) == kb * 1024
            json.loads(body)


def _closed_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def test_live_against_instant_stub():
    plan = build_plan("overhead", {"total_requests": 20, "pacing_ms": 10})
    with StubGateway() as stub:
        recs = execute_plan_live(stub.url, plan, timeout_ms=5000)
    assert len(recs) == 20 and all(r.success for r in recs)
    assert [(r.thread, r.seq) for r in recs] == [(0, i) for i in range(20)]


def test_live_against_delayed_stub():
    plan = build_plan("overhead", {"total_requests": 10, "pacing_ms": 60})
    with StubGateway(delay_ms=50) as stub:
        recs = execute_plan_live(stub.url, plan)
    assert all(r.success for r in recs)
    assert 50 <= median([r.elapsed_ms for r in recs]) <= 65


def test_live_client_chain_multithread():
    plan = build_plan("workflow", {"threads": 3, "total_requests": 9, "chain_mode": "client", "chain_len": 2,
                                   "pacing_ms": 20})
    with StubGateway() as stub:
        recs = execute_plan_live(stub.url, plan)
    assert len(recs) == 9 and all(r.success for r in recs)
    assert {r.chain_len for r in recs} == {2}


def test_live_closed_port():
    plan = build_plan("overhead", {"total_requests": 5, "pacing_ms": 10})
    recs = execute_plan_live(f"http://127.0.0.1:{_closed_port()}", plan, timeout_ms=1000)
    assert len(recs) == 5 and not any(r.success for r in recs)


def test_live_error_status_is_failure():
    plan = build_plan("overhead", {"total_requests": 3, "pacing_ms": 10})
    with StubGateway(status=500) as stub:
        recs = execute_plan_live(stub.url, plan)
    assert not any(r.success for r in recs)


@pytest.mark.parametrize("url", ["ftp://x", "nohost", "http://:80", "http://h:notaport"])
def test_live_malformed_url(url):
    with pytest.raises(ConfigError):
        execute_plan_live(url, build_plan("overhead", {"total_requests": 1}))


def test_live_and_sim_share_schema(settings):
    plan = build_plan("overhead", {"total_requests": 2, "pacing_ms": 10})
    with StubGateway() as stub:
        live = execute_plan_live(stub.url, plan)
    sim = run_sim(plan, derive_scenario("loc"), build_topology("vm.large", 1), 1, settings)
    assert all(type(r) is RequestRecord for r in live + sim)
    assert [f.name for f in dataclasses.fields(live[0])] == [f.name for f in dataclasses.fields(sim[0])]
