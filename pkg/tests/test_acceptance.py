"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""
import dataclasses
import random
import socket
import sys
import time
from pathlib import Path

import pytest

from faasbench.cli import RunConfig, main, netem_script, simulate_cell
from faasbench.cluster import fib_calls, run_sim
from faasbench.config import default_settings
from faasbench.metrics import iqr, median, steady_throughput, throughput_series
from faasbench.netmodel import NetStreams, TransferModelParams, request_network_time, rounds_for
from faasbench.scenario import SCENARIOS, WanParams, build_topology, derive_scenario
from faasbench.stub import StubGateway
from faasbench.workload import build_plan, execute_plan_live

GOLDEN = Path(__file__).parent / "golden"
EDGE = ("ewst", "etyp", "eopt")


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} AC{criterion}: {detail}")
        assert ok, detail
    return emit


def cell_median(test, scenario, profile, reps=10, **overrides):
    cfg = RunConfig(scenario=scenario, profile=profile, test=test, overrides=overrides, repetitions=reps)
    _, recs = simulate_cell(cfg)
    return median([r.elapsed_ms for r in recs if r.success])


def test_ac01_overhead_shift(report):
    t0 = time.perf_counter()
    shifts = {p: cell_median("overhead", "cld", p) - cell_median("overhead", "loc", p) for p in ("rp.metal", "vm.large")}
    dt = time.perf_counter() - t0
    ok = all(20 <= s <= 32 for s in shifts.values()) and dt < 5
    report(1, ok, "cld-loc " + ", ".join(f"{p} {s:+.1f} ms" for p, s in shifts.items()) + f" in [20, 32]; {dt:.1f} s < 5 s")


def test_ac02_scenario_ordering(report):
    t0 = time.perf_counter()
    rows = [("overhead", {})] + [("payload", {"payload_kb": kb}) for kb in (1, 10, 100, 1000)]
    bad = []
    for test, ov in rows:
        for profile in ("rp.metal", "vm.large"):
            m = {s: cell_median(test, s, profile, **ov) for s in SCENARIOS}
            ordered = m["loc"] < m["eopt"] < m["etyp"] < m["ewst"] <= 1.05 * m["cld"]
            strict = ov.get("payload_kb") not in (100, 1000) or m["cld"] > m["ewst"]
            if not (ordered and strict):
                bad.append(f"{test}{ov.get('payload_kb', '')} {profile} {m}")
    dt = time.perf_counter() - t0
    ok = not bad and dt < 30
    report(2, ok, f"loc < eopt < etyp < ewst <= 1.05 cld over 10 rows, cld > ewst at 100/1000 KB; "
                  f"{dt:.1f} s < 30 s" + (f"; violations: {bad}" if bad else ""))


def test_ac03_payload_mechanism(report):
    params = TransferModelParams()
    cld, ewst = derive_scenario("cld"), derive_scenario("ewst")

    def still(link):
        return WanParams(link.latency_ms, 0, 0)

    sizes = sorted({0, 1, 1460 * 10, 1460 * 10 + 1} | {int(1.2 ** k) for k in range(100)}
                   | {kb * 1024 for kb in (1, 10, 100, 1000, 10_000)})
    bad, strict_checked = [], 0
    for size in sizes:
        rng = NetStreams.from_seed(0)
        t_cld = request_network_time(still(cld.cwan), [], size, size, params, rng)
        t_edge = request_network_time(still(ewst.cwan), [still(ewst.ewan)], size, size, params, rng)
        if t_cld < t_edge:
            bad.append((size, t_cld, t_edge))
        if 2 * rounds_for(size, params) > 2:
            strict_checked += 1
            if not t_cld > t_edge:
                bad.append((size, t_cld, t_edge))
    report(3, not bad, f"cld >= ewst on {len(sizes)} sizes up to 10 MB, strictly on {strict_checked} with >2 rounds"
                       + (f"; violations {bad[:3]}" if bad else ""))


def test_ac04_intensive(report):
    targets = {"rp.metal": 659.0, "vm.small": 181.0, "vm.medium": 189.0, "vm.large": 176.0}
    loc = {p: cell_median("intensive", "loc", p) for p in targets}
    within = {p: abs(loc[p] - t) / t <= 0.15 for p, t in targets.items()}
    ratios = {s: cell_median("intensive", s, "rp.metal") / cell_median("intensive", s, "vm.large") for s in SCENARIOS}
    ok = all(within.values()) and all(r > 3 for r in ratios.values())
    report(4, ok, "loc " + ", ".join(f"{p} {loc[p]:.0f}/{targets[p]:.0f}" for p in targets)
                  + " within 15%; rp/vm.large " + ", ".join(f"{s} {r:.2f}" for s, r in ratios.items()) + " > 3")


def _steady(profile, scenario, threads, settings):
    plan = build_plan("scalability", {"threads": threads})
    recs = run_sim(plan, derive_scenario(scenario), build_topology(profile, 3), 42, settings)
    return steady_throughput(throughput_series(recs, plan.duration_ms), plan.duration_ms), plan.offered_rps


def test_ac05_scalability(report):
    settings = default_settings()
    t0 = time.perf_counter()
    threads = (100, 200, 300, 400, 500)
    rp = {t: _steady("rp.metal", "loc", t, settings)[0] for t in threads}
    vm = {(s, t): _steady("vm.large", s, t, settings) for s in ("loc", "cld") for t in threads}
    dt = time.perf_counter() - t0
    plateau = 350 <= rp[300] <= 450 and all(rp[t] <= rp[300] * 1.02 for t in (400, 500))
    linear = all(abs(got - offered) <= 0.10 * offered for got, offered in vm.values())
    peak_cld = vm[("cld", 500)][0]
    ok = plateau and linear and peak_cld >= 1600 and dt < 120
    report(5, ok, "rp.metal " + "/".join(f"{rp[t]:.0f}" for t in threads) + " req/s (plateau in [350, 450]); "
                  + "vm.large cld " + "/".join(f"{vm[('cld', t)][0]:.0f}" for t in threads)
                  + f" vs offered 400..2000 (+-10%); {dt:.0f} s < 120 s")


def _workflow(mode, length, scenario, profile):
    return cell_median("workflow", scenario, profile, chain_mode=mode, chain_len=length)


def test_ac06_workflow_factor(report):
    ratios = {}
    for profile in ("rp.metal", "vm.large"):
        for mode in ("client", "server"):
            for s in SCENARIOS:
                ratios[(profile, mode, s)] = _workflow(mode, 20, s, profile) / _workflow(mode, 5, s, profile)
    lo, hi = min(ratios.values()), max(ratios.values())
    report(6, 3.4 <= lo and hi <= 4.6, f"chain20/chain5 over {len(ratios)} cells in [{lo:.2f}, {hi:.2f}] "
                                       f"within [3.4, 4.6]")


def test_ac07_workflow_crossover(report):
    parts, ok = [], True
    for profile in ("rp.metal", "vm.large"):
        for s in ("cld",) + EDGE:
            srv, cli = _workflow("server", 5, s, profile), _workflow("client", 5, s, profile)
            good = srv < cli if s == "cld" else srv >= cli
            ok &= good
            parts.append(f"{profile} {s} {srv:.0f}{'<' if srv < cli else '>='}{cli:.0f}")
    report(7, ok, "server vs client chain-5: " + ", ".join(parts))


def test_ac08_determinism(report, tmp_path):
    runs = [
        ["--test", "overhead", "--scenario", "cld", "--profile", "rp.metal"],
        ["--test", "payload", "--payload-kb", "100", "--scenario", "etyp", "--profile", "vm.large", "--seed", "9"],
        ["--test", "workflow", "--chain-mode", "server", "--scenario", "ewst", "--profile", "vm.large"],
        ["--test", "scalability", "--threads", "100", "--scenario", "eopt", "--profile", "vm.small",
         "--repetitions", "1"],
    ]
    compared, same = 0, True
    for i, args in enumerate(runs):
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{i}{rep}"
            assert main(["run", "--repetitions", "2", *args, "--out-dir", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        compared += len(outs[0])
        same &= outs[0] == outs[1] and len(outs[0]) == 2
    report(8, same, f"{compared} CSV/JSON files byte-identical across repeated runs")


def _naive_fib_calls(n):
    calls = 0

    def fib(k):
        nonlocal calls
        calls += 1
        return k if k < 2 else fib(k - 1) + fib(k - 2)

    fib(n)
    return calls


def _brute_q(s, p):
    h = (len(s) - 1) * p
    j = int(h)
    return s[j] if j + 1 >= len(s) else s[j] + (h - j) * (s[j + 1] - s[j])


def test_ac09_statistics_oracle(report):
    rng = random.Random(9)
    mismatches = 0
    for _ in range(10_000):
        xs = [rng.expovariate(0.01) for _ in range(rng.randint(1, 1000))]
        s = sorted(xs)
        n = len(s)
        m = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
        mismatches += median(xs) != m or iqr(xs) != _brute_q(s, 0.75) - _brute_q(s, 0.25)
    calls = _naive_fib_calls(30)
    ok = mismatches == 0 and fib_calls(30) == calls == 2_692_537
    report(9, ok, f"median/iqr exact on 10^4 lists ({mismatches} mismatches); fib_calls(30) = {fib_calls(30)}, "
                  f"recursion counter {calls}")


def test_ac10_netem_golden(report):
    diffs = [s for s in SCENARIOS if netem_script(s, "nebula1") != (GOLDEN / f"netem_{s}.sh").read_text()]
    cld_line = "tc qdisc add dev nebula1 root netem delay 25ms 5ms loss 0.4%"
    ok = not diffs and cld_line in netem_script("cld", "nebula1").splitlines()
    report(10, ok, f"{len(SCENARIOS) - len(diffs)}/{len(SCENARIOS)} scenarios match golden files byte-for-byte")


def test_ac11_live_driver(report):
    plan = build_plan("overhead")
    with StubGateway(delay_ms=50) as stub:
        recs = execute_plan_live(stub.url, plan)
    med = median([r.elapsed_ms for r in recs if r.success]) if any(r.success for r in recs) else float("nan")
    ok_rate = sum(r.success for r in recs) / len(recs)

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    closed = execute_plan_live(f"http://127.0.0.1:{port}", dataclasses.replace(plan, pacing_ms=10.0), 1000)
    closed_rate = sum(r.success for r in closed) / len(closed)

    ok = 50 <= med <= 65 and ok_rate == 1.0 and len(closed) == 100 and closed_rate == 0.0
    report(11, ok, f"50 ms stub median {med:.1f} ms in [50, 65], success {ok_rate:.0%}; "
                   f"closed port {len(closed)} records, success {closed_rate:.0%}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
