import pytest

from faasbench.errors import ConfigError
from faasbench.scenario import (SCENARIOS, WanParams, build_topology, derive_scenario, emit_netem_commands,
                                emit_netem_teardown)


def test_cloud_scenario():
    s = derive_scenario("cld")
    assert s.cwan == WanParams(25, 5, 0.4)
    assert s.ewan.is_zero
    assert s.divisor == 1


def test_local_scenario_is_unemulated():
    s = derive_scenario("loc")
    assert s.cwan.is_zero and s.ewan.is_zero


def test_eopt_divides_by_five():
    s = derive_scenario("eopt")
    assert s.cwan == s.ewan == WanParams(5, 1, 0.08)
    assert s.divisor == 5


@pytest.mark.parametrize("name,n", [("ewst", 2), ("etyp", 3), ("eopt", 5)])
def test_edge_links_are_cloud_over_n_exactly(name, n):
    cloud = derive_scenario("cld").cwan
    s = derive_scenario(name)
    assert s.divisor == n
    for link in (s.cwan, s.ewan):
        assert link.latency_ms == cloud.latency_ms / n
        assert link.jitter_ms == cloud.jitter_ms / n
        assert link.loss_pct == cloud.loss_pct / n


@pytest.mark.parametrize("name", SCENARIOS)
def test_derive_is_pure(name):
    assert derive_scenario(name) == derive_scenario(name)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        derive_scenario("mars")


@pytest.mark.parametrize("bad", [dict(latency_ms=-1), dict(jitter_ms=float("nan")), dict(loss_pct=101),
                                 dict(latency_ms=float("inf"))])
def test_wan_params_validation(bad):
    with pytest.raises(ConfigError):
        WanParams(**bad)


def test_topologies():
    assert build_topology("vm.large", 1).worker_count == 1
    t = build_topology("rp.metal", 3)
    assert t.worker_count == 3
    assert (t.profile.vcpus, t.profile.ram_gb) == (4, 8)
    assert (build_topology("vm.small", 1).profile.vcpus, build_topology("vm.small", 1).profile.ram_gb) == (1, 2)
    assert (build_topology("vm.medium", 1).profile.vcpus, build_topology("vm.medium", 1).profile.ram_gb) == (2, 4)


@pytest.mark.parametrize("profile,n", [("vm.small", 4), ("vm.small", 0), ("vm.tiny", 1)])
def test_topology_errors(profile, n):
    with pytest.raises(ConfigError):
        build_topology(profile, n)


def test_netem_cloud():
    assert emit_netem_commands(derive_scenario("cld"), "nebula1") == [
        "tc qdisc add dev nebula1 root netem delay 25ms 5ms loss 0.4%"]


def test_netem_local_is_empty():
    assert emit_netem_commands(derive_scenario("loc"), "nebula1") == []
    assert emit_netem_teardown(derive_scenario("loc"), "nebula1") == []


def test_netem_ewst():
    assert emit_netem_commands(derive_scenario("ewst"), "nebula1") == [
        "tc qdisc add dev nebula1 root netem delay 12.5ms 2.5ms loss 0.2%"]


def test_netem_trims_repeating_decimals():
    (line,) = emit_netem_commands(derive_scenario("etyp"), "eth0")
    assert line == "tc qdisc add dev eth0 root netem delay 8.333333ms 1.666667ms loss 0.133333%"


def test_netem_is_stable():
    spec = derive_scenario("eopt")
    assert emit_netem_commands(spec, "x") == emit_netem_commands(spec, "x")
    assert emit_netem_teardown(spec, "x") == ["tc qdisc del dev x root"]
