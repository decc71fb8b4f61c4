"""Network scenarios, node profiles and cluster topologies.

Edge scenarios spread the cloud WAN budget over the cluster: every
segment gets the cloud latency, jitter and loss divided by ``N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

SCENARIOS = ("loc", "cld", "ewst", "etyp", "eopt")
EDGE_DIVISORS = {"ewst": 2, "etyp": 3, "eopt": 5}


@dataclass(frozen=True)
class WanParams:
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_pct: float = 0.0

    def __post_init__(self):
        for name in ("latency_ms", "jitter_ms", "loss_pct"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")
        if self.loss_pct > 100:
            raise ConfigError(f"loss_pct must be <= 100, got {self.loss_pct!r}")

    @property
    def is_zero(self) -> bool:
        return self.latency_ms == 0 and self.jitter_ms == 0 and self.loss_pct == 0

    def divided(self, n: int) -> "WanParams":
        return WanParams(self.latency_ms / n, self.jitter_ms / n, self.loss_pct / n)


ZERO_LINK = WanParams()
CLOUD_LINK = WanParams(25.0, 5.0, 0.4)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    cwan: WanParams  # tester <-> master
    ewan: WanParams  # master <-> every worker
    divisor: int = 1


@dataclass(frozen=True)
class NodeProfile:
    name: str
    vcpus: int
    ram_gb: int


PROFILES = {
    "rp.metal": NodeProfile("rp.metal", 4, 8),
    "vm.small": NodeProfile("vm.small", 1, 2),
    "vm.medium": NodeProfile("vm.medium", 2, 4),
    "vm.large": NodeProfile("vm.large", 4, 8),
}

MAX_WORKERS = 3


@dataclass(frozen=True)
class Topology:
    """Homogeneous cluster. The master hosts the gateway; functions run on workers."""

    profile: NodeProfile
    worker_count: int


def derive_scenario(name: str, base: WanParams = CLOUD_LINK) -> ScenarioSpec:
    """Build the named scenario.

    ``base`` is the cloud link; passing something else gives a custom
    scenario with the same structure (edge variants still divide it).
    """
    if name == "loc":
        return ScenarioSpec("loc", ZERO_LINK, ZERO_LINK, 1)
    if name == "cld":
        return ScenarioSpec("cld", base, ZERO_LINK, 1)
    if name in EDGE_DIVISORS:
        n = EDGE_DIVISORS[name]
        link = base.divided(n)
        return ScenarioSpec(name, link, link, n)
    raise ConfigError(f"unknown scenario {name!r} (expected one of {', '.join(SCENARIOS)})")


def get_profile(name: str) -> NodeProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown node profile {name!r} (expected one of {', '.join(PROFILES)})") from None


def build_topology(profile: str, worker_count: int) -> Topology:
    prof = get_profile(profile)
    if not 1 <= worker_count <= MAX_WORKERS:
        raise ConfigError(f"worker_count must be in [1, {MAX_WORKERS}], got {worker_count}")
    return Topology(prof, worker_count)


def _fmt(v: float) -> str:
    # microsecond resolution is all netem can express anyway
    return f"{v:.6f}".rstrip("0").rstrip(".")


def _netem_args(link: WanParams) -> str:
    return f"delay {_fmt(link.latency_ms)}ms {_fmt(link.jitter_ms)}ms loss {_fmt(link.loss_pct)}%"


def emit_netem_commands(spec: ScenarioSpec, iface: str) -> list[str]:
    """``tc`` lines that reproduce the scenario on ``iface``.

    Segments with identical parameters share one root qdisc, since a
    device only takes a single root discipline.
    """
    lines = []
    for link in (spec.cwan, spec.ewan):
        if link.is_zero:
            continue
        line = f"tc qdisc add dev {iface} root netem {_netem_args(link)}"
        if line not in lines:
            lines.append(line)
    return lines


def emit_netem_teardown(spec: ScenarioSpec, iface: str) -> list[str]:
    if not emit_netem_commands(spec, iface):
        return []
    return [f"tc qdisc del dev {iface} root"]
