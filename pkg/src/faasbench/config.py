"""Simulation settings and the key-value config file.

The file format is one ``key = value`` per line; ``#`` starts a comment.
Keys are dotted paths, e.g.::

    scenario.name = ewst
    topology.profile = rp.metal
    service.payload-echo.vm.large.per_kb_ms = 0.12
    capacity.rp.metal.gateway_rps_cap = 400

Values are numbers or bare strings. Unknown keys are rejected.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

from .cluster import FUNCTION_NAMES, AutoscalerConfig, ServiceModel
from .errors import ConfigError
from .netmodel import TransferModelParams
from .scenario import PROFILES

FUNCTION_KINDS = {
    "hello-world": "constant",
    "img-classifier-hub": "constant",
    "payload-echo": "linear_bytes",
    "fib-go": "fib_cost",
}


@dataclass(frozen=True)
class SimSettings:
    services: Mapping[str, Mapping[str, ServiceModel]]
    transfer: TransferModelParams = TransferModelParams()
    autoscale: Optional[AutoscalerConfig] = AutoscalerConfig()
    slots_factor: Mapping[str, float] = field(default_factory=dict)
    # Pi clusters saturate on CPU well before the workers do
    gateway_rps_cap: Mapping[str, float] = field(default_factory=lambda: {"rp.metal": 400.0})
    lan_floor_ms: float = 1.0
    server_hop_overhead_ms: float = 15.0
    timeout_ms: float = 30_000.0
    noise_eps: float = 0.08
    resp_bytes: int = 64


@functools.lru_cache(maxsize=1)
def default_settings() -> SimSettings:
    """Settings with service models fitted to the bundled reference medians."""
    from .calibrate import fit_reference, load_reference

    ref = load_reference()
    fit = fit_reference(ref)
    return SimSettings(services=fit.services, lan_floor_ms=fit.lan_floor_ms)


def _value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    if raw.lower() in ("none", "off"):
        return None
    return raw


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = _value(raw)
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def format_config(values: Mapping[str, object], header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _split_profile_key(rest: str, what: str):
    # "<profile>.<field>" where the profile itself contains a dot
    profile, _, leaf = rest.rpartition(".")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile in {what} key: {profile!r}")
    return profile, leaf


def _num(key, value, minimum=0.0):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{key} must be a number >= {minimum}, got {value!r}")
    return value


def apply_config(settings: SimSettings, cfg: Mapping[str, object]) -> SimSettings:
    """Fold the simulator keys of ``cfg`` into ``settings``.

    Keys under ``scenario.``, ``topology.``, ``test.`` and ``run.`` are
    left for the caller.
    """
    services = {f: dict(m) for f, m in settings.services.items()}
    transfer = {}
    autoscale = {}
    slots = dict(settings.slots_factor)
    caps = dict(settings.gateway_rps_cap)
    top = {}
    for key, value in cfg.items():
        head, _, rest = key.partition(".")
        if head in ("scenario", "topology", "test", "run"):
            continue
        if head == "tcp":
            if rest not in ("mss_bytes", "init_window_segs", "handshake_rounds", "max_retries_per_round",
                            "warm_window_segs"):
                raise ConfigError(f"unknown key {key!r}")
            transfer[rest] = int(_num(key, value))
        elif head == "service":
            fn, _, rest2 = rest.partition(".")
            if fn not in FUNCTION_NAMES:
                raise ConfigError(f"unknown function in key {key!r}")
            profile, leaf = _split_profile_key(rest2, "service")
            if leaf not in ("base_ms", "per_kb_ms", "per_call_ns"):
                raise ConfigError(f"unknown key {key!r}")
            fm = services.setdefault(fn, {})
            current = fm.get(profile, ServiceModel(FUNCTION_KINDS[fn]))
            fm[profile] = replace(current, **{leaf: float(_num(key, value))})
        elif head == "autoscale":
            names = {"threshold": "rps_threshold_per_replica", "reaction_ms": "reaction_ms",
                     "max_replicas_per_worker": "max_replicas_per_worker", "scale_step": "scale_step",
                     "check_interval_ms": "check_interval_ms"}
            if rest == "enabled":
                if value in (0, "false", "no", None):
                    autoscale = None
                continue
            if rest not in names:
                raise ConfigError(f"unknown key {key!r}")
            if autoscale is not None:
                autoscale[names[rest]] = _num(key, value)
        elif head == "capacity":
            profile, leaf = _split_profile_key(rest, "capacity")
            if leaf == "slots_factor":
                slots[profile] = float(_num(key, value))
            elif leaf == "gateway_rps_cap":
                if value is None or value == 0:
                    caps.pop(profile, None)
                else:
                    caps[profile] = float(_num(key, value))
            else:
                raise ConfigError(f"unknown key {key!r}")
        elif key == "chain.server_hop_overhead_ms":
            top["server_hop_overhead_ms"] = float(_num(key, value))
        elif key == "network.lan_floor_ms":
            top["lan_floor_ms"] = float(_num(key, value))
        elif key in ("sim.timeout_ms", "sim.noise_eps", "sim.resp_bytes"):
            leaf = key.split(".")[1]
            v = _num(key, value)
            top[leaf] = int(v) if leaf == "resp_bytes" else float(v)
        else:
            raise ConfigError(f"unknown key {key!r}")
    if top.get("noise_eps", 0) >= 1:
        raise ConfigError("sim.noise_eps must be < 1")
    try:
        new_transfer = replace(settings.transfer, **transfer)
        if autoscale is None:
            new_autoscale = None
        else:
            base = settings.autoscale or AutoscalerConfig()
            ints = ("max_replicas_per_worker", "scale_step")
            new_autoscale = replace(base, **{k: int(v) if k in ints else float(v) for k, v in autoscale.items()})
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return replace(settings, services=services, transfer=new_transfer, autoscale=new_autoscale,
                   slots_factor=slots, gateway_rps_cap=caps, **top)
