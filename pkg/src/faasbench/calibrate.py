"""Fit service-model constants to reference loc medians.

Reference files are JSON shaped like the bundled ``data/table1.json``:
``overhead`` / ``intensive`` map profile -> scenario -> cell, ``payload``
nests one more level keyed by payload KB, and ``scalability`` holds
per-profile ``fib1_service_ms`` / ``fib30_service_ms`` targets. A cell is
a number or a ``"median - iqr"`` string.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .cluster import ServiceModel, fib_calls
from .errors import ConfigError

FIB_LO, FIB_HI = 1, 30


class CalibrationError(ConfigError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("insufficient reference rows, missing: " + ", ".join(missing))


@dataclass
class CalibrationResult:
    services: dict = field(default_factory=dict)
    lan_floor_ms: float = 1.0
    # (key, reference_ms, predicted_ms)
    residuals: list = field(default_factory=list)

    def config_values(self) -> dict:
        out = {"network.lan_floor_ms": self.lan_floor_ms}
        for fn, models in self.services.items():
            for profile, m in models.items():
                out[f"service.{fn}.{profile}.base_ms"] = m.base_ms
                if m.kind == "linear_bytes":
                    out[f"service.{fn}.{profile}.per_kb_ms"] = m.per_kb_ms
                if m.kind == "fib_cost":
                    out[f"service.{fn}.{profile}.per_call_ns"] = m.per_call_ns
        return out


def load_reference(path=None) -> dict:
    try:
        if path is None:
            text = resources.files("faasbench").joinpath("data/table1.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read reference {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"reference {path} is not valid JSON: {e}") from e


def cell_median(cell) -> float:
    if isinstance(cell, (int, float)):
        return float(cell)
    if isinstance(cell, (list, tuple)) and cell:
        return float(cell[0])
    if isinstance(cell, str):
        return float(cell.split(" - ")[0])
    raise ConfigError(f"cannot read a median from {cell!r}")


def fit_linear_relative(xs, ys) -> tuple[float, float]:
    """Least squares for ``y = a + b*x`` on relative error (weights 1/y^2)."""
    if len(set(ys)) == 1:
        return float(ys[0]), 0.0
    w = [1.0 / (y * y) for y in ys]
    sw = sum(w)
    sx = sum(wi * x for wi, x in zip(w, xs))
    sy = sum(wi * y for wi, y in zip(w, ys))
    sxx = sum(wi * x * x for wi, x in zip(w, xs))
    sxy = sum(wi * x * y for wi, x, y in zip(w, xs, ys))
    det = sw * sxx - sx * sx
    b = (sw * sxy - sx * sy) / det
    a = (sy - b * sx) / sw
    return a, b


def fit_reference(ref: dict) -> CalibrationResult:
    floor = float(ref.get("lan_floor_ms", 1.0))
    res = CalibrationResult(lan_floor_ms=floor)
    missing = []

    for test, fn in (("overhead", "hello-world"), ("intensive", "img-classifier-hub")):
        for profile, row in ref.get(test, {}).items():
            if "loc" not in row:
                missing.append(f"{test}.{profile}.loc")
                continue
            target = cell_median(row["loc"])
            base = max(0.0, target - floor)
            res.services.setdefault(fn, {})[profile] = ServiceModel("constant", base_ms=base)
            res.residuals.append((f"{test}.{profile}.loc", target, floor + base))

    by_profile: dict[str, list[tuple[int, float]]] = {}
    for kb, rows in ref.get("payload", {}).items():
        for profile, row in rows.items():
            if "loc" not in row:
                missing.append(f"payload.{kb}.{profile}.loc")
                continue
            by_profile.setdefault(profile, []).append((int(kb), cell_median(row["loc"])))
    for profile, pts in sorted(by_profile.items()):
        pts.sort()
        if len(pts) < 2:
            missing.append(f"payload.<second size>.{profile}.loc")
            continue
        a, b = fit_linear_relative([p[0] for p in pts], [p[1] for p in pts])
        b = max(0.0, b)
        base = max(0.0, a - floor)
        res.services.setdefault("payload-echo", {})[profile] = ServiceModel("linear_bytes", base, per_kb_ms=b)
        for kb, y in pts:
            res.residuals.append((f"payload.{kb}.{profile}.loc", y, floor + base + b * kb))

    c_lo, c_hi = fib_calls(FIB_LO), fib_calls(FIB_HI)
    for profile, row in ref.get("scalability", {}).items():
        keys = (f"fib{FIB_LO}_service_ms", f"fib{FIB_HI}_service_ms")
        absent = [k for k in keys if k not in row]
        if absent:
            missing.extend(f"scalability.{profile}.{k}" for k in absent)
            continue
        lo, hi = float(row[keys[0]]), float(row[keys[1]])
        per_call_ns = max(0.0, (hi - lo) / (c_hi - c_lo) * 1e6)
        base = max(0.0, lo - per_call_ns * c_lo / 1e6)
        res.services.setdefault("fib-go", {})[profile] = ServiceModel("fib_cost", base, per_call_ns=per_call_ns)
        res.residuals.append((f"scalability.{profile}.{keys[0]}", lo, base + per_call_ns * c_lo / 1e6))
        res.residuals.append((f"scalability.{profile}.{keys[1]}", hi, base + per_call_ns * c_hi / 1e6))

    if missing:
        raise CalibrationError(missing)
    if not res.services:
        raise CalibrationError(["overhead|intensive|payload|scalability"])
    return res
