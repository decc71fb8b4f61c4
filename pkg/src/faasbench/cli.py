"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .calibrate import CalibrationError, fit_reference, load_reference
from .cluster import run_sim
from .config import SimSettings, apply_config, default_settings, format_config, load_config
from .errors import ConfigError
from .metrics import ExportError, export_records, render_table, summarize, summary_json
from .scenario import (CLOUD_LINK, PROFILES, SCENARIOS, WanParams, build_topology, derive_scenario,
                       emit_netem_commands, emit_netem_teardown)
from .workload import CHAIN_MODES, TEST_KINDS, build_plan, execute_plan_live

log = logging.getLogger("faasbench")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
DEFAULT_SEED = 42
DEFAULT_WORKERS = {"overhead": 1, "intensive": 1, "payload": 1, "scalability": 3, "workflow": 3}
PLAN_FLAGS = {"payload_kb": "payload_kb", "fib_n": "fib_n", "threads": "threads", "chain_len": "chain_len",
              "chain_mode": "chain_mode"}


@dataclass
class RunConfig:
    scenario: str = "loc"
    profile: str = "vm.large"
    workers: Optional[int] = None
    test: str = "overhead"
    overrides: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    repetitions: int = 10
    out_dir: Path = Path("results")
    force: bool = False
    gateway: Optional[str] = None
    timeout_ms: float = 30_000.0
    base_link: WanParams = CLOUD_LINK
    settings: Optional[SimSettings] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(p, lists=False):
    many = " (comma-separated list)" if lists else ""
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--scenario", help=f"network scenario: {'|'.join(SCENARIOS)}{many}")
    p.add_argument("--profile", help=f"node profile: {'|'.join(PROFILES)}{many}")
    p.add_argument("--workers", type=int, help="worker nodes (1-3)")
    p.add_argument("--test", help=f"test: {'|'.join(TEST_KINDS)}{many}")
    p.add_argument("--payload-kb", help=f"request payload size in KB{many}")
    p.add_argument("--fib-n", help=f"Fibonacci number for fib-go{many}")
    p.add_argument("--threads", help=f"load generator threads{many}")
    p.add_argument("--chain-len", help=f"workflow chain length{many}")
    p.add_argument("--chain-mode", help=f"workflow chaining: {'|'.join(CHAIN_MODES[1:])}{many}")
    p.add_argument("--timeout-ms", type=float, help="per-request timeout (default 30000)")
    p.add_argument("--seed", type=int, help="base seed (default $FAASBENCH_SEED or 42)")
    p.add_argument("--repetitions", type=int, help="repetitions per cell (default 10)")
    p.add_argument("--out-dir", help="output directory (default ./results)")
    p.add_argument("--force", action="store_true", help="allow parameters outside the standard test ranges")
    p.add_argument("--jobs", type=int, default=1, help="parallel simulations")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="faasbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one benchmark cell (simulated, or live with --gateway)")
    _add_common(p)
    p.add_argument("--gateway", help="gateway base URL; switches to the live driver")

    p = sub.add_parser("live", help="run against a real gateway (run --gateway)")
    _add_common(p)
    p.add_argument("--gateway", required=True, help="gateway base URL")

    p = sub.add_parser("sweep", help="run a scenario x profile x test grid and render the table")
    _add_common(p, lists=True)

    p = sub.add_parser("calibrate", help="fit service models to reference medians")
    p.add_argument("--reference", help="reference JSON (default: bundled reference medians)")
    p.add_argument("--out", help="fitted config file (default <out-dir>/calibrated.conf)")
    p.add_argument("--out-dir", default="results")

    p = sub.add_parser("netem", help="print the tc/netem script for a scenario")
    p.add_argument("--scenario", required=True, help="|".join(SCENARIOS))
    p.add_argument("--iface", default="nebula1", help="overlay interface (default nebula1)")
    return parser


def _seed(args, file_cfg) -> int:
    if args.seed is not None:
        return args.seed
    if "run.seed" in file_cfg:
        return int(file_cfg["run.seed"])
    env = os.environ.get("FAASBENCH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"FAASBENCH_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _base_link(file_cfg) -> WanParams:
    return WanParams(float(file_cfg.get("scenario.latency_ms", CLOUD_LINK.latency_ms)),
                     float(file_cfg.get("scenario.jitter_ms", CLOUD_LINK.jitter_ms)),
                     float(file_cfg.get("scenario.loss_pct", CLOUD_LINK.loss_pct)))


def _file_overrides(file_cfg, test) -> dict:
    prefix = f"test.{test}."
    return {k[len(prefix):]: v for k, v in file_cfg.items() if k.startswith(prefix)}


def _flag_overrides(args) -> dict:
    out = {}
    for attr, key in PLAN_FLAGS.items():
        v = getattr(args, attr)
        if v is not None:
            out[key] = v
    return out


def config_from_args(args) -> RunConfig:
    file_cfg = load_config(args.config) if args.config else {}
    settings = apply_config(default_settings(), file_cfg)
    test = args.test or file_cfg.get("run.test", "overhead")
    overrides = _file_overrides(file_cfg, test)
    overrides.update(_flag_overrides(args))
    reps = args.repetitions if args.repetitions is not None else int(file_cfg.get("run.repetitions", 10))
    return RunConfig(
        scenario=args.scenario or file_cfg.get("scenario.name", "loc"),
        profile=args.profile or file_cfg.get("topology.profile", "vm.large"),
        workers=args.workers if args.workers is not None else file_cfg.get("topology.workers"),
        test=test,
        overrides=overrides,
        seed=_seed(args, file_cfg),
        repetitions=reps,
        out_dir=Path(args.out_dir or file_cfg.get("run.out_dir", "results")),
        force=args.force,
        gateway=getattr(args, "gateway", None),
        timeout_ms=args.timeout_ms if args.timeout_ms is not None else float(
            file_cfg.get("sim.timeout_ms", 30_000.0)),
        base_link=_base_link(file_cfg),
        settings=settings,
    )


def simulate_cell(cfg: RunConfig):
    """Run every repetition of one cell; returns (plan, pooled records)."""
    plan = build_plan(cfg.test, cfg.overrides, force=cfg.force)
    scenario = derive_scenario(cfg.scenario, cfg.base_link)
    topology = build_topology(cfg.profile, int(cfg.workers or DEFAULT_WORKERS[cfg.test]))
    settings = replace(cfg.settings or default_settings(), timeout_ms=cfg.timeout_ms)
    records = []
    for i in range(cfg.repetitions):
        tag = f"{plan.label}.r{i:02d}"
        if cfg.gateway:
            recs = execute_plan_live(cfg.gateway, plan, cfg.timeout_ms, cfg.scenario, cfg.profile)
        else:
            recs = run_sim(plan, scenario, topology, cfg.seed + i, settings)
        records.extend(replace(r, test_id=tag) for r in recs)
    return plan, records


def write_outputs(cfg: RunConfig, plan, records):
    stats = summarize(records, plan.duration_ms, cfg.repetitions)
    stem = f"{plan.label}_{cfg.scenario}_{cfg.profile}"
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        export_records(records, cfg.out_dir / f"{stem}.csv")
        (cfg.out_dir / f"{stem}.jsonl").write_text(
            summary_json(plan.label, cfg.scenario, cfg.profile, stats) + "\n")
    except OSError as e:
        raise ExportError(f"cannot write results to {cfg.out_dir}: {e}") from e
    return stats, stem


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    plan, records = simulate_cell(cfg)
    stats, stem = write_outputs(cfg, plan, records)
    med = "n/a" if stats.median_ms is None else f"{stats.median_ms:.1f}"
    iq = "n/a" if stats.iqr_ms is None else f"{stats.iqr_ms:.1f}"
    print(f"{stem}: median {med} ms, iqr {iq} ms, {stats.success_count}/{stats.count} ok, "
          f"steady {stats.steady_rps:.1f} req/s")
    return EXIT_OK


def _split(value, cast=str):
    if value is None:
        return [None]
    return [cast(v.strip()) for v in str(value).split(",") if v.strip()]


def _sweep_cell(cfg: RunConfig):
    try:
        plan, records = simulate_cell(cfg)
        return summarize(records, plan.duration_ms, cfg.repetitions), None
    except ConfigError as e:
        return None, str(e)


def cmd_sweep(args) -> int:
    base = config_from_args(argparse.Namespace(**{**vars(args), "scenario": None, "profile": None, "test": None,
                                                  **{a: None for a in PLAN_FLAGS}}))
    scenarios = _split(args.scenario) if args.scenario is not None else list(SCENARIOS)
    profiles = _split(args.profile) if args.profile is not None else ["rp.metal", "vm.large"]
    tests = _split(args.test) if args.test is not None else ["overhead"]
    variants = [{}]
    for attr, key in PLAN_FLAGS.items():
        vals = _split(getattr(args, attr))
        if vals != [None]:
            variants = [{**v, key: x} for v in variants for x in vals]
    file_cfg = load_config(args.config) if args.config else {}
    cells = []
    for test in tests:
        for var in variants:
            for profile in profiles:
                for scenario in scenarios:
                    ov = {**_file_overrides(file_cfg, test), **var}
                    cells.append(replace(base, test=test, profile=profile, scenario=scenario, overrides=ov))
    if not cells:
        raise ConfigError("empty sweep grid")

    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    table, lines, failed = {}, [], 0
    for cfg, (stats, err) in zip(cells, results):
        try:
            label = build_plan(cfg.test, cfg.overrides, force=cfg.force).label
        except ConfigError:
            label = cfg.test
        row = f"{label} {cfg.profile}"
        table[(row, cfg.scenario)] = stats
        if stats is None:
            failed += 1
            log.error("cell %s/%s failed: %s", row, cfg.scenario, err)
        else:
            lines.append(summary_json(label, cfg.scenario, cfg.profile, stats))
    text = render_table(table)
    print(text, end="")
    try:
        base.out_dir.mkdir(parents=True, exist_ok=True)
        (base.out_dir / "table.txt").write_text(text)
        (base.out_dir / "summary.jsonl").write_text("".join(l + "\n" for l in lines))
    except OSError as e:
        raise ExportError(f"cannot write results to {base.out_dir}: {e}") from e
    return EXIT_CONFIG if failed else EXIT_OK


def cmd_calibrate(args) -> int:
    ref = load_reference(args.reference)
    try:
        fit = fit_reference(ref)
    except CalibrationError as e:
        print("calibration failed; missing reference keys:", file=sys.stderr)
        for key in e.missing:
            print(f"  {key}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(args.out_dir) / "calibrated.conf"
    text = format_config(fit.config_values(), header=f"fitted by faasbench calibrate from "
                                                      f"{args.reference or 'bundled reference'}")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    except OSError as e:
        raise ExportError(f"cannot write {out}: {e}") from e
    print(f"{'reference':<36} {'target':>9} {'model':>9} {'resid':>7}")
    for key, target, pred in fit.residuals:
        rel = (pred - target) / target if target else 0.0
        print(f"{key:<36} {target:9.1f} {pred:9.1f} {rel:+7.1%}")
    print(f"wrote {out}")
    return EXIT_OK


def netem_script(scenario: str, iface: str) -> str:
    spec = derive_scenario(scenario)
    up = emit_netem_commands(spec, iface) or [":"]
    down = emit_netem_teardown(spec, iface) or [":"]
    lines = ["#!/bin/sh", f"# netem plan for scenario {scenario} on {iface}", "set -e",
             'case "${1:-up}" in', "up)", *up, ";;", "down)", *down, ";;", "esac"]
    return "\n".join(lines) + "\n"


def cmd_netem(args) -> int:
    sys.stdout.write(netem_script(args.scenario, args.iface))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "live": cmd_run, "sweep": cmd_sweep, "calibrate": cmd_calibrate, "netem": cmd_netem}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"faasbench: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"faasbench: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
