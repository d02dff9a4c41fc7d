"""Command-line entry point: run a protocol config and persist the report.

    poscm run <protocol.json> --out <dir> [--threads N] [--seed-override K]

Exit codes: 0 on success, 1 on a configuration error, 2 when the protocol
ran but an acceptance assertion failed.  ``POSCM_THREADS`` mirrors
``--threads``.  Result tables are CSV; ``run.json`` carries the config hash,
toolkit version, backend, timing, and assertion outcomes; ``plots/`` holds
the plot-ready series with a manifest.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, kernels
from .experiments import RunReport, run_protocol
from .modelspec import ConfigError


def canonical_config_bytes(config: dict) -> bytes:
    doc = {k: v for k, v in config.items() if k != "out_dir"}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_config_bytes(config)).hexdigest()


def write_table_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def read_table_csv(path: Path):
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def emit_plot_data(report: RunReport, out_dir: Path) -> dict:
    """Write one plot-ready CSV per table and a manifest describing them."""
    plots = out_dir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    manifest = {"experiment": report.experiment, "series": []}
    for table in report.tables:
        path = plots / f"{table.name}.csv"
        write_table_csv(path, table.header, table.rows)
        manifest["series"].append({"name": table.name, "file": path.name,
                                   "columns": list(table.header),
                                   "rows": len(table.rows)})
    (plots / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def persist_report(report: RunReport, config: dict, out_dir: Path,
                   wall_s: float) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for table in report.tables:
        path = out_dir / f"{table.name}.csv"
        write_table_csv(path, table.header, table.rows)
        files[table.name] = path.name
    emit_plot_data(report, out_dir)
    record = {
        "experiment": report.experiment,
        "config_hash": config_hash(config),
        "version": __version__,
        "kernel_backend": kernels.backend(),
        "wall_clock_s": wall_s,
        "tables": files,
        "assertions": [{"name": n, "ok": ok, "detail": d}
                       for n, ok, d in report.assertions],
        "meta": report.meta,
    }
    run_path = out_dir / "run.json"
    run_path.write_text(json.dumps(record, indent=2, sort_keys=True, default=repr))
    return run_path


def _resolve_model_paths(config: dict, base: Path) -> None:
    # model references may be paths relative to the protocol file
    def fix(container, key):
        ref = container.get(key)
        if isinstance(ref, str) and not Path(ref).is_absolute():
            container[key] = str(base / ref)

    fix(config, "model")
    params = config.get("params", {})
    fix(params, "model_a")
    fix(params, "model_b")


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"protocol file not found: {p}")
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"protocol file is not valid JSON: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError("protocol file must hold a JSON object")
    _resolve_model_paths(config, p.parent)
    return config


def main(argv=None) -> int:
    env_threads = os.environ.get("POSCM_THREADS")
    parser = argparse.ArgumentParser(
        prog="poscm",
        description="simulation and identification toolkit for causal models "
                    "with endogenous graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a protocol config")
    run_p.add_argument("protocol", help="path to the protocol JSON")
    run_p.add_argument("--out", help="output directory (overrides config out_dir)")
    run_p.add_argument("--threads", type=int,
                       default=int(env_threads) if env_threads else 1)
    run_p.add_argument("--seed-override", type=int, default=None,
                       help="replace the config's seed list with this one seed")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.protocol)
        if args.seed_override is not None:
            config["seeds"] = [args.seed_override]
        out_dir = Path(args.out or config.get("out_dir") or ".")
        t0 = time.perf_counter()
        report = run_protocol(config, threads=max(1, args.threads))
        wall = time.perf_counter() - t0
    except (ConfigError, FileNotFoundError, KeyError, TypeError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    run_path = persist_report(report, config, out_dir, wall)
    for name, ok, detail in report.assertions:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(f"report: {run_path}")
    return 0 if report.ok else 2


if __name__ == "__main__":
    sys.exit(main())
