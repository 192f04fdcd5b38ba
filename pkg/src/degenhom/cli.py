"""Command line runner: config in, CSV/JSON artifacts and a manifest out.

Usage::

    degenhom run --config cfg.toml [--out DIR] [--seed-override N] [--threads N]
    degenhom homogenize --config cfg.toml ...

Exit codes: 0 all checks passed, 1 a check failed, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import EXPERIMENTS, ConfigError, config_hash, load_config

__all__ = ["PLOT_HEADER", "emit_plotdata", "write_csv", "run", "main"]

PLOT_HEADER = ["experiment", "series", "xi", "t", "eps", "seed", "variable", "value"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return int(v)
    return v


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path, header, rows) -> Path:
    """Write a CSV with ``repr`` floats so reruns are byte-identical."""
    path = Path(path)
    path.write_bytes(_csv_bytes(header, rows))
    return path


def emit_plotdata(results, path) -> Path:
    """Long-format CSV, one observation per row, columns :data:`PLOT_HEADER`.

    ``results`` is an iterable of :class:`~degenhom.experiments.ExperimentResult`;
    an empty iterable gives a header-only file.
    """
    rows = []
    for res in results:
        for r in res.plot_rows:
            rows.append([res.experiment, *r])
    return write_csv(path, PLOT_HEADER, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import scipy

    out = {"degenhom": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
           "python": platform.python_version(), "kernel_backend": kernels.BACKEND}
    try:
        import pyamg

        out["pyamg"] = pyamg.__version__
    except ImportError:  # pragma: no cover
        out["pyamg"] = None
    return out


def run(config_path, out=None, seed_override: int | None = None, threads: int = 1,
        expect: str | None = None, stream=None) -> int:
    """Run one config and write its artifacts; returns the exit code."""
    from .experiments import run_experiment

    stream = sys.stderr if stream is None else stream
    try:
        cfg, raw = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=stream)
        return EXIT_IO
    if expect is not None and cfg["experiment"] != expect:
        print(f"config error: config declares {cfg['experiment']!r}, subcommand is {expect!r}", file=stream)
        return EXIT_CONFIG
    if seed_override is not None:
        cfg["base_seed"] = int(seed_override)
    out_dir = Path(out if out is not None else cfg.get("output_dir", "out"))
    try:
        result = run_experiment(cfg, workers=max(1, int(threads)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for name, (header, rows) in sorted(result.tables.items()):
            files.append(write_csv(out_dir / name, header, rows))
        files.append(emit_plotdata([result], out_dir / "plotdata.csv"))
        for name, u in sorted(result.dumps.items()):
            files += u.save(out_dir / name, fmt="binary")
        manifest = {
            "schema_version": cfg["schema_version"],
            "experiment": result.experiment,
            "name": cfg.get("name"),
            "config_sha256": config_hash(raw),
            "base_seed": cfg["base_seed"],
            "seed_override": seed_override is not None,
            "versions": _versions(),
            "tolerances": cfg["tolerances"],
            "passed": result.passed,
            "checks": result.checks,
            "verdicts": result.verdicts,
            "results": result.summary,
            "files": {p.name: _sha256(p) for p in files},
        }
        text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True, allow_nan=False)
        (out_dir / "summary.json").write_text(text + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=stream)
        return EXIT_IO
    if not result.passed:
        print(f"{result.experiment}: FAILED checks: {', '.join(result.failures)}", file=stream)
        return EXIT_FAIL
    print(f"{result.experiment}: all checks passed ({len(result.checks)})", file=stream)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenhom", description="Stochastic homogenization experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", *EXPERIMENTS):
        sp = sub.add_parser(name, help="run the experiment declared in the config" if name == "run"
                            else f"run a {name} config")
        sp.add_argument("--config", required=True, help="TOML experiment config")
        sp.add_argument("--out", default=None, help="output directory (default: output_dir from the config)")
        sp.add_argument("--seed-override", type=int, default=None, help="replace base_seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for cell sweeps")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    expect = None if args.command == "run" else args.command
    return run(args.config, args.out, args.seed_override, args.threads, expect)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
