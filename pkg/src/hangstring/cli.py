"""Command line entry point: ``hangstring run|check|version``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, HangstringError

log = logging.getLogger("hangstring")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _metric(check) -> str:
    parts = []
    for k, v in check["metrics"].items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.6g}")
        elif v is not None and not isinstance(v, (list, dict)):
            parts.append(f"{k}={v}")
    return ", ".join(parts)


def _raising_module(exc) -> str:
    """Name of the innermost package module in the traceback."""
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "hangstring" in Path(f.filename).parts]
    return f"hangstring.{Path(frames[-1].filename).stem}" if frames else "hangstring"


def run(config_path, jobs: int = 1, output_dir=None) -> int:
    from .experiments import RUNNERS

    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if output_dir is not None:
        cfg.output_dir = str(output_dir)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = RUNNERS[cfg.kind](cfg, out, jobs=jobs)
    except HangstringError as exc:
        diag = getattr(exc, "diagnostics", {})
        module = _raising_module(exc)
        print(f"{cfg.kind}: FAIL (runtime error in {module}: {exc})", file=sys.stderr)
        (out / f"{cfg.kind}_error.json").write_text(json.dumps(_jsonable(
            {"kind": cfg.kind, "config": cfg.resolved(), "error": str(exc), "type": type(exc).__name__,
             "module": module, "diagnostics": diag}), indent=2, sort_keys=True))
        return 1
    except Exception as exc:  # noqa: BLE001 - report everything as a runtime failure
        traceback.print_exc()
        print(f"{cfg.kind}: FAIL (runtime error: {exc})", file=sys.stderr)
        return 1
    checks = result.get("checks", [])
    report = {"kind": cfg.kind, "config": cfg.resolved(), "result": result,
              "passed": all(c["passed"] for c in checks)}
    (out / f"{cfg.kind}_report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    for c in checks:
        print(f"{cfg.kind}: {'PASS' if c['passed'] else 'FAIL'} ({c['name']}: {_metric(c)})")
    return 0 if report["passed"] else 1


def check(config_path) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.kind}: config OK")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hangstring", description="Degenerate wave and hanging string experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--output-dir", default=None)
    p_check = sub.add_parser("check", help="validate a config without running it")
    p_check.add_argument("config")
    sub.add_parser("version")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run(args.config, jobs=max(1, args.jobs), output_dir=args.output_dir)
    if args.command == "check":
        return check(args.config)
    print(f"hangstring {__version__}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
