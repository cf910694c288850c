"""Command line entry point.

Runs a mode locally through the shared dispatch, or forwards the same
configuration to a running HTTP service with --server.  Either way the
artifacts written to --out are identical: a key = value report, a norm
trace CSV when the mode produces a trajectory, and a PVSF snapshot of
the final state.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import MODES, load_run_config
from .errors import ParapetError, UsageError
from .runner import dispatch, field_from_payload
from .storage import write_report, write_snapshot, write_trace_csv


def _parser():
    p = argparse.ArgumentParser(
        prog="parapet",
        description="pseudospectral solver and verification toolkit for "
                    "quasilinear parabolic systems on the torus",
    )
    p.add_argument("mode", nargs="?", choices=MODES,
                   help="run mode; may also come from --mode or the config")
    p.add_argument("--mode", dest="mode_flag", choices=MODES,
                   help="run mode (overrides the config file)")
    p.add_argument("--config", help="path to a key = value config file")
    p.add_argument("--out", help="directory for report/trace/snapshot artifacts")
    p.add_argument("--seed", type=int, help="seed for randomized checks")
    p.add_argument("--threads", type=int, help="cap BLAS threads (0 = leave)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, repeatable")
    p.add_argument("--server", metavar="URL",
                   help="forward the run to a service instead of solving here")
    return p


def _overrides(args):
    out = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = val.strip()
    mode = args.mode_flag or args.mode
    if mode is not None:
        out["mode"] = mode
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if args.threads is not None:
        out["threads"] = str(args.threads)
    return out


def _write_artifacts(out_dir, mode, report, trace, final_field, s):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / f"{mode}.report.txt", report)
    if trace:
        write_trace_csv(out / f"{mode}.trace.csv", trace)
    if final_field is not None:
        write_snapshot(out / f"{mode}.final.pvsf", final_field, s)


def _print_report(report):
    for key, val in report.items():
        if isinstance(val, float):
            print(f"{key} = {val:.12g}")
        else:
            print(f"{key} = {val}")


def _run_local(args, overrides):
    cfg = load_run_config(path=args.config, overrides=overrides)
    result = dispatch(cfg)
    if result.suite_results is not None:
        for r in result.suite_results:
            print(r.line())
    _print_report(result.report)
    if args.out:
        _write_artifacts(args.out, result.mode, result.report,
                         result.trace_rows(), result.final_field, result.s)
    if result.suite_results is not None:
        if not all(r.passed for r in result.suite_results):
            return 1
    return 0


def _run_remote(args, overrides):
    import httpx

    config_text = ""
    if args.config:
        config_text = Path(args.config).read_text()
    url = args.server.rstrip("/") + "/run"
    resp = httpx.post(url, json={"config": config_text, "overrides": overrides},
                      timeout=600.0)
    if resp.status_code != 200:
        try:
            err = resp.json().get("error", {})
        except ValueError:
            err = {}
        msg = err.get("message", f"HTTP {resp.status_code}")
        print(f"parapet: server error: {msg}", file=sys.stderr)
        return int(err.get("exit_code", 1))
    payload = resp.json()
    report = payload["report"]
    _print_report(report)
    if args.out:
        final_field = None
        s = 2.0
        state = payload.get("final_state")
        if state is not None:
            final_field = field_from_payload(state)
            s = float(state["s"])
        _write_artifacts(args.out, payload["mode"], report,
                         payload.get("trace"), final_field, s)
    if payload["mode"] == "suite" and not report.get("ok", False):
        return 1
    return 0


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        overrides = _overrides(args)
        if args.server:
            return _run_remote(args, overrides)
        return _run_local(args, overrides)
    except ParapetError as exc:
        print(f"parapet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
