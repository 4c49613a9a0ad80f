"""Command-line interface: validate configs, run experiments, quick sweeps.

Exit codes: 0 on success, 2 for configuration problems, 1 for runtime
failures. Errors are printed to stderr as a single JSON object so callers
can parse them.
"""

import argparse
import dataclasses
import json
import os
import sys

from .harness import ExperimentConfig, emit_csv, load_config, run_experiment


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _build_parser():
    p = argparse.ArgumentParser(prog="irsmm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (overrides config)")

    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("--config", required=True)

    sw = sub.add_parser("sweep", help="sweep one parameter, defaults elsewhere")
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--config", default=None, help="base config (optional)")
    sw.add_argument("--out", default=None)
    sw.add_argument("--trials", type=int, default=None)
    return p


def _execute(cfg, out_dir):
    out_dir = out_dir or cfg.out_dir
    if not out_dir:
        return _fail("config", "no output directory: pass --out or set out_dir", 2)
    os.makedirs(out_dir, exist_ok=True)
    traces = cfg.save_traces
    if traces and len(cfg.sweep_values) > 1:
        print(json.dumps({"warning": "traces_skipped",
                          "message": "trace files need a single sweep value"}),
              file=sys.stderr)
        traces = False
    result = run_experiment(cfg)
    csv_path = os.path.join(out_dir, "results.csv")
    emit_csv(result, csv_path, traces=traces)
    for value, trial, algorithm, message in result.errors:
        print(json.dumps({"warning": "trial_failed", "sweep_value": value,
                          "trial": trial, "algorithm": algorithm,
                          "message": message}), file=sys.stderr)
    print(csv_path)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps({"ok": True, "algorithms": list(cfg.algorithms),
                              "sweep_param": cfg.sweep_param,
                              "sweep_values": list(cfg.sweep_values),
                              "trials": cfg.trials}))
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            return _execute(cfg, args.out)
        # sweep: start from the given or default config, replace the axis
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        values = tuple(float(v) for v in args.values.split(","))
        updates = {"sweep_param": args.param, "sweep_values": values}
        if args.trials is not None:
            updates["trials"] = args.trials
        cfg = dataclasses.replace(cfg, **updates)
        return _execute(cfg, args.out)
    except ValueError as exc:
        return _fail("config", str(exc), 2)
    except Exception as exc:  # runtime failures: solver, I/O
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
