"""Command-line experiment runner.

Subcommands: distance, volume, heat-kernel, conservation, decay, separation,
compare, wave, nash, suite, report.  Every experiment subcommand takes
--config PATH (JSON, see grushinlab.config), --out DIR, --workers N and
--seed S; flags override the config file, and the environment variables
GRUSHINLAB_CONFIG / GRUSHINLAB_OUT / GRUSHINLAB_WORKERS / GRUSHINLAB_SEED
mirror the flags (flags win).  Without --config a built-in default
configuration for that experiment kind is used.

``suite`` runs a manifest of configs (JSON list, or the built-in
``acceptance`` manifest) concurrently and exits nonzero if any check fails;
``report`` pretty-prints a stored report.json.  Exit status is 0 exactly
when every check passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, ExperimentConfig
from .experiments import acceptance_manifest, run_experiment
from .reporting import summary_lines, write_report

ENV_PREFIX = "GRUSHINLAB_"

_SUBCOMMAND_KIND = {
    "distance": "distance",
    "volume": "volume",
    "heat-kernel": "heat_kernel",
    "conservation": "conservation",
    "decay": "decay",
    "separation": "separation",
    "compare": "compare",
    "wave": "wave",
    "nash": "nash",
}

_DEFAULT_CONFIGS = {
    "conservation": {
        "experiment": "conservation",
        "params": {"n": 1, "m": 0, "delta1": 0.25, "delta1p": 0.25},
        "grid": {"extents": 6.0, "counts": 401},
        "method": {"kind": "exact_eigendecomposition"},
        "knobs": {"bound": 1e-8, "times": [0.01, 0.1, 1.0], "n_sources": 5},
    },
    "decay": {
        "experiment": "decay",
        "params": {"n": 1, "m": 0, "delta1": 0.5},
        "method": {"kind": "exact_eigendecomposition"},
        "knobs": {"stages": [{
            "label": "small_t", "extents": 8.0, "counts": 8193,
            "boundary": "half_line_positive",
            "times": [0.1, 0.16, 0.25, 0.4, 0.63, 1.0],
            "slope": -1.0, "tol": 0.1,
        }]},
    },
    "distance": {
        "experiment": "distance",
        "params": {"n": 1, "m": 1, "delta2": 1.0, "delta2p": 1.0},
        "grid": {"extents": 4.0, "counts": 65},
        "knobs": {"n_sources": 5, "n_targets": 8},
    },
    "volume": {
        "experiment": "volume",
        "params": {"n": 1, "m": 1, "delta2": 1.0, "delta2p": 1.0},
        "grid": {"extents": [4.0, 10.0], "counts": [65, 641]},
        "knobs": {"task": "slopes", "tol": 0.15,
                  "origin_radii": {"lo": 0.7, "hi": 5.0, "n": 7},
                  "off_center": [1.0, 0.0], "off_radii": {"lo": 0.15, "hi": 1.0, "n": 7}},
    },
    "heat_kernel": {
        "experiment": "heat_kernel",
        "params": {"n": 1, "m": 0},
        "grid": {"extents": 8.0, "counts": 1025},
        "method": {"kind": "exact_eigendecomposition"},
        "knobs": {"source": [0.0], "t": 0.1, "oracle": "gauss_free_space", "oracle_tol": 1e-3},
    },
    "separation": {
        "experiment": "separation",
        "params": {"n": 1, "m": 0, "delta1": 0.75, "delta1p": 0.75},
        "grid": {"extents": 4.0, "counts": 101},
        "method": {"kind": "exact_eigendecomposition"},
        "knobs": {"refinements": 3, "t": 1.0, "sources": [[1.0], [-0.5]]},
    },
    "compare": {
        "experiment": "compare",
        "params": {"n": 1, "m": 0, "delta1": 0.5},
        "grid": {"extents": 6.0, "counts": 385},
        "method": {"kind": "exact_eigendecomposition"},
        "knobs": {"r_cut": 1.0, "region": [1.0, 2.0], "n_times": 6},
    },
    "wave": {
        "experiment": "wave",
        "params": {"n": 1, "m": 1, "delta2": 1.0, "delta2p": 1.0},
        "grid": {"extents": 8.0, "counts": 129},
        "knobs": {"task": "finite_speed", "bump_center": [1.0, 0.0], "bump_width": 0.6,
                  "times": [1.0], "refinements": 2, "leak_bound": 1e-5},
    },
    "nash": {
        "experiment": "nash",
        "params": {"n": 1, "m": 1, "delta2": 1.0, "delta2p": 1.0},
        "grid": {"extents": 2.0, "counts": 65},
        "knobs": {"task": "nash", "ensemble": 40, "vf_slopes": True},
    },
}


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def _load_config_dict(kind: str, args) -> dict:
    path = args.config or _env("CONFIG")
    if path:
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"{path}: not valid JSON ({err})") from err
    else:
        raw = json.loads(json.dumps(_DEFAULT_CONFIGS[kind]))
    if raw.get("experiment") is None:
        raw["experiment"] = kind
    if raw.get("experiment") != kind:
        raise ConfigError(f"experiment: config is for {raw.get('experiment')!r}, "
                          f"but the {kind!r} subcommand was invoked")
    seed = args.seed if args.seed is not None else _env("SEED")
    if seed is not None:
        raw["seed"] = int(seed)
    workers = args.workers if args.workers is not None else _env("WORKERS")
    if workers is not None:
        raw["workers"] = int(workers)
    out = args.out or _env("OUT")
    if out:
        raw["out"] = out
    return raw


def _run_single(raw: dict, default_out: str) -> dict:
    cfg = ExperimentConfig.from_dict(raw)
    report = run_experiment(cfg)
    out_dir = cfg.out or default_out
    path = write_report(os.path.join(out_dir, cfg.name), report)
    report["report_path"] = path
    return report


def _suite_worker(raw: dict, out_dir: str) -> dict:
    return _run_single(raw, out_dir)


def run_suite(manifest: list[dict], out_dir: str, workers: int) -> dict:
    reports = []
    if workers <= 1 or len(manifest) <= 1:
        for raw in manifest:
            reports.append(_suite_worker(raw, out_dir))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_suite_worker, raw, out_dir) for raw in manifest]
            reports = [f.result() for f in futures]
    aggregate = {
        "experiments": [
            {"name": r["name"], "passed": r["passed"],
             "checks": r["checks"], "timings": r["timings"]}
            for r in reports
        ],
        "passed": all(r["passed"] for r in reports),
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "suite_report.json"), "w", newline="\n") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return aggregate


def _print_report(report: dict) -> None:
    for line in summary_lines(report):
        print(line)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="grushinlab",
        description="Desk-scale verification experiments for Grushin-type degenerate diffusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KIND:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--out", help="output directory (default ./results)")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("suite", help="run a manifest of experiments")
    p.add_argument("--manifest", default="acceptance",
                   help="JSON manifest path, or 'acceptance' for the built-in suite")
    p.add_argument("--out", help="output directory (default ./results)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override every config's seed")
    p = sub.add_parser("report", help="pretty-print a stored report.json")
    p.add_argument("path", help="path to report.json or suite_report.json")

    args = parser.parse_args(argv)

    if args.command == "report":
        with open(args.path) as fh:
            stored = json.load(fh)
        if "experiments" in stored:
            ok = True
            for entry in stored["experiments"]:
                _print_report(entry)
                ok = ok and entry["passed"]
            print("SUITE:", "PASS" if stored["passed"] else "FAIL")
            return 0 if stored["passed"] else 1
        _print_report(stored)
        return 0 if stored.get("passed") else 1

    out_dir = args.out or _env("OUT") or "results"
    if args.command == "suite":
        if args.manifest == "acceptance":
            manifest = acceptance_manifest()
        else:
            with open(args.manifest) as fh:
                loaded = json.load(fh)
            manifest = loaded["experiments"] if isinstance(loaded, dict) else loaded
        if args.seed is not None:
            for raw in manifest:
                raw["seed"] = args.seed
        workers = args.workers if args.workers is not None else int(_env("WORKERS") or 1)
        try:
            aggregate = run_suite(manifest, out_dir, workers)
        except ConfigError as err:
            print(f"configuration error: {err}", file=sys.stderr)
            return 2
        for entry in aggregate["experiments"]:
            _print_report(entry)
        print("SUITE:", "PASS" if aggregate["passed"] else "FAIL")
        return 0 if aggregate["passed"] else 1

    kind = _SUBCOMMAND_KIND[args.command]
    try:
        raw = _load_config_dict(kind, args)
        report = _run_single(raw, out_dir)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    _print_report(report)
    print("RESULT:", "PASS" if report["passed"] else "FAIL",
          f"({report['report_path']})")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
