"""Command-line front end: run studies, reproduce the bundled benchmark
tables, and emit the fixed-design calculator report."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from functools import partial
from importlib import resources
from pathlib import Path

from .cara import TargetKind
from .core import ScenarioSpec
from .engine import (
    fixed_design_report,
    run_study,
    summaries_to_csv,
    summaries_to_json,
)
from .errors import InvalidParameterError, ScenarioError, SimlabError
from .registry import PROCEDURE_IDS, build_procedure

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_BUNDLED = ("model1", "model2", "model3")

#: procedures and scenario of each reproduction preset
_PRESET_PROCEDURES = (
    "crd", "spbd", "pocock-simon", "cara1", "cara2", "cara3", "cara4", "cara5",
)
_PRESET_SCENARIOS = {"t7-1": "model1", "t7-2": "model2", "t7-3": "model3"}

#: two-stratum example scenario behind the s7-rules preset
_RULES_PROBS = ((0.95, 0.70), (0.70, 0.95))
_RULES_SIZES = (100, 100)


class _ConfigError(Exception):
    """Internal: configuration problem that maps to exit code 2."""


def _error_record(kind: str, detail: str) -> str:
    return json.dumps({"error": kind, "detail": detail})


def _load_scenario(ref: str) -> ScenarioSpec:
    """Load a scenario from a file path, or from the bundled set by name
    (``model1``, ``model1.json``, ...) when no such file exists."""
    path = Path(ref)
    if path.exists():
        try:
            return ScenarioSpec.load(path)
        except ScenarioError as exc:
            raise _ConfigError(f"scenario {ref}: {exc}") from exc
    stem = path.stem if path.suffix == ".json" else ref
    if stem in _BUNDLED:
        text = resources.files("simlab.data").joinpath(f"{stem}.json").read_text()
        return ScenarioSpec.from_json(text)
    raise _ConfigError(
        f"scenario file {ref!r} not found (bundled names: {', '.join(_BUNDLED)})"
    )


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise _ConfigError(f"--param expects key=value, got {pair!r}")
        params[key] = value
    return params


def _resolve_seed(flag_value, scenario: ScenarioSpec | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("SIMLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise _ConfigError(f"SIMLAB_SEED must be an integer, got {env!r}") from exc
    return scenario.seed if scenario is not None else 0


def _emit(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _progress_printer(label: str, quiet: bool):
    state = {"bucket": -1}

    def update(done: int, total: int):
        if quiet:
            return
        bucket = 10 * done // total
        if bucket > state["bucket"]:
            state["bucket"] = bucket
            print(f"[simlab] {label}: {done}/{total} replications", file=sys.stderr)

    return update


def _apply_config_file(args: argparse.Namespace):
    """Fill unset run flags from a JSON config file; flags always win."""
    if not args.config:
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise _ConfigError(f"config file {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise _ConfigError("config file must hold a JSON object")
    known = {"scenario", "procedure", "reps", "seed", "workers", "out", "format", "params"}
    unknown = doc.keys() - known
    if unknown:
        raise _ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("scenario", "procedure", "reps", "seed", "workers", "out"):
        if getattr(args, key if key != "format" else "fmt", None) is None and key in doc:
            setattr(args, key, doc[key])
    if args.fmt is None and "format" in doc:
        args.fmt = doc["format"]
    if "params" in doc:
        file_params = doc["params"]
        if not isinstance(file_params, dict):
            raise _ConfigError("config params must be an object")
        merged = dict(file_params)
        merged.update(_parse_params(args.param))
        args._merged_params = merged
    else:
        args._merged_params = _parse_params(args.param)


def cmd_run(args) -> int:
    _apply_config_file(args)
    params = getattr(args, "_merged_params", None)
    if params is None:
        params = _parse_params(args.param)
    if args.scenario is None:
        raise _ConfigError("--scenario is required")
    if args.procedure is None:
        raise _ConfigError("--procedure is required")
    scenario = _load_scenario(args.scenario)
    try:
        build_procedure(args.procedure, params, scenario)  # validate eagerly
    except InvalidParameterError as exc:
        raise _ConfigError(str(exc)) from exc
    factory = partial(build_procedure, args.procedure, params, scenario)
    seed = _resolve_seed(args.seed, scenario)
    reps = args.reps if args.reps is not None else 5000
    workers = args.workers if args.workers is not None else 1
    fmt = args.fmt if args.fmt is not None else "csv"
    out = args.out if args.out is not None else "-"
    started = time.time()
    summary = run_study(
        scenario,
        factory,
        reps,
        seed,
        workers=workers,
        procedure_id=args.procedure,
        progress=_progress_printer(f"{scenario.name} {args.procedure}", args.quiet),
    )
    if not args.quiet:
        print(
            f"[simlab] {scenario.name} {args.procedure}: done in {time.time() - started:.1f}s",
            file=sys.stderr,
        )
    text = summaries_to_csv([summary]) if fmt == "csv" else summaries_to_json([summary])
    _emit(text, out)
    return EXIT_OK


def _reproduce_rules_report() -> dict:
    rules = (TargetKind.BALANCED, TargetKind.NEYMAN_LOGOR, TargetKind.FAILURE_OPTIMAL_LOGOR)
    return fixed_design_report(_RULES_PROBS, _RULES_SIZES, rules)


def cmd_reproduce(args) -> int:
    out = args.out if args.out is not None else "-"
    if args.table == "s7-rules":
        report = _reproduce_rules_report()
        _emit(json.dumps(report, indent=2) + "\n", out)
        return EXIT_OK
    scenario_name = _PRESET_SCENARIOS[args.table]
    scenario = _load_scenario(scenario_name)
    seed = _resolve_seed(args.seed, scenario)
    reps = args.reps if args.reps is not None else 5000
    workers = args.workers if args.workers is not None else 1
    fmt = args.fmt if args.fmt is not None else "csv"
    summaries = []
    for proc_id in _PRESET_PROCEDURES:
        factory = partial(build_procedure, proc_id, {}, scenario)
        started = time.time()
        summaries.append(
            run_study(
                scenario,
                factory,
                reps,
                seed,
                workers=workers,
                procedure_id=proc_id,
                progress=_progress_printer(f"{args.table} {proc_id}", args.quiet),
            )
        )
        if not args.quiet:
            print(
                f"[simlab] {args.table} {proc_id}: done in {time.time() - started:.1f}s",
                file=sys.stderr,
            )
    text = summaries_to_csv(summaries) if fmt == "csv" else summaries_to_json(summaries)
    _emit(text, out)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simlab",
        description="Sequential treatment-allocation procedures and a "
        "Monte Carlo laboratory for two-arm trials with covariates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one (scenario, procedure) study")
    run.add_argument("--scenario", help="scenario JSON path or bundled name")
    run.add_argument("--procedure", help=f"one of: {', '.join(PROCEDURE_IDS)}")
    run.add_argument(
        "--param", action="append", metavar="K=V",
        help="procedure parameter override (repeatable)",
    )
    run.add_argument("--reps", type=int, default=None)
    run.add_argument("--seed", type=int, default=None,
                     help="study seed (falls back to SIMLAB_SEED, then the scenario)")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", default=None, help="output path, or - for stdout")
    run.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)
    run.add_argument("--config", default=None,
                     help="JSON file with flag defaults (flags override)")
    run.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    run.set_defaults(handler=cmd_run)

    rep = sub.add_parser(
        "reproduce", help="rerun a bundled benchmark preset (t7-1, t7-2, t7-3, s7-rules)"
    )
    rep.add_argument("table", choices=("t7-1", "t7-2", "t7-3", "s7-rules"))
    rep.add_argument("--reps", type=int, default=None)
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--workers", type=int, default=None)
    rep.add_argument("--out", default=None)
    rep.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)
    rep.add_argument("--quiet", action="store_true")
    rep.set_defaults(handler=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _ConfigError as exc:
        print(_error_record("config", str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, InvalidParameterError) as exc:
        print(_error_record("config", str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except SimlabError as exc:
        print(_error_record("runtime", str(exc)), file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(_error_record("runtime", str(exc)), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
