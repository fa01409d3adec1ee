"""Command-line entry point: ``prestrain-hom <command> --config PATH [--out PATH]``.

Configurations are JSON files validated against per-command schemas that
reject unknown keys.  Exit codes: 0 success, 1 verification failure,
2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from . import __version__, runner
from .errors import LineSearchFailure, NonConvergence, SingularQ, SolverDivergence
from .verify import CHECKS, FAULTS, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ENV_THREADS = "PRESTRAIN_HOM_THREADS"
ENV_LOG_LEVEL = "PRESTRAIN_HOM_LOG_LEVEL"

log = logging.getLogger("prestrain_hom")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_square = {"type": "array", "items": {"type": "array", "items": _num}}

CELL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": runner.FAMILIES},
        "dim": {"enum": [2, 3]},
        "N": {"type": "integer", "minimum": 2},
        "params": {"type": "object"},
        "file": {"type": "string"},
    },
    "oneOf": [{"required": ["family"]}, {"required": ["file"]}],
}


def _schema(props: dict, required=()) -> dict:
    props = dict(props, command={"type": "string"}, out={"type": "string"})
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": list(required)}


SCHEMAS = {
    "homogenize": _schema({"cell": CELL, "rtol": _pos,
                           "maxiter": {"type": "integer", "minimum": 1}}, ["cell"]),
    "laminate-sweep": {
        **_schema({
            "family": {"enum": ["theta", "mu2", "beta"]},
            "values": {"type": "array", "items": _num, "minItems": 1},
            "range": {"type": "object", "additionalProperties": False,
                      "properties": {"start": _num, "stop": _num, "step": _num,
                                     "num": {"type": "integer", "minimum": 1}},
                      "required": ["start", "stop"],
                      "oneOf": [{"required": ["step"]}, {"required": ["num"]}]},
            "fixed": {"type": "object", "additionalProperties": False,
                      "properties": {k: _num for k in ("theta", "lam1", "mu1", "lam2", "mu2")}
                      | {"B1": _square, "B2": _square}},
        }, ["family"]),
        "oneOf": [{"required": ["values"]}, {"required": ["range"]}],
    },
    "expand-check": _schema({
        "cell": CELL, "G": _square, "G_index": {"type": "integer", "minimum": 1},
        "h_list": {"type": "array", "items": _pos, "minItems": 2},
        "init": {"enum": ["linear", "zero"]}, "polar_h": _pos,
    }, ["cell"]),
    "macro-diagram": _schema({
        "cell": CELL, "eps_list": {"type": "array", "items": _pos, "minItems": 3},
        "Dg": _square, "rtol": _pos, "dump_dir": {"type": "string"},
        "gamma": {"oneOf": [{"enum": ["left", "right", "bottom", "top", "all"]},
                            {"type": "array", "minItems": 1,
                             "items": {"enum": ["left", "right", "bottom", "top"]}}]},
    }, ["cell"]),
    "verify": _schema({
        "N": {"type": "integer", "minimum": 2},
        "criteria": {"type": "array", "minItems": 1,
                     "items": {"enum": sorted(CHECKS)}},
        "inject_fault": {"enum": list(FAULTS)},
        "seed": {"type": "integer"},
    }),
    "validate-sfj": _schema({
        "joints": {"type": "array", "minItems": 1, "items": {"enum": sorted(runner.JOINTS)}},
        "N": {"type": "integer", "minimum": 2},
        "tol": _pos,
    }),
}


class ConfigFailure(Exception):
    pass


def load_config(command: str, path: str | None) -> dict:
    if path is None:
        config: dict = {}
    else:
        try:
            config = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigFailure(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigFailure(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigFailure(f"invalid config at {where}: {exc.message}") from exc
    if config.get("command", command) != command:
        raise ConfigFailure(f"config is for command {config['command']!r}, not {command!r}")
    return config


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(ENV_THREADS)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError as exc:
        raise ConfigFailure(f"{ENV_THREADS} must be an integer, got {env!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prestrain-hom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("--threads", type=int, help=f"worker threads (env {ENV_THREADS})")
        p.add_argument("--log-level", help=f"logging level (env {ENV_LOG_LEVEL})")
    return parser


def _run(command: str, config: dict, threads: int, base: Path | None, out: str | None) -> int:
    if command == "homogenize":
        _write(runner.dump_json(runner.homogenize(config, threads, base)), out)
    elif command == "laminate-sweep":
        _write(runner.laminate_sweep(config), out)
    elif command == "expand-check":
        _write(runner.dump_json(runner.expand_check(config, threads, base)), out)
    elif command == "macro-diagram":
        _write(runner.dump_json(runner.macro_diagram(config, base)), out)
    elif command == "validate-sfj":
        doc = runner.validate_joints(config)
        _write(runner.dump_json(doc), out)
        return EXIT_OK if doc["passed"] else EXIT_VERIFY
    elif command == "verify":
        echo = print if out is not None else (lambda s: print(s, file=sys.stderr))
        results = run_suite(config.get("N", 16), config.get("inject_fault"),
                            config.get("criteria"), threads, config.get("seed", 0), echo=echo)
        ok = all(r.passed for r in results)
        doc = {"results": [r.to_json() for r in results], "passed": ok,
               "provenance": runner.provenance(config)}
        _write(runner.dump_json(doc), out)
        return EXIT_OK if ok else EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or os.environ.get(ENV_LOG_LEVEL, "WARNING")
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = load_config(args.command, args.config)
        threads = _threads(args.threads)
        out = args.out or config.get("out")
        base = Path(args.config).resolve().parent if args.config else None
        return _run(args.command, config, threads, base, out)
    except ConfigFailure as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverDivergence, SingularQ, LineSearchFailure, NonConvergence,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # domain errors raised while building cells or sweeps are configuration problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
