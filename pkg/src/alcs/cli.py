"""Command line entry point: ``alcs <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 a training run failed.
"""

from __future__ import annotations

import argparse
import sys
import typing
from dataclasses import fields
from pathlib import Path

import yaml

from ._validation import UsageError
from .baselines import BaselineConfig
from .envs import list_tasks, load_task
from .harness import (
    METHODS,
    ExperimentSpec,
    RunFailure,
    aggregate,
    explain_cmd,
    plot,
    read_curve,
    read_runs,
    run_experiment,
    run_single,
    write_aggregate,
)
from .trainer import TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config_fields():
    """Tunable config fields shared by ALCS and the baselines, in a stable order."""
    out = {}
    for cls in (TrainConfig, BaselineConfig):
        hints = typing.get_type_hints(cls)
        for f in fields(cls):
            if f.name not in ("seed", "method") and f.name not in out:
                out[f.name] = hints[f.name]
    return out


def _optional_int(text):
    return None if text.lower() == "none" else int(text)


def _add_config_flags(parser):
    group = parser.add_argument_group("training overrides")
    for name, hint in _config_fields().items():
        flag = "--" + name.replace("_", "-")
        if hint is bool:
            group.add_argument(flag, dest=name, action="store_const", const=True, default=None)
        elif hint is float:
            group.add_argument(flag, dest=name, type=float, default=None)
        elif hint is int:
            group.add_argument(flag, dest=name, type=int, default=None)
        else:
            group.add_argument(flag, dest=name, type=_optional_int, default=None, metavar="INT|none")
    group.add_argument("--config", help="YAML file of training overrides")


def _overrides(args):
    data = {}
    if args.config:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: config file must be a mapping")
        data.update(loaded)
    for name in _config_fields():
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    return data


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--task", default=None)
    common.add_argument("--method", default=None, help=f"one of {', '.join(METHODS)}")

    parser = _Parser(prog="alcs", description="Learn to compose subtasks in labeled gridworlds.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="one seeded training run")
    _add_config_flags(p)

    p = sub.add_parser("run-experiment", parents=[common], help="multi-seed runs plus aggregation")
    p.add_argument("--spec", help="YAML experiment spec; command line flags override it")
    p.add_argument("--n-runs", type=int, default=None)
    p.add_argument("--trim", type=int, default=None)
    _add_config_flags(p)

    p = sub.add_parser("aggregate", parents=[common], help="trimmed aggregate of run CSVs")
    p.add_argument("inputs", nargs="+", help="run CSV files, or directories holding seed_*.csv")
    p.add_argument("--trim", type=int, default=2)

    p = sub.add_parser("plot", parents=[common], help="SVG of aggregate curves")
    p.add_argument("curves", nargs="+", metavar="NAME=CSV",
                   help="aggregate or run CSV per method; curves computed elsewhere are welcome")
    p.add_argument("--title", default=None)

    p = sub.add_parser("explain", parents=[common], help="explain a trained ALCS snapshot")
    p.add_argument("--snapshot", required=True, help="snapshot directory")
    p.add_argument("--state", required=True, help="cell as x,y")
    p.add_argument("--seq", default="", help="achieved subtasks, comma separated")

    sub.add_parser("list-tasks", parents=[common], help="shipped task names")
    return parser


def _require(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _run_csvs(inputs):
    paths = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            runs = path / "runs" if (path / "runs").is_dir() else path
            found = sorted(runs.glob("seed_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
            if not found:
                raise UsageError(f"{item}: no seed_*.csv files")
            paths.extend(found)
        elif path.is_file():
            paths.append(path)
        else:
            raise UsageError(f"{item}: no such file or directory")
    return paths


def _cmd_train(args):
    task = _require(args.task, "--task")
    method = args.method or "alcs"
    seed = args.seed or 0
    out = Path(args.out or "run")
    log = run_single(task, method, _overrides(args), seed, out)
    last = log.rows[-1][1] if log.rows else float("nan")
    print(f"{method} on {task}, seed {seed}: {len(log.rows)} evals, final return {last:g}")
    print(f"wrote {out / 'runs' / f'seed_{seed}.csv'} and {out / 'snapshots' / f'seed_{seed}'}")


def _cmd_run_experiment(args):
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec(task=_require(args.task, "--task"))
    for name in ("task", "method", "seed", "out", "n_runs", "trim"):
        value = getattr(args, name)
        if value is not None:
            setattr(spec, name, value)
    spec.config = {**spec.config, **_overrides(args)}
    _, rows = run_experiment(spec)
    last = rows[-1] if rows else None
    print(f"{spec.method} on {spec.task}: {spec.n_runs} runs, trim {spec.trim}")
    if last:
        print(f"final: steps {last[0]} mean {last[1]:g} bounds [{last[2]:g}, {last[3]:g}]")
    print(f"wrote {Path(spec.out) / 'aggregate.csv'}")


def _cmd_aggregate(args):
    rows = aggregate(read_runs(_run_csvs(args.inputs)), args.trim)
    if args.out:
        write_aggregate(rows, args.out)
        print(f"wrote {args.out}")
    else:
        print("env_steps,mean,lower,upper")
        for steps, mean, lo, hi in rows:
            print(f"{steps},{mean!r},{lo!r},{hi!r}")


def _cmd_plot(args):
    bundle = {}
    for item in args.curves:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"expected NAME=CSV, got {item!r}")
        bundle[name] = read_curve(path)
    out = args.out or "curves.svg"
    plot(bundle, out, args.title)
    print(f"wrote {out}")


def _cmd_explain(args):
    task = _require(args.task, "--task")
    seq = tuple(p for p in args.seq.split(",") if p)
    print(explain_cmd(args.snapshot, task, args.state, seq, args.seed or 0))


def _cmd_list_tasks(args):
    for name in list_tasks():
        spec = load_task(name)
        print(f"{name}\t{spec.domain}\t{' '.join(spec.vocabulary)}")


COMMANDS = {
    "train": _cmd_train,
    "run-experiment": _cmd_run_experiment,
    "aggregate": _cmd_aggregate,
    "plot": _cmd_plot,
    "explain": _cmd_explain,
    "list-tasks": _cmd_list_tasks,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
