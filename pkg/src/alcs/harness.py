"""Multi-seed experiments, trimmed aggregation, plots and snapshot explanations.

Layout of an experiment directory::

    runs/seed_<k>.csv          eval curve of one run
    snapshots/seed_<k>/        learned tables (and the record tree for ALCS)
    aggregate.csv              env_steps,mean,lower,upper
    experiment.yaml            the resolved experiment spec
"""

from __future__ import annotations

import csv
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ._validation import UsageError, check_count
from .baselines import METHODS as BASELINE_METHODS
from .baselines import BaselineConfig, run_baseline
from .envs import GridPos, load_task
from .interpret import RecordTree, explain
from .qcore import dump_table, load_table
from .trainer import RunLog, TrainConfig, train

ALCS_METHODS = {
    "alcs": {},
    "alcs-no-m": {"no_multi_experience": True},
    "alcs-no-s": {"no_sequence": True},
    "alcs-no-a": {"no_assumed_choice": True},
}
METHODS = tuple(ALCS_METHODS) + BASELINE_METHODS

AGGREGATE_HEADER = ["env_steps", "mean", "lower", "upper"]

# Snapshot file name -> key kinds.
ALCS_SNAPSHOT = {"q_low.txt": ("pos", "sym", "sym"), "q_high.txt": ("pos", "seq", "sym")}


class RunFailure(RuntimeError):
    def __init__(self, seed, cause):
        super().__init__(f"run with seed {seed} failed: {cause!r}")
        self.seed = seed


def check_method(method):
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return method


def make_config(method, overrides=None, seed=0):
    """The TrainConfig or BaselineConfig a method runs with."""
    check_method(method)
    data = dict(overrides or {})
    data["seed"] = seed
    if method in ALCS_METHODS:
        data.update(ALCS_METHODS[method])
        for key in ("method", "option_timeout", "relabel_count"):
            data.pop(key, None)
        return TrainConfig.from_dict(data).validate()
    for key in ("no_multi_experience", "no_sequence", "no_assumed_choice"):
        data.pop(key, None)
    data["method"] = method
    return BaselineConfig.from_dict(data).validate()


@dataclass
class ExperimentSpec:
    task: str
    method: str = "alcs"
    config: dict = field(default_factory=dict)
    n_runs: int = 20
    trim: int = 2
    seed: int = 0
    out: str = "experiment"

    def validate(self):
        load_task(self.task)
        check_method(self.method)
        check_count(self.n_runs, "n_runs", 1)
        check_count(self.trim, "trim", 0)
        check_count(self.seed, "seed", 0)
        if self.n_runs <= 2 * self.trim:
            raise UsageError(f"n_runs={self.n_runs} leaves nothing after trimming {self.trim} from each end")
        make_config(self.method, self.config, self.seed)
        return self

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {"task", "method", "config", "n_runs", "trim", "seed", "out"}
        config = dict(data.pop("config", None) or {})
        # Config keys may also sit at the top level of a spec file.
        for key in list(data):
            if key not in known:
                config[key] = data.pop(key)
        if "task" not in data:
            raise UsageError("experiment spec needs a task")
        return cls(config=config, **data)

    @classmethod
    def load(cls, path):
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read spec file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"{path}: spec file must be a mapping")
        return cls.from_dict(data)

    def to_dict(self):
        return {"task": self.task, "method": self.method, "n_runs": self.n_runs, "trim": self.trim,
                "seed": self.seed, "out": self.out, "config": dict(self.config)}


def run_single(task, method, overrides, seed, out_dir):
    """Train one seeded run and write its curve and snapshot under ``out_dir``."""
    out_dir = Path(out_dir)
    config = make_config(method, overrides, seed)
    snap = out_dir / "snapshots" / f"seed_{seed}"
    snap.mkdir(parents=True, exist_ok=True)
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    spec = load_task(task)
    if method in ALCS_METHODS:
        q_low, q_high, tree, log = train(spec, config)
        for name, kinds in ALCS_SNAPSHOT.items():
            dump_table(q_low if name == "q_low.txt" else q_high, snap / name, kinds)
        tree.save(snap / "tree.txt")
    else:
        tables, log = run_baseline(spec, config)
        for name, (table, kinds) in tables.items():
            dump_table(table, snap / f"{name}.txt", kinds)
    log.write_csv(out_dir / "runs" / f"seed_{seed}.csv")
    return log


def _run_job(job):
    task, method, overrides, seed, out_dir = job
    try:
        return seed, run_single(task, method, overrides, seed, out_dir).rows
    except Exception as exc:  # noqa: BLE001 - reported with the seed
        raise RunFailure(seed, exc) from exc


def worker_count(n_jobs):
    cap = os.environ.get("ALCS_LAB_THREADS")
    workers = os.cpu_count() or 1
    if cap:
        try:
            workers = max(1, int(cap))
        except ValueError as exc:
            raise UsageError(f"ALCS_LAB_THREADS must be an integer, got {cap!r}") from exc
    return max(1, min(workers, n_jobs))


def run_experiment(spec: ExperimentSpec):
    """Run ``n_runs`` seeds (``seed``, ``seed+1``, ...), then aggregate.

    Returns ``(logs, rows)``: the per-run logs in seed order and the
    aggregate rows.
    """
    spec.validate()
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiment.yaml").write_text(yaml.safe_dump(spec.to_dict(), sort_keys=True))
    jobs = [(spec.task, spec.method, spec.config, spec.seed + i, str(out)) for i in range(spec.n_runs)]
    workers = worker_count(len(jobs))
    if workers == 1:
        results = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    logs = [RunLog(list(rows)) for _, rows in sorted(results)]
    rows = aggregate(logs, spec.trim)
    write_aggregate(rows, out / "aggregate.csv")
    return logs, rows


# Aggregation ------------------------------------------------------------------


def _curve(c):
    if isinstance(c, RunLog):
        return [(r[0], r[1]) for r in c.rows]
    return [(int(s), float(v)) for s, v, *_ in c]


def aggregate(curves, trim):
    """Per eval point: sort run values, drop ``trim`` from each end, then mean/min/max.

    ``curves`` are RunLogs or sequences of ``(env_steps, value)``.  All runs
    must share one eval grid.
    """
    check_count(trim, "trim", 0)
    curves = [_curve(c) for c in curves]
    if not curves:
        raise UsageError("nothing to aggregate")
    if len(curves) <= 2 * trim:
        raise UsageError(f"{len(curves)} runs leave nothing after trimming {trim} from each end")
    grid = [s for s, _ in curves[0]]
    for i, c in enumerate(curves[1:], 1):
        if [s for s, _ in c] != grid:
            raise UsageError(f"run {i} does not share the eval grid of run 0")
    rows = []
    for j, steps in enumerate(grid):
        values = sorted(c[j][1] for c in curves)
        kept = values[trim:len(values) - trim]
        rows.append((steps, math.fsum(kept) / len(kept), kept[0], kept[-1]))
    return rows


def write_aggregate(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for steps, mean, lo, hi in rows:
            writer.writerow([steps, repr(float(mean)), repr(float(lo)), repr(float(hi))])


def read_curve(path):
    """Aggregate rows from an aggregate CSV or a single-run CSV (bounds = value).

    Curves from methods implemented elsewhere can be plotted by writing them
    in either format.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot read curve {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = []
        if header == AGGREGATE_HEADER:
            for r in reader:
                rows.append((int(r["env_steps"]), float(r["mean"]), float(r["lower"]), float(r["upper"])))
        elif header[:2] == ["env_steps", "eval_return"]:
            for r in reader:
                v = float(r["eval_return"])
                rows.append((int(r["env_steps"]), v, v, v))
        else:
            raise UsageError(f"{path}: unrecognised curve header {header}")
    return rows


def read_runs(paths):
    return [RunLog.read_csv(p) for p in paths]


def steps_to_threshold(log, threshold, budget=None):
    """First eval step from which every later eval (within ``budget``) is >= threshold.

    None when the curve ends below the threshold.
    """
    hit = None
    for steps, value in _curve(log):
        if budget is not None and steps > budget:
            break
        if value >= threshold:
            if hit is None:
                hit = steps
        else:
            hit = None
    return hit


def sign_test(ours, theirs):
    """One-sided sign test that ``ours`` reaches threshold sooner than ``theirs``.

    Entries are steps-to-threshold or None (never reached).  A pair counts
    for us when we reached it and they did not, or we were strictly faster;
    ties, and pairs where neither reached it, count as non-wins.
    Returns ``(wins, n, p_value)``.
    """
    from scipy.stats import binomtest

    if len(ours) != len(theirs):
        raise UsageError("sign test needs paired samples")
    wins = 0
    for a, b in zip(ours, theirs):
        if a is not None and (b is None or a < b):
            wins += 1
    n = len(ours)
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return wins, n, float(p)


# Plotting ---------------------------------------------------------------------


def plot(bundle, path, title=None):
    """SVG of trimmed-mean lines with shaded bound bands, one per method.

    ``bundle`` maps a method name to aggregate rows.  Output is byte-stable
    for a given input and matplotlib version.
    """
    if not bundle or not any(bundle.values()):
        raise UsageError("nothing to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    style = {"svg.hashsalt": "alcs", "svg.fonttype": "none", "path.simplify": False}
    with matplotlib.rc_context(style):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, rows in bundle.items():
            xs = [r[0] for r in rows]
            (line,) = ax.plot(xs, [r[1] for r in rows], label=name, linewidth=1.5)
            ax.fill_between(xs, [r[2] for r in rows], [r[3] for r in rows], color=line.get_color(), alpha=0.2,
                            linewidth=0)
        ax.set_xlabel("env steps")
        ax.set_ylabel("eval return")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)


# Explanations -----------------------------------------------------------------


def explain_cmd(snapshot, task, state, seq=(), seed=0):
    """Three-part explanation from an ALCS snapshot directory, as text."""
    snapshot = Path(snapshot)
    if not (snapshot / "q_high.txt").is_file() or not (snapshot / "tree.txt").is_file():
        raise UsageError(f"{snapshot}: not an ALCS snapshot (needs q_high.txt and tree.txt)")
    spec = load_task(task)
    vocabulary = tuple(spec.vocabulary)
    if isinstance(state, str):
        try:
            state = GridPos.parse(state)
        except ValueError:
            raise UsageError(f"state must look like x,y; got {state!r}") from None
    if not spec.layout.in_bounds(state):
        raise UsageError(f"state {state} is outside the {task} grid")
    seq = tuple(seq)
    unknown = [p for p in seq if p not in vocabulary]
    if unknown:
        raise UsageError(f"unknown subtasks {unknown}; vocabulary is {list(vocabulary)}")
    q_high = load_table(snapshot / "q_high.txt", ALCS_SNAPSHOT["q_high.txt"])
    tree = RecordTree.load(snapshot / "tree.txt", vocabulary)
    return str(explain(tree, q_high, state, seq, random.Random(seed), vocabulary))
