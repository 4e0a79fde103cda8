"""Deterministic labeled gridworlds for the OfficeWorld and MineCraft tasks.

A task is loaded from a YAML layout file (see ``layouts/``): an ASCII grid
(``#`` wall, ``.`` floor, ``S`` start, one character per label cell), a
legend mapping label characters to subtask names, the task vocabulary, and a
reward rule.  The MDP state is the agent's cell only; everything the task
remembers about the episode lives in its achieved-label history.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import yaml

from ._validation import LayoutError, UsageError, check_count

ACTIONS = ("up", "down", "left", "right")
_DELTAS = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}

TASK_FILES = {
    "Coffee": "coffee.yaml",
    "CoffeeMail": "coffeemail.yaml",
    "Collecting": "collecting.yaml",
    "Bonus": "bonus.yaml",
    "Plant": "plant.yaml",
    "Bridge": "bridge.yaml",
    "Bed": "bed.yaml",
    "Gem": "gem.yaml",
}


class GridPos(NamedTuple):
    x: int
    y: int

    def __str__(self):
        return f"{self.x},{self.y}"

    @classmethod
    def parse(cls, text):
        x, y = (int(v) for v in str(text).split(","))
        return cls(x, y)


class StepOutcome(NamedTuple):
    next_state: GridPos
    reward: float
    terminal: bool
    raw_label: str | None
    # True when the episode ended only because the step cap was hit.
    truncated: bool = False


@dataclass(frozen=True)
class Layout:
    width: int
    height: int
    walls: frozenset
    start: GridPos
    label_cells: Mapping[GridPos, str]

    def in_bounds(self, pos):
        return 0 <= pos[0] < self.width and 0 <= pos[1] < self.height

    def neighbours(self, pos):
        """Successor cell for each action; bumping into a wall or the edge stays put."""
        out = {}
        for action in ACTIONS:
            dx, dy = _DELTAS[action]
            nxt = GridPos(pos[0] + dx, pos[1] + dy)
            if not self.in_bounds(nxt) or nxt in self.walls:
                nxt = GridPos(*pos)
            out[action] = nxt
        return out

    def reachable(self):
        seen = {self.start}
        queue = deque([self.start])
        while queue:
            cell = queue.popleft()
            for nxt in self.neighbours(cell).values():
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    def validate(self, vocabulary=None):
        if not self.in_bounds(self.start):
            raise LayoutError(f"start {self.start} outside the {self.width}x{self.height} grid")
        if self.start in self.walls:
            raise LayoutError(f"start {self.start} is on a wall")
        for cell in self.label_cells:
            if not self.in_bounds(cell) or cell in self.walls:
                raise LayoutError(f"label cell {cell} is out of bounds or on a wall")
        if vocabulary is not None:
            placed = set(self.label_cells.values())
            missing = [p for p in vocabulary if p not in placed]
            if missing:
                raise LayoutError(f"subtasks without a label cell: {missing}")
            stray = sorted(placed - set(vocabulary))
            if stray:
                raise LayoutError(f"label cells outside the vocabulary: {stray}")
        reach = self.reachable()
        for cell, name in self.label_cells.items():
            if cell not in reach:
                raise LayoutError(f"unreachable label cell {cell} ({name})")

    @classmethod
    def from_ascii(cls, rows: Sequence[str], legend: Mapping[str, str]):
        rows = [r for r in rows if r.strip()]
        if not rows:
            raise LayoutError("empty grid")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise LayoutError("grid rows have unequal lengths")
        walls, labels, start = set(), {}, None
        for y, row in enumerate(rows):
            for x, ch in enumerate(row):
                pos = GridPos(x, y)
                if ch == "#":
                    walls.add(pos)
                elif ch == "S":
                    if start is not None:
                        raise LayoutError("grid has more than one start cell")
                    start = pos
                elif ch in legend:
                    labels[pos] = legend[ch]
                elif ch != ".":
                    raise LayoutError(f"unknown grid character {ch!r} at {pos}")
        if start is None:
            raise LayoutError("grid has no start cell")
        return cls(width, len(rows), frozenset(walls), start, labels)


# Reward rules ---------------------------------------------------------------
#
# A rule sees the deduplicated label stream, the same one the agent observes:
# a label cell fires only the first time its subtask is reached in an episode.
# Its progress value is a pure function of that stream, so the reward at a
# step is a pure function of (achieved sequence, current label).


@dataclass(frozen=True)
class PrecedenceRule:
    """Reward 1 on the final event once all its prerequisites have counted.

    An event counts only when its own prerequisites counted before it, which
    encodes both "any order" sets and strict orderings.
    """

    final: str
    requires: Mapping[str, frozenset] = field(default_factory=dict)
    reward: float = 1.0

    def initial(self):
        return frozenset()

    def advance(self, progress, event):
        if event is None:
            return progress, 0.0, False
        needed = self.requires.get(event, frozenset())
        if not needed <= progress:
            return progress, 0.0, False
        if event == self.final:
            return progress | {event}, self.reward, True
        return progress | {event}, 0.0, False


@dataclass(frozen=True)
class BonusRule:
    """Arriving at ``final`` ends the episode and pays per collected item."""

    final: str
    items: frozenset
    unit: float = 1.0
    bonus: float = 5.0

    def initial(self):
        return frozenset()

    def advance(self, progress, event):
        if event is None:
            return progress, 0.0, False
        if event == self.final:
            got = len(progress & self.items)
            reward = got * self.unit + (self.bonus if got == len(self.items) else 0.0)
            return progress, reward, True
        if event in self.items:
            return progress | {event}, 0.0, False
        return progress, 0.0, False


@dataclass(frozen=True)
class CallableRule:
    """Wraps a per-step ``fn(progress, event) -> (progress, reward, terminal)``."""

    fn: Callable
    start: object = frozenset()

    def initial(self):
        return self.start

    def advance(self, progress, event):
        return self.fn(progress, event)


def _rule_from_dict(data):
    kind = data.get("kind")
    if kind == "precedence":
        req = {k: frozenset(v) for k, v in (data.get("requires") or {}).items()}
        return PrecedenceRule(data["final"], req, float(data.get("reward", 1.0)))
    if kind == "bonus":
        return BonusRule(
            data["final"], frozenset(data["items"]),
            float(data.get("unit", 1.0)), float(data.get("bonus", 5.0)),
        )
    raise LayoutError(f"unknown reward rule kind {kind!r}")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    vocabulary: tuple
    layout: Layout
    reward_rule: object
    step_cap: int
    domain: str = ""

    def with_step_cap(self, step_cap):
        if step_cap is None:
            return self
        check_count(step_cap, "step_cap", 1)
        return TaskSpec(self.name, self.vocabulary, self.layout, self.reward_rule,
                        int(step_cap), self.domain)

    def with_start(self, start):
        lay = self.layout
        new = Layout(lay.width, lay.height, lay.walls, GridPos(*start), lay.label_cells)
        return TaskSpec(self.name, self.vocabulary, new, self.reward_rule, self.step_cap, self.domain)


def parse_task(text):
    data = yaml.safe_load(text)
    try:
        legend = {str(k): str(v) for k, v in data["legend"].items()}
        layout = Layout.from_ascii(data["grid"].splitlines(), legend)
        vocab = tuple(str(v) for v in data["vocabulary"])
        spec = TaskSpec(
            name=str(data["name"]),
            vocabulary=vocab,
            layout=layout,
            reward_rule=_rule_from_dict(data["rule"]),
            step_cap=int(data.get("step_cap", 1000)),
            domain=str(data.get("domain", "")),
        )
    except KeyError as exc:
        raise LayoutError(f"layout file is missing key {exc}") from None
    layout.validate(vocab)
    check_count(spec.step_cap, "step_cap", 1)
    return spec


def load_task(name_or_path):
    """Load a shipped task by name (e.g. ``"Coffee"``) or a layout file by path."""
    if name_or_path in TASK_FILES:
        text = resources.files("alcs.layouts").joinpath(TASK_FILES[name_or_path]).read_text()
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise UsageError(f"unknown task {name_or_path!r}; known: {', '.join(TASK_FILES)}")
        text = path.read_text()
    return parse_task(text)


def list_tasks():
    return list(TASK_FILES)


class LabeledGridEnv:
    """A gridworld MDP plus its labeling function.

    Labels are deduplicated per episode: a label cell reports its subtask
    only on the first entry in an episode.
    """

    actions = ACTIONS

    def __init__(self, spec: TaskSpec, seed: int = 0):
        spec.layout.validate(spec.vocabulary)
        self.spec = spec
        # Transitions are deterministic; the seed only identifies the instance.
        self.seed = seed
        self.layout = spec.layout
        self.step_cap = spec.step_cap
        self._moves = {}
        for x in range(self.layout.width):
            for y in range(self.layout.height):
                pos = GridPos(x, y)
                if pos not in self.layout.walls:
                    self._moves[pos] = self.layout.neighbours(pos)
        self._cells = dict(self.layout.label_cells)
        self._rule = spec.reward_rule
        self._state = None
        self._done = True
        self._t = 0
        self._achieved: list[str] = []
        self._achieved_set: set[str] = set()
        self._progress = None

    @property
    def state(self):
        return self._state

    @property
    def achieved(self):
        """Subtasks achieved this episode, in first-achievement order."""
        return tuple(self._achieved)

    @property
    def t(self):
        return self._t

    @property
    def progress(self):
        """Reward-rule progress for the current episode (hashable)."""
        return self._progress

    def vocabulary(self):
        return list(self.spec.vocabulary)

    def cells(self):
        return list(self._moves)

    def reset(self):
        self._state = self.layout.start
        self._done = False
        self._t = 0
        self._achieved = []
        self._achieved_set = set()
        self._progress = self._rule.initial()
        return self._state

    def cell_subtask(self, state):
        """The subtask printed on a cell, ignoring per-episode deduplication."""
        return self._cells.get(state)

    def label(self, state):
        if not self.layout.in_bounds(state):
            raise UsageError(f"state {state} is outside the grid")
        p = self._cells.get(state)
        if p is None or p in self._achieved_set:
            return None
        return p

    def step(self, action):
        if self._done:
            raise UsageError("step() called on a terminal or un-reset environment")
        try:
            nxt = self._moves[self._state][action]
        except KeyError:
            raise UsageError(f"unknown action {action!r}") from None
        self._t += 1
        raw = None
        if nxt != self._state:
            cell = self._cells.get(nxt)
            if cell is not None and cell not in self._achieved_set:
                raw = cell
                self._achieved.append(cell)
                self._achieved_set.add(cell)
        self._progress, reward, terminal = self._rule.advance(self._progress, raw)
        truncated = False
        if not terminal and self._t >= self.step_cap:
            terminal = truncated = True
        self._state = nxt
        self._done = terminal
        return StepOutcome(nxt, reward, terminal, raw, truncated)


def build_env(spec, seed=0):
    """Build an (un-reset) environment; ``spec`` may also be a task name or layout path."""
    if not isinstance(spec, TaskSpec):
        spec = load_task(spec)
    return LabeledGridEnv(spec, seed)


def shortest_path_lengths(layout, target):
    """Breadth-first step counts from every reachable cell to ``target``."""
    moves = {}
    for x in range(layout.width):
        for y in range(layout.height):
            pos = GridPos(x, y)
            if pos not in layout.walls:
                moves[pos] = layout.neighbours(pos)
    rev = {pos: set() for pos in moves}
    for pos, nbrs in moves.items():
        for nxt in nbrs.values():
            if nxt != pos:
                rev[nxt].add(pos)
    dist = {GridPos(*target): 0}
    queue = deque([GridPos(*target)])
    while queue:
        cell = queue.popleft()
        for prev in rev[cell]:
            if prev not in dist:
                dist[prev] = dist[cell] + 1
                queue.append(prev)
    return dist
