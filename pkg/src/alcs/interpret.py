"""Record tree of achieved-subtask sequences and three-part explanations.

Every sequence of subtasks achieved during training is a path from the
root (the empty sequence).  Each edge keeps the largest environment reward
seen when its subtask was achieved and how often that happened.  Given the
current sequence and the subtask the high level picks next, a breadth-first
search under that child finds the shallowest rewarding continuation.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .highlevel import select_subtask


@dataclass
class Node:
    visit_count: int = 0
    children: dict = field(default_factory=dict)  # subtask -> child sequence


@dataclass
class EdgeStat:
    reward: float
    count: int = 0


class Explanation(NamedTuple):
    history: tuple
    current: str
    plan: list | None

    def __str__(self):
        hist = ", ".join(self.history) if self.history else "none"
        plan = "none" if self.plan is None else ", ".join(self.plan) if self.plan else "(reward on this subtask)"
        return f"history: {hist}\ncurrent: {self.current}; plan: {plan}"


class RecordTree:
    def __init__(self, vocabulary=()):
        self.vocabulary = tuple(vocabulary)
        self.nodes = {(): Node()}
        self.edges = {}  # (parent sequence, subtask) -> EdgeStat

    def _order(self, p):
        try:
            return self.vocabulary.index(p)
        except ValueError:
            return len(self.vocabulary)

    def visit_root(self):
        self.nodes[()].visit_count += 1

    def record_achievement(self, seq_before, p_act, r):
        seq_before = tuple(seq_before)
        # Parents are normally present already; creating them keeps the tree prefix-closed.
        for i in range(len(seq_before)):
            parent, child = seq_before[:i], seq_before[: i + 1]
            if child not in self.nodes:
                self.nodes[child] = Node()
                self.nodes[parent].children[child[-1]] = child
                self.edges[(parent, child[-1])] = EdgeStat(0.0, 0)
        child = seq_before + (p_act,)
        node = self.nodes.get(child)
        if node is None:
            node = self.nodes[child] = Node()
            self.nodes[seq_before].children[p_act] = child
        node.visit_count += 1
        edge = self.edges.get((seq_before, p_act))
        if edge is None:
            self.edges[(seq_before, p_act)] = EdgeStat(float(r), 1)
        else:
            edge.reward = max(edge.reward, float(r))
            edge.count += 1

    def current_node(self, seq):
        return self.nodes.get(tuple(seq))

    def children(self, seq):
        node = self.nodes[tuple(seq)]
        return sorted(node.children.items(), key=lambda kv: (self._order(kv[0]), kv[0]))

    def plan_bfs(self, seq, p_next, max_depth):
        """Subtasks after ``p_next`` on the shallowest rewarding path, or None."""
        start = tuple(seq) + (p_next,)
        if start not in self.nodes:
            return None
        if self.edges[(tuple(seq), p_next)].reward > 0:
            return []
        queue = deque([(start, 0)])
        while queue:
            node, depth = queue.popleft()
            if depth >= max_depth:
                continue
            for p, child in self.children(node):
                if self.edges[(node, p)].reward > 0:
                    return list(child[len(start):])
                queue.append((child, depth + 1))
        return None

    def __eq__(self, other):
        if not isinstance(other, RecordTree):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    # Text format: root line "<> [n=..]", then one line per edge in depth-first
    # vocabulary order, indented two spaces per depth.

    def to_text(self):
        lines = [f"<> [n={self.nodes[()].visit_count}]"]

        def walk(seq, depth):
            for p, child in self.children(seq):
                edge = self.edges[(seq, p)]
                lines.append(f"{'  ' * depth}{_fmt_seq(seq)} -> {p} [r={edge.reward!r}, n={edge.count}]")
                walk(child, depth + 1)

        walk((), 1)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, vocabulary=()):
        tree = cls(vocabulary)
        lines = [ln for ln in text.splitlines() if ln.strip()]
        root = _ROOT_RE.fullmatch(lines[0].strip())
        if root is None:
            raise ValueError(f"bad record tree root line: {lines[0]!r}")
        tree.nodes[()].visit_count = int(root.group(1))
        for line in lines[1:]:
            m = _EDGE_RE.fullmatch(line.strip())
            if m is None:
                raise ValueError(f"bad record tree line: {line!r}")
            parent = _parse_seq(m.group(1))
            p, r, n = m.group(2), float(m.group(3)), int(m.group(4))
            child = parent + (p,)
            tree.nodes[child] = Node(visit_count=n)
            tree.nodes[parent].children[p] = child
            tree.edges[(parent, p)] = EdgeStat(r, n)
        return tree

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path, vocabulary=()):
        return cls.from_text(Path(path).read_text(), vocabulary)


_ROOT_RE = re.compile(r"<> \[n=(\d+)\]")
_EDGE_RE = re.compile(r"(\S+) -> (\S+) \[r=([^,]+), n=(\d+)\]")


def _fmt_seq(seq):
    return "|".join(seq) if seq else "<>"


def _parse_seq(text):
    return () if text == "<>" else tuple(text.split("|"))


def explain(tree, q_high, s, seq, rng, vocabulary=None, max_depth=1000, use_sequence=True):
    """What happened, the subtask the high level picks now, and the plan after it."""
    vocabulary = tuple(vocabulary or tree.vocabulary)
    seq = tuple(seq)
    current = select_subtask(q_high, s, seq if use_sequence else (), vocabulary, rng, achieved=seq)
    return Explanation(seq, current, tree.plan_bfs(seq, current, max_depth))
