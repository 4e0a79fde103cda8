"""Sparse tabular value store backing every Q function in the package.

Keys are tuples of fixed arity.  Internally a table is a two-level dict:
the key prefix (everything but the last component) maps to a row of
``{last_component: value}``, which keeps max/argmax over a candidate set to
one dict lookup per candidate.
"""

from __future__ import annotations

from pathlib import Path

from ._validation import UsageError, check_learning_rate
from .envs import GridPos


class QTable:
    """Map from ``arity``-tuples to floats, reading 0.0 for absent keys."""

    def __init__(self, arity: int):
        if arity < 1:
            raise UsageError("arity must be >= 1")
        self.arity = arity
        self._rows: dict = {}

    def _split(self, key):
        if len(key) != self.arity:
            raise UsageError(f"key {key!r} has arity {len(key)}, table expects {self.arity}")
        return tuple(key[:-1]), key[-1]

    def get(self, key) -> float:
        prefix, last = self._split(key)
        row = self._rows.get(prefix)
        if row is None:
            return 0.0
        return row.get(last, 0.0)

    def td_set(self, key, target: float, lr: float) -> None:
        """Move the stored value a fraction ``lr`` of the way to ``target``."""
        check_learning_rate(lr, "lr")
        prefix, last = self._split(key)
        row = self._rows.get(prefix)
        if row is None:
            row = self._rows[prefix] = {}
        row[last] = (1.0 - lr) * row.get(last, 0.0) + lr * target

    def max_value(self, prefix, candidates) -> float:
        if not candidates:
            raise UsageError("max over an empty candidate set")
        row = self._rows.get(tuple(prefix))
        if row is None:
            return 0.0
        return max(row.get(c, 0.0) for c in candidates)

    def argmax(self, prefix, candidates, rng, avoid=()):
        """A maximising candidate; ties are broken uniformly with ``rng``.

        Tied candidates in ``avoid`` lose the tie-break unless all ties are in it.
        """
        if not candidates:
            raise UsageError("argmax over an empty candidate set")
        return argmax_row(self._rows.get(tuple(prefix)), candidates, rng, avoid)[0]

    def row(self, prefix):
        """The live row dict for ``prefix`` (created on demand)."""
        prefix = tuple(prefix)
        row = self._rows.get(prefix)
        if row is None:
            row = self._rows[prefix] = {}
        return row

    def items(self):
        for prefix, row in self._rows.items():
            for last, value in row.items():
                yield prefix + (last,), value

    def __len__(self):
        return sum(len(r) for r in self._rows.values())

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return self.arity == other.arity and dict(self.items()) == dict(other.items())

    def copy(self):
        out = QTable(self.arity)
        out._rows = {k: dict(v) for k, v in self._rows.items()}
        return out


def argmax_row(row, candidates, rng, avoid=(), prefer=None):
    """``(choice, unique)`` for a raw row dict; ``unique`` is False when rng broke a tie.

    Among tied maximisers, ``prefer`` wins if it is one of them and not in
    ``avoid``; otherwise members of ``avoid`` are only drawn when every tied
    maximiser is in ``avoid``.
    """
    if row is None:
        ties = list(candidates)
    else:
        values = [row.get(c, 0.0) for c in candidates]
        best = max(values)
        ties = [c for c, v in zip(candidates, values) if v == best]
    if len(ties) == 1:
        return ties[0], True
    if prefer is not None and prefer in ties and prefer not in avoid:
        return prefer, True
    if avoid:
        ties = [c for c in ties if c not in avoid] or ties
        if len(ties) == 1:
            return ties[0], True
    return ties[rng.randrange(len(ties))], False


# Snapshot text format: one record per line, key parts and the value separated
# by tabs, sorted.  Part kinds: "pos" (x,y), "seq" (subtasks joined by "|",
# "<>" when empty) and "sym" (a bare string).

def _encode(kind, part):
    if kind == "pos":
        return f"{part[0]},{part[1]}"
    if kind == "seq":
        return "|".join(part) if part else "<>"
    return str(part)


def _decode(kind, text):
    if kind == "pos":
        return GridPos.parse(text)
    if kind == "seq":
        return () if text == "<>" else tuple(text.split("|"))
    return text


def dump_table(table: QTable, path, kinds) -> None:
    if len(kinds) != table.arity:
        raise UsageError("kinds must match the table arity")
    lines = []
    for key, value in table.items():
        parts = [_encode(k, p) for k, p in zip(kinds, key)]
        lines.append("\t".join(parts) + "\t" + repr(float(value)))
    lines.sort()
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_table(path, kinds) -> QTable:
    table = QTable(len(kinds))
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        *parts, value = line.split("\t")
        if len(parts) != len(kinds):
            raise UsageError(f"snapshot record has {len(parts)} key parts, expected {len(kinds)}")
        key = tuple(_decode(k, p) for k, p in zip(kinds, parts))
        table.row(key[:-1])[key[-1]] = float(value)
    return table
