"""High-level composition policy over (state, achieved-subtask sequence).

High-level experiences are held back in ``e_temp`` until some subtask is
actually achieved; they are then credited to that achieved subtask, as if
the high level had chosen it all along, and moved to ``experience_h``.
Q_h is only updated once the episode ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from ._validation import check_discount, check_learning_rate


class HighExperience(NamedTuple):
    s: object
    seq: tuple
    p: str
    s_next: object
    seq_next: tuple
    r: float


@dataclass
class EpisodeBuffer:
    e_temp: list = field(default_factory=list)
    experience_h: list = field(default_factory=list)

    def clear(self):
        self.e_temp = []
        self.experience_h = []


def select_subtask(q_high, s, seq, vocabulary, rng, achieved=None):
    """Greedy subtask choice for ``(s, seq)``; no exploration at this level.

    Ties prefer subtasks not yet achieved this episode (``achieved`` defaults
    to the members of ``seq``): labels fire once per episode, so an achieved
    subtask can never be achieved again.
    """
    seq = tuple(seq)
    avoid = frozenset(seq if achieved is None else achieved)
    return q_high.argmax((s, seq), vocabulary, rng, avoid)


def extend_sequence(seq, label):
    if label is None:
        return tuple(seq)
    return tuple(seq) + (label,)


def record_step(buffer, s, seq, p_chosen, s_next, r, label, assumed_choice=True):
    """Log one environment step and return the achieved sequence after it.

    With ``assumed_choice`` off every step is stored with the subtask the
    high level actually chose and moved to ``experience_h`` at once.
    """
    seq = tuple(seq)
    seq_next = seq if label is None else seq + (label,)
    exp = HighExperience(s, seq, p_chosen, s_next, seq_next, r)
    if not assumed_choice:
        buffer.experience_h.append(exp)
        return seq_next
    buffer.e_temp.append(exp)
    if label is not None:
        buffer.experience_h.extend(e._replace(p=label) for e in buffer.e_temp)
        buffer.e_temp = []
    return seq_next


def finalize_episode(q_high, buffer, beta, gamma, vocabulary, use_sequence=True, on_update=None):
    """Chronological Q_h updates over ``experience_h``, then clear the buffer.

    The bootstrap is unconditional: terminal successors read whatever is
    stored, which is zero because nothing is ever updated from them.
    """
    check_learning_rate(beta, "beta")
    check_discount(gamma, "gamma")
    keep = 1.0 - beta
    rows = q_high._rows
    for s, seq, p, s_next, seq_next, r in buffer.experience_h:
        if not use_sequence:
            seq = seq_next = ()
        nxt = rows.get((s_next, seq_next))
        best = 0.0 if nxt is None else max(nxt.get(q, 0.0) for q in vocabulary)
        y = r + gamma * best
        row = rows.get((s, seq))
        if row is None:
            row = rows[(s, seq)] = {}
        row[p] = keep * row.get(p, 0.0) + beta * y
        if on_update is not None:
            on_update((s, seq, p), y)
    buffer.clear()
