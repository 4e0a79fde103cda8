"""Subtask-conditioned low-level policy: achievement rewards and Q_l updates.

Every environment transition is replayed once per vocabulary subtask, each
copy carrying that subtask's own 0/1 achievement reward, so Q_l learns to
reach every subtask from every transition it sees.
"""

from __future__ import annotations

from typing import NamedTuple

from ._validation import check_discount, check_learning_rate, check_probability
from .envs import ACTIONS


class LowExperience(NamedTuple):
    s: object
    a: str
    s_next: object
    r: int
    p: str
    done: bool


def subtask_reward(p, label_s, label_s_next) -> int:
    """1 when ``p`` is newly achieved on entering ``s_next``, else 0."""
    return 1 if (p == label_s_next and p != label_s) else 0


def generate_low_experiences(s, a, s_next, label_s, label_s_next, vocabulary):
    """One experience per subtask, in vocabulary order.

    The labels are those of the cells themselves, so the same transition
    always earns the same reward no matter what the episode achieved before.
    """
    out = []
    for p in vocabulary:
        r = 1 if (p == label_s_next and p != label_s) else 0
        out.append(LowExperience(s, a, s_next, r, p, r == 1))
    return out


def single_low_experience(s, a, s_next, label_s, label_s_next, p):
    r = subtask_reward(p, label_s, label_s_next)
    return [LowExperience(s, a, s_next, r, p, r == 1)]


def update_q_l(q_low, experiences, alpha, gamma, actions=ACTIONS) -> None:
    """Apply each experience once, in list order.

    Achieving experiences use the bare reward as target; all others bootstrap
    from the best action value at ``(s_next, p)``.
    """
    check_learning_rate(alpha, "alpha")
    check_discount(gamma, "gamma")
    apply_low_updates(q_low, experiences, alpha, gamma, actions)


def apply_low_updates(q_low, experiences, alpha, gamma, actions=ACTIONS) -> None:
    """``update_q_l`` without argument checks, for the training loops."""
    keep = 1.0 - alpha
    rows = q_low._rows
    for s, a, s_next, r, p, done in experiences:
        if done:
            y = r
        else:
            nxt = rows.get((s_next, p))
            if nxt is None:
                y = r
            else:
                y = r + gamma * max(nxt.get(b, 0.0) for b in actions)
        row = rows.get((s, p))
        if row is None:
            row = rows[(s, p)] = {}
        row[a] = keep * row.get(a, 0.0) + alpha * y


def select_action(q_low, s, p, epsilon, rng, actions=ACTIONS, tie_rng=None):
    """Epsilon-greedy over ``Q_l(s, p, .)``.

    ``rng`` drives exploration; greedy ties are broken with ``tie_rng``
    (defaults to ``rng``).
    """
    check_probability(epsilon, "epsilon")
    if rng.random() < epsilon:
        return actions[rng.randrange(len(actions))]
    return q_low.argmax((s, p), actions, rng if tie_rng is None else tie_rng)
