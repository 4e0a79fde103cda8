"""Achievement rewards, multi-experience generation and the BFS oracle."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alcs.envs import ACTIONS, GridPos, build_env, shortest_path_lengths
from alcs.lowlevel import (
    LowExperience,
    generate_low_experiences,
    select_action,
    single_low_experience,
    subtask_reward,
    update_q_l,
)
from alcs.qcore import QTable
from alcs.trainer import TrainConfig, train

VOCAB = ("c", "m", "o")
labels = st.one_of(st.none(), st.sampled_from(VOCAB))


def test_subtask_reward_cases():
    assert subtask_reward("c", None, "c") == 1
    assert subtask_reward("c", None, "m") == 0
    assert subtask_reward("c", "c", "c") == 0
    assert subtask_reward("c", None, None) == 0


def test_generate_examples():
    exps = generate_low_experiences("s", "up", "t", None, "c", VOCAB)
    assert [e.r for e in exps] == [1, 0, 0]
    assert [e.done for e in exps] == [True, False, False]
    assert [e.p for e in exps] == list(VOCAB)
    exps = generate_low_experiences("s", "up", "t", None, None, VOCAB)
    assert all(e.r == 0 and not e.done for e in exps)
    assert len(generate_low_experiences("s", "up", "t", "c", "o", ("c", "o"))) == 2


@settings(max_examples=200, deadline=None)
@given(labels, labels)
def test_count_invariant(label_s, label_next):
    exps = generate_low_experiences("s", "up", "t", label_s, label_next, VOCAB)
    assert len(exps) == len(VOCAB)
    assert sum(e.done for e in exps) <= 1
    assert sum(e.r for e in exps) == sum(e.done for e in exps)
    for e in exps:
        assert (e.r == 1) == e.done == (e.p == label_next and e.p != label_s)


def test_update_examples():
    q = QTable(3)
    update_q_l(q, [LowExperience("s", "up", "t", 1, "c", True)], 0.1, 0.9)
    assert q.get(("s", "c", "up")) == pytest.approx(0.1)
    q = QTable(3)
    update_q_l(q, [LowExperience("s", "up", "t", 0, "c", False)], 0.1, 0.9)
    assert q.get(("s", "c", "up")) == 0.0


def test_two_step_chain():
    q = QTable(3)
    update_q_l(q, [LowExperience("s1", "right", "s2", 1, "c", True)], 0.1, 0.9)
    update_q_l(q, [LowExperience("s0", "right", "s1", 0, "c", False)], 0.1, 0.9)
    assert q.get(("s0", "c", "right")) == pytest.approx(0.1 * 0.9 * 0.1)
    assert q.max_value(("s1", "c"), ACTIONS) == max(q.get(("s1", "c", a)) for a in ACTIONS)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(ACTIONS), st.integers(0, 3), labels, labels),
                min_size=1, max_size=40))
def test_batch_equals_sequential_singles(transitions):
    batch, seq = QTable(3), QTable(3)
    for s, a, s2, ls, ln in transitions:
        update_q_l(batch, generate_low_experiences(s, a, s2, ls, ln, VOCAB), 0.1, 0.9)
        for p in VOCAB:
            update_q_l(seq, single_low_experience(s, a, s2, ls, ln, p), 0.1, 0.9)
    assert dict(batch.items()) == dict(seq.items())
    assert all(0.0 <= v <= 1.0 for _, v in batch.items())


def test_select_action_greedy_and_uniform():
    q = QTable(3)
    q.td_set(("s", "c", "up"), 0.5, 1.0)
    rng = random.Random(0)
    assert all(select_action(q, "s", "c", 0.0, rng) == "up" for _ in range(50))
    counts = {a: 0 for a in ACTIONS}
    for _ in range(10000):
        counts[select_action(q, "s", "c", 1.0, rng)] += 1
    expected = 2500
    chi2 = sum((n - expected) ** 2 / expected for n in counts.values())
    assert chi2 < 16.27  # 3 dof, p = 0.001


def test_select_action_exploration_rate():
    q = QTable(3)
    q.td_set(("s", "c", "up"), 0.5, 1.0)
    rng = random.Random(3)
    draws = 10000
    # A random action is "up" a quarter of the time.
    not_up = sum(select_action(q, "s", "c", 0.2, rng) != "up" for _ in range(draws))
    assert abs(not_up / draws / 0.75 - 0.2) < 0.02


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bfs_oracle(single_spec, seed):
    """Greedy low level walks shortest paths to the subtask from every cell.

    Exploration is uniform so every cell gets visited within the budget.
    """
    q_low, _, _, _ = train(single_spec, TrainConfig(max_env_steps=10_000, epsilon=1.0, seed=seed, eval_every=10_000))
    goal = GridPos(3, 3)
    dist = shortest_path_lengths(single_spec.layout, goal)
    env = build_env(single_spec)
    rng = random.Random(0)
    for cell, d in dist.items():
        if cell == goal:
            continue
        env.reset()
        env._state = cell
        steps = 0
        while env.state != goal and steps < 50:
            env.step(q_low.argmax((env.state, "g"), ACTIONS, rng))
            steps += 1
        assert steps == d, f"from {cell}: {steps} steps, shortest is {d}"
