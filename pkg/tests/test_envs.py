"""Gridworld dynamics, labeling and the shipped task files."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alcs.envs import ACTIONS, GridPos, Layout, build_env, list_tasks, load_task, parse_task, shortest_path_lengths
from alcs._validation import LayoutError, UsageError


def walk(env, path):
    """Step along a list of cells, each adjacent to the previous one."""
    outs = []
    for nxt in path:
        s = env.state
        action = next(a for a, c in env.layout.neighbours(s).items() if c == nxt)
        outs.append(env.step(action))
    return outs


def path_to(layout, src, dst):
    """Shortest path that steps on no label cell other than ``dst``."""
    blocked = set(layout.walls) | (set(layout.label_cells) - {dst})
    detour = Layout(layout.width, layout.height, frozenset(blocked), dst, {})
    dist = shortest_path_lengths(detour, dst)
    cells, cur = [], GridPos(*src)
    while cur != dst:
        cur = min(layout.neighbours(cur).values(), key=lambda c: dist.get(c, 10**9))
        cells.append(cur)
    return cells


def cell_of(spec, name):
    return next(c for c, p in spec.layout.label_cells.items() if p == name)


def test_reset_puts_agent_on_start():
    env = build_env("Coffee")
    assert env.reset() == env.layout.start
    assert env.reset() == env.layout.start
    assert env.achieved == () and env.t == 0
    assert env.label(env.state) is None


def test_vocabularies():
    assert build_env("Coffee").vocabulary() == ["c", "o"]
    assert build_env("CoffeeMail").vocabulary() == ["c", "m", "o"]
    assert build_env("Gem").vocabulary() == ["wood", "workbench", "iron", "toolshed", "axe"]
    assert sorted(set(load_task("Coffee").layout.label_cells.values())) == ["c", "o"]


def test_all_tasks_load():
    assert list_tasks() == ["Coffee", "CoffeeMail", "Collecting", "Bonus", "Plant", "Bridge", "Bed", "Gem"]
    for name in list_tasks():
        spec = load_task(name)
        assert spec.step_cap == (1000 if spec.domain == "officeworld" else 2000)


def test_walled_off_label_is_rejected():
    text = """
name: Bad
vocabulary: [c]
legend: {c: c}
rule: {kind: precedence, final: c}
grid: |
  S.#.
  ..#c
"""
    with pytest.raises(LayoutError, match="unreachable label cell"):
        parse_task(text)


def test_start_on_wall_and_missing_subtask_rejected():
    with pytest.raises(LayoutError):
        parse_task("name: X\nvocabulary: [c, m]\nlegend: {c: c}\nrule: {kind: precedence, final: c}\ngrid: |\n  S.c\n")


def test_coffee_rewards():
    spec = load_task("Coffee")
    env = build_env(spec)
    env.reset()
    c, o = cell_of(spec, "c"), cell_of(spec, "o")
    outs = walk(env, path_to(spec.layout, env.state, c))
    assert outs[-1].raw_label == "c" and outs[-1].reward == 0 and not outs[-1].terminal
    outs = walk(env, path_to(spec.layout, env.state, o))
    assert outs[-1].raw_label == "o" and outs[-1].reward == 1 and outs[-1].terminal
    assert all(x.reward == 0 for x in outs[:-1])


def test_office_first_spends_the_label():
    spec = load_task("Coffee")
    env = build_env(spec)
    env.reset()
    c, o = cell_of(spec, "c"), cell_of(spec, "o")
    outs = walk(env, path_to(spec.layout, env.state, o))
    assert outs[-1].raw_label == "o" and outs[-1].reward == 0 and not outs[-1].terminal
    walk(env, path_to(spec.layout, env.state, c))
    outs = walk(env, path_to(spec.layout, env.state, o))
    assert outs[-1].raw_label is None and outs[-1].reward == 0


def test_bonus_pays_nine_with_all_packages():
    spec = load_task("Bonus")
    env = build_env(spec)
    env.reset()
    for p in "ABCD":
        walk(env, path_to(spec.layout, env.state, cell_of(spec, p)))
    out = walk(env, path_to(spec.layout, env.state, cell_of(spec, "o")))[-1]
    assert out.reward == 9 and out.terminal


def test_bonus_partial_collection_ends_episode():
    spec = load_task("Bonus")
    env = build_env(spec)
    env.reset()
    walk(env, path_to(spec.layout, env.state, cell_of(spec, "A")))
    out = walk(env, path_to(spec.layout, env.state, cell_of(spec, "o")))[-1]
    assert out.reward == 1 and out.terminal


def test_label_dedup(tiny_spec):
    env = build_env(tiny_spec)
    env.reset()
    c = GridPos(2, 0)
    assert env.label(c) == "c"
    walk(env, [GridPos(1, 0), c])
    assert env.label(c) is None
    assert env.label(GridPos(1, 1)) is None
    out = walk(env, [GridPos(1, 0), c])[-1]
    assert out.raw_label is None
    with pytest.raises(UsageError):
        env.label(GridPos(7, 7))


def test_step_errors(tiny_spec):
    env = build_env(tiny_spec)
    with pytest.raises(UsageError):
        env.step("up")
    env.reset()
    with pytest.raises(UsageError):
        env.step("jump")


def test_wall_bump_consumes_a_step(tiny_spec):
    env = build_env(tiny_spec)
    env.reset()
    out = env.step("up")
    assert out.next_state == env.layout.start and env.t == 1


def test_step_cap_truncates(tiny_spec):
    env = build_env(tiny_spec.with_step_cap(3))
    env.reset()
    outs = [env.step("up") for _ in range(3)]
    assert [o.terminal for o in outs] == [False, False, True]
    assert outs[-1].truncated and outs[-1].reward == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), task=st.sampled_from(["Coffee", "CoffeeMail", "Bonus", "Gem"]))
def test_replay_and_label_invariants(seed, task):
    rng = random.Random(seed)
    spec = load_task(task).with_step_cap(300)
    actions = [rng.choice(ACTIONS) for _ in range(300)]
    runs = []
    for _ in range(2):
        env = build_env(spec, seed)
        env.reset()
        outs = []
        for a in actions:
            outs.append(env.step(a))
            if outs[-1].terminal:
                break
        runs.append(outs)
    assert runs[0] == runs[1]
    labels = [o.raw_label for o in runs[0] if o.raw_label is not None]
    assert len(labels) == len(set(labels))
    total = sum(o.reward for o in runs[0])
    rewarding = [o for o in runs[0] if o.reward]
    assert len(rewarding) <= 1 and all(o.terminal for o in rewarding)
    if task == "Bonus":
        assert total in {0, 1, 2, 3, 4, 9}
    else:
        assert total in {0, 1}


def test_every_label_reachable():
    for name in list_tasks():
        spec = load_task(name)
        reach = spec.layout.reachable()
        assert all(c in reach for c in spec.layout.label_cells)
