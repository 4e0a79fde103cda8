"""Comparison methods sharing the environment and Q-table machinery.

* ``flat_q``: one-step Q-learning on the bare cell state; it only ever sees
  rewards, never labels.
* ``hrl``: options, one per subtask.  The high level decides at option
  boundaries (own subtask achieved, or ``option_timeout`` steps) with an
  SMDP update; options share one subtask-reward low level.
* ``interrupting``: the high level re-decides every step over Markov keys
  ``(s, option)``.  It is the ALCS loop with both the sequence and the
  assumed-choice relabel switched off.
* ``her``: a goal-conditioned Q over ``(s, goal, a)`` with one behaviour goal
  per episode and achieved-goal relabeling.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, fields

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    UsageError,
    check_count,
    check_discount,
    check_learning_rate,
    check_optional_count,
    check_probability,
)
from .envs import ACTIONS, LabeledGridEnv
from .lowlevel import apply_low_updates, generate_low_experiences, single_low_experience
from .qcore import QTable, argmax_row
from .trainer import (
    GreedyPolicy,
    RunLog,
    TrainConfig,
    as_env,
    greedy_mean_return,
    make_streams,
    train,
)

METHODS = ("flat_q", "hrl", "interrupting", "her")


@dataclass
class BaselineConfig:
    method: str = "flat_q"
    episodes: int = 1_000_000
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.2
    step_cap: int | None = None
    seed: int = 0
    max_env_steps: int | None = None
    eval_every: int = 1000
    eval_episodes: int = 20
    option_timeout: int = 100
    relabel_count: int = 1

    def validate(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown baseline method {self.method!r}; expected one of {METHODS}")
        check_count(self.episodes, "episodes", 0)
        check_learning_rate(self.alpha, "alpha")
        check_learning_rate(self.beta, "beta")
        check_discount(self.gamma, "gamma")
        check_probability(self.epsilon, "epsilon")
        check_optional_count(self.step_cap, "step_cap")
        check_optional_count(self.max_env_steps, "max_env_steps", 0)
        check_count(self.eval_every, "eval_every", 1)
        check_count(self.eval_episodes, "eval_episodes", 1)
        check_count(self.seed, "seed", 0)
        check_count(self.option_timeout, "option_timeout", 1)
        check_count(self.relabel_count, "relabel_count", 1)
        return self

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


class _RewardView:
    """What flat Q-learning may see of an environment: states and rewards."""

    def __init__(self, env):
        self._env = env

    def reset(self):
        return self._env.reset()

    def step(self, action):
        out = self._env.step(action)
        return out.next_state, out.reward, out.terminal, out.truncated


class _Clock:
    """Shared step budget and evaluation schedule."""

    def __init__(self, config, evaluate):
        self.steps = 0
        self.budget = config.max_env_steps
        self.eval_every = config.eval_every
        self.evaluate = evaluate
        self.log = RunLog()

    def exhausted(self):
        return self.budget is not None and self.steps >= self.budget

    def tick(self, episode):
        """Count one environment step; True once the budget is used up."""
        self.steps += 1
        if self.steps % self.eval_every == 0:
            self.log.add(self.steps, self.evaluate(), episode)
        return self.exhausted()


# Greedy evaluation policies ---------------------------------------------------


class FlatPolicy(GreedyPolicy):
    def __init__(self, q, rng, actions=ACTIONS):
        self.rows, self.rng, self.actions = q._rows, rng, actions

    def act(self, s, seq):
        return argmax_row(self.rows.get((s,)), self.actions, self.rng)


class OptionPolicy(GreedyPolicy):
    """Greedy options: re-decide when the option's subtask fires or it times out."""

    def __init__(self, q_high, q_low, vocabulary, rng, timeout, actions=ACTIONS):
        self.hrows, self.lrows = q_high._rows, q_low._rows
        self.vocabulary, self.rng, self.timeout, self.actions = tuple(vocabulary), rng, timeout, actions
        self.memory = None

    def reset(self):
        self.memory = None
        self._seen = 0

    def act(self, s, seq):
        unique = True
        if self.memory is not None:
            option, age = self.memory
            if len(seq) > self._seen and seq[-1] == option or age >= self.timeout:
                self.memory = None
        self._seen = len(seq)
        if self.memory is None:
            option, unique = argmax_row(self.hrows.get((s,)), self.vocabulary, self.rng)
            self.memory = (option, 0)
        option, age = self.memory
        self.memory = (option, age + 1)
        a, u2 = argmax_row(self.lrows.get((s, option)), self.actions, self.rng)
        return a, unique and u2


class GoalPolicy(GreedyPolicy):
    """Greedy goal-conditioned policy with a uniformly drawn goal per episode."""

    random_reset = True

    def __init__(self, q, vocabulary, rng, actions=ACTIONS):
        self.rows, self.vocabulary, self.rng, self.actions = q._rows, tuple(vocabulary), rng, actions
        self.memory = None

    def reset(self):
        self.memory = self.vocabulary[self.rng.randrange(len(self.vocabulary))]

    def act(self, s, seq):
        return argmax_row(self.rows.get((s, self.memory)), self.actions, self.rng)


# Training loops ---------------------------------------------------------------


def _setup(env, config):
    config.validate()
    env = as_env(env, config.step_cap)
    eval_env = LabeledGridEnv(env.spec, env.seed)
    return env, eval_env, make_streams(config.seed)


def train_flat_q(env, config: BaselineConfig):
    """Tabular Q-learning over ``(cell, action)``.  Returns ``(q, log)``."""
    env, eval_env, (explore_rng, tie_rng, _, eval_rng) = _setup(env, config)
    view = _RewardView(env)
    q = QTable(2)
    rows = q._rows
    alpha, gamma, eps = config.alpha, config.gamma, config.epsilon
    policy = FlatPolicy(q, eval_rng)
    clock = _Clock(config, lambda: greedy_mean_return(eval_env, policy, config.eval_episodes))
    if clock.exhausted():
        return q, clock.log
    for episode in range(config.episodes):
        s = view.reset()
        while True:
            if explore_rng.random() < eps:
                a = ACTIONS[explore_rng.randrange(len(ACTIONS))]
            else:
                a, _ = argmax_row(rows.get((s,)), ACTIONS, tie_rng)
            s_next, r, terminal, truncated = view.step(a)
            if terminal and not truncated:
                y = r
            else:
                nxt = rows.get((s_next,))
                y = r + gamma * (0.0 if nxt is None else max(nxt.get(b, 0.0) for b in ACTIONS))
            row = rows.get((s,))
            if row is None:
                row = rows[(s,)] = {}
            row[a] = (1.0 - alpha) * row.get(a, 0.0) + alpha * y
            if clock.tick(episode):
                return q, clock.log
            if terminal:
                break
            s = s_next
    return q, clock.log


def train_hrl(env, config: BaselineConfig):
    """Options over subtasks with SMDP high-level updates.

    Returns ``(q_high, q_low, log)``; ``q_high`` is keyed ``(s, option)``.
    """
    env, eval_env, (explore_rng, low_rng, high_rng, eval_rng) = _setup(env, config)
    vocabulary = tuple(env.vocabulary())
    cells = env.spec.layout.label_cells
    q_high, q_low = QTable(2), QTable(3)
    hrows, lrows = q_high._rows, q_low._rows
    alpha, beta, gamma, eps = config.alpha, config.beta, config.gamma, config.epsilon
    timeout = config.option_timeout
    policy = OptionPolicy(q_high, q_low, vocabulary, eval_rng, timeout)
    clock = _Clock(config, lambda: greedy_mean_return(eval_env, policy, config.eval_episodes))
    if clock.exhausted():
        return q_high, q_low, clock.log

    def choose(s):
        if explore_rng.random() < eps:
            return vocabulary[explore_rng.randrange(len(vocabulary))]
        return argmax_row(hrows.get((s,)), vocabulary, high_rng)[0]

    def smdp_update(s0, option, ret, k, s_end, terminal):
        y = ret
        if not terminal:
            nxt = hrows.get((s_end,))
            y += gamma ** k * (0.0 if nxt is None else max(nxt.get(o, 0.0) for o in vocabulary))
        row = hrows.get((s0,))
        if row is None:
            row = hrows[(s0,)] = {}
        row[option] = (1.0 - beta) * row.get(option, 0.0) + beta * y

    for episode in range(config.episodes):
        s = env.reset()
        option = choose(s)
        s0, ret, k = s, 0.0, 0
        while True:
            if explore_rng.random() < eps:
                a = ACTIONS[explore_rng.randrange(len(ACTIONS))]
            else:
                a, _ = argmax_row(lrows.get((s, option)), ACTIONS, low_rng)
            out = env.step(a)
            s_next = out.next_state
            apply_low_updates(q_low, generate_low_experiences(
                s, a, s_next, cells.get(s), cells.get(s_next), vocabulary), alpha, gamma)
            ret += gamma ** k * out.reward
            k += 1
            ended = out.raw_label == option or k >= timeout or out.terminal
            if ended:
                smdp_update(s0, option, ret, k, s_next, out.terminal and not out.truncated)
            if clock.tick(episode):
                return q_high, q_low, clock.log
            if out.terminal:
                break
            s = s_next
            if ended:
                option = choose(s)
                s0, ret, k = s, 0.0, 0
    return q_high, q_low, clock.log


def interrupting_config(config: BaselineConfig) -> TrainConfig:
    """The ALCS configuration that interrupting options runs."""
    return TrainConfig(
        episodes=config.episodes, alpha=config.alpha, beta=config.beta, gamma=config.gamma,
        epsilon=config.epsilon, step_cap=config.step_cap, seed=config.seed,
        max_env_steps=config.max_env_steps, eval_every=config.eval_every,
        eval_episodes=config.eval_episodes, no_sequence=True, no_assumed_choice=True,
    )


def train_interrupting(env, config: BaselineConfig, on_high_update=None):
    """Per-step option choice over Markov keys.  Returns ``(q_high, q_low, log)``."""
    config.validate()
    q_low, q_alcs, _, log = train(env, interrupting_config(config), on_high_update=on_high_update)
    q_high = QTable(2)
    for (s, _seq, p), value in q_alcs.items():
        q_high.row((s,))[p] = value
    return q_high, q_low, log


def relabel_history(history, goal, k_max, cells):
    """Experiences replaying earlier steps with ``goal``; bumps each step's relabel count.

    ``history`` holds ``[s, a, s_next, times_relabeled]`` items; steps already
    relabeled ``k_max`` times are skipped.
    """
    out = []
    for item in history:
        if item[3] < k_max:
            item[3] += 1
            s, a, s_next = item[0], item[1], item[2]
            out.extend(single_low_experience(s, a, s_next, cells.get(s), cells.get(s_next), goal))
    return out


def train_her(env, config: BaselineConfig):
    """Goal-conditioned Q-learning with achieved-goal relabeling.

    Every step is replayed for the behaviour goal as it happens.  When a
    label fires, each earlier step of the episode that has been relabeled
    fewer than ``relabel_count`` times is replayed once more with that label
    as its goal (the "future" strategy).  Returns ``(q, log)``.
    """
    env, eval_env, (explore_rng, low_rng, goal_rng, eval_rng) = _setup(env, config)
    vocabulary = tuple(env.vocabulary())
    cells = env.spec.layout.label_cells
    q = QTable(3)
    rows = q._rows
    alpha, gamma, eps, k_max = config.alpha, config.gamma, config.epsilon, config.relabel_count
    policy = GoalPolicy(q, vocabulary, eval_rng)
    clock = _Clock(config, lambda: greedy_mean_return(eval_env, policy, config.eval_episodes))
    if clock.exhausted():
        return q, clock.log
    for episode in range(config.episodes):
        s = env.reset()
        goal = vocabulary[goal_rng.randrange(len(vocabulary))]
        history = []  # [s, a, s_next, times relabeled]
        while True:
            if explore_rng.random() < eps:
                a = ACTIONS[explore_rng.randrange(len(ACTIONS))]
            else:
                a, _ = argmax_row(rows.get((s, goal)), ACTIONS, low_rng)
            out = env.step(a)
            s_next = out.next_state
            apply_low_updates(q, single_low_experience(
                s, a, s_next, cells.get(s), cells.get(s_next), goal), alpha, gamma)
            history.append([s, a, s_next, 0])
            achieved = out.raw_label
            if achieved is not None and achieved != goal:
                apply_low_updates(q, relabel_history(history, achieved, k_max, cells), alpha, gamma)
            if clock.tick(episode):
                return q, clock.log
            if out.terminal:
                break
            s = s_next
    return q, clock.log


def run_baseline(env, config: BaselineConfig):
    """Dispatch on ``config.method``; returns ``(tables, log)``.

    ``tables`` maps a snapshot name to ``(QTable, key kinds)``.
    """
    config.validate()
    if config.method == "flat_q":
        q, log = train_flat_q(env, config)
        return {"q": (q, ("pos", "sym"))}, log
    if config.method == "hrl":
        qh, ql, log = train_hrl(env, config)
        return {"q_high": (qh, ("pos", "sym")), "q_low": (ql, ("pos", "sym", "sym"))}, log
    if config.method == "interrupting":
        qh, ql, log = train_interrupting(env, config)
        return {"q_high": (qh, ("pos", "sym")), "q_low": (ql, ("pos", "sym", "sym"))}, log
    q, log = train_her(env, config)
    return {"q": (q, ("pos", "sym", "sym"))}, log


class Baseline(BaseEstimator):
    """Estimator wrapper around the four comparison methods."""

    def __init__(self, method="flat_q", episodes=1_000_000, max_env_steps=None, alpha=0.1, beta=0.1,
                 gamma=0.9, epsilon=0.2, step_cap=None, seed=0, eval_every=1000, eval_episodes=20,
                 option_timeout=100, relabel_count=1):
        self.method = method
        self.episodes = episodes
        self.max_env_steps = max_env_steps
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.epsilon = epsilon
        self.step_cap = step_cap
        self.seed = seed
        self.eval_every = eval_every
        self.eval_episodes = eval_episodes
        self.option_timeout = option_timeout
        self.relabel_count = relabel_count

    def config(self):
        return BaselineConfig.from_dict(self.get_params())

    def fit(self, env, y=None):
        config = self.config().validate()
        self.env_ = as_env(env, config.step_cap)
        self.tables_, self.log_ = run_baseline(self.env_, config)
        return self

    def policy(self, rng):
        check_is_fitted(self, "tables_")
        vocabulary = tuple(self.env_.vocabulary())
        t = self.tables_
        if self.method == "flat_q":
            return FlatPolicy(t["q"][0], rng)
        if self.method == "her":
            return GoalPolicy(t["q"][0], vocabulary, rng)
        timeout = self.option_timeout if self.method == "hrl" else 1
        return OptionPolicy(t["q_high"][0], t["q_low"][0], vocabulary, rng, timeout)

    def score(self, env=None, episodes=None, seed=None):
        """Mean greedy episode return."""
        env = self.env_ if env is None else as_env(env, self.step_cap)
        env = LabeledGridEnv(env.spec, env.seed)
        rng = random.Random(self.seed if seed is None else seed)
        return greedy_mean_return(env, self.policy(rng), episodes or self.eval_episodes)
