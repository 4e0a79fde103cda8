"""The two-level training loop, greedy evaluation and the ``ALCS`` estimator."""

from __future__ import annotations

import csv
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
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
from .envs import ACTIONS, GridPos, LabeledGridEnv, TaskSpec, load_task
from .highlevel import EpisodeBuffer, finalize_episode, record_step
from .interpret import RecordTree, explain
from .lowlevel import apply_low_updates, generate_low_experiences, single_low_experience
from .qcore import QTable, argmax_row


@dataclass
class TrainConfig:
    episodes: int = 1_000_000
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.2
    step_cap: int | None = None
    seed: int = 0
    # Training stops once this many environment steps were taken (None: episodes only).
    max_env_steps: int | None = None
    eval_every: int = 1000
    eval_episodes: int = 20
    no_multi_experience: bool = False
    no_sequence: bool = False
    no_assumed_choice: bool = False

    def validate(self):
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


@dataclass
class RunLog:
    rows: list = field(default_factory=list)  # (env_steps, eval_return, episode)

    def add(self, env_steps, eval_return, episode):
        if self.rows and env_steps <= self.rows[-1][0]:
            raise UsageError("RunLog env_steps must be strictly increasing")
        self.rows.append((int(env_steps), float(eval_return), int(episode)))

    @property
    def env_steps(self):
        return [r[0] for r in self.rows]

    @property
    def returns(self):
        return [r[1] for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["env_steps", "eval_return", "episode"])
            for steps, ret, ep in self.rows:
                writer.writerow([steps, repr(ret), ep])

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["env_steps", "eval_return", "episode"]:
                raise UsageError(f"{path}: not a run log CSV")
            for row in reader:
                log.add(int(row["env_steps"]), float(row["eval_return"]), int(row["episode"]))
        return log


def make_streams(seed, n=4):
    """Independent ``random.Random`` generators split from one integer seed.

    Stream order: action exploration, low-level ties, high-level ties, evaluation.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [random.Random(int(c.generate_state(1)[0])) for c in children]


def as_env(env, step_cap=None):
    """A fresh environment instance from a task name, TaskSpec or environment."""
    if isinstance(env, LabeledGridEnv):
        spec, seed = env.spec, env.seed
    elif isinstance(env, TaskSpec):
        spec, seed = env, 0
    else:
        spec, seed = load_task(env), 0
    return LabeledGridEnv(spec.with_step_cap(step_cap), seed)


class GreedyPolicy:
    """Frozen greedy policy used for evaluation.

    ``act(s, seq) -> (action, unique)`` where ``unique`` is False whenever a
    random tie-break decided the action.  ``memory`` is whatever besides
    ``(s, seq)`` the next decision depends on.  Set ``random_reset`` when
    ``reset`` itself draws randomness.
    """

    memory = None
    random_reset = False

    def reset(self):
        pass

    def act(self, s, seq):
        raise NotImplementedError


class ALCSPolicy(GreedyPolicy):
    """Greedy two-level ALCS policy with the training-time subtask tie-break."""

    def __init__(self, q_low, q_high, vocabulary, rng, use_sequence=True, actions=ACTIONS):
        self.hrows, self.lrows = q_high._rows, q_low._rows
        self.vocabulary, self.actions = tuple(vocabulary), actions
        self.rng, self.use_sequence = rng, use_sequence
        self.memory = None

    def reset(self):
        self.memory = None

    def act(self, s, seq):
        key = (s, seq if self.use_sequence else ())
        p, u1 = argmax_row(self.hrows.get(key), self.vocabulary, self.rng, seq, self.memory)
        self.memory = p
        a, u2 = argmax_row(self.lrows.get((s, p)), self.actions, self.rng)
        return a, u1 and u2


def greedy_mean_return(env, policy, episodes):
    """Mean undiscounted return of ``episodes`` runs of a frozen greedy policy.

    Two exact shortcuts keep this cheap: an episode that never broke a tie
    will replay identically, so it stands in for all remaining episodes; and
    once a tie-free stretch revisits a full decision state, the episode is
    stuck in a cycle that achieves nothing new (rewards only arrive with a
    new label), so it stops there.
    """
    total = 0.0
    for i in range(episodes):
        s = env.reset()
        policy.reset()
        seq = ()
        ret = 0.0
        seen = {}
        last_random = -1
        t = 0
        while True:
            key = (s, seq, env.progress, policy.memory)
            a, unique = policy.act(s, seq)
            if not unique:
                last_random = t
            else:
                prev = seen.get(key)
                if prev is not None and prev > last_random:
                    break
                seen[key] = t
            out = env.step(a)
            ret += out.reward
            if out.raw_label is not None:
                seq = seq + (out.raw_label,)
            s = out.next_state
            t += 1
            if out.terminal:
                break
        if last_random < 0 and not policy.random_reset:
            total += ret * (episodes - i)
            break
        total += ret
    return total / episodes


def evaluate(env, q_low, q_high, episodes, rng, use_sequence=True):
    """Mean greedy return (no exploration, no learning); ties use ``rng``."""
    check_count(episodes, "episodes", 1)
    policy = ALCSPolicy(q_low, q_high, tuple(env.vocabulary()), rng, use_sequence)
    return greedy_mean_return(env, policy, episodes)


def train(env, config: TrainConfig, on_step=None, on_high_update=None):
    """Run the two-level learning loop.

    Returns ``(q_low, q_high, tree, log)``.  ``on_step`` receives one dict
    per environment step; ``on_high_update`` receives ``(key, target)`` for
    every Q_h write.
    """
    config.validate()
    env = as_env(env, config.step_cap)
    eval_env = LabeledGridEnv(env.spec, env.seed)
    vocabulary = tuple(env.vocabulary())
    actions = ACTIONS
    explore_rng, low_rng, high_rng, eval_rng = make_streams(config.seed)

    q_low, q_high = QTable(3), QTable(3)
    tree = RecordTree(vocabulary)
    log = RunLog()
    buffer = EpisodeBuffer()

    alpha, beta, gamma, eps = config.alpha, config.beta, config.gamma, config.epsilon
    use_seq = not config.no_sequence
    multi = not config.no_multi_experience
    assumed = not config.no_assumed_choice
    budget = config.max_env_steps
    eval_every, eval_episodes = config.eval_every, config.eval_episodes
    hrows, lrows = q_high._rows, q_low._rows
    cells = env.spec.layout.label_cells
    rand, randrange = explore_rng.random, explore_rng.randrange
    n_actions = len(actions)

    steps = 0
    if budget == 0:
        return q_low, q_high, tree, log
    for episode in range(config.episodes):
        s = env.reset()
        seq = ()
        tree.visit_root()
        buffer.clear()
        p = None
        while True:
            # Ties keep the previous subtask while it is still open, then prefer unachieved ones.
            p, _ = argmax_row(hrows.get((s, seq if use_seq else ())), vocabulary, high_rng, seq, p)
            if rand() < eps:
                a = actions[randrange(n_actions)]
            else:
                a, _ = argmax_row(lrows.get((s, p)), actions, low_rng)
            out = env.step(a)
            s_next, r, label = out.next_state, out.reward, out.raw_label
            # Low-level rewards read the cells' own labels, not the once-per-episode stream.
            cell_s, cell_next = cells.get(s), cells.get(s_next)
            if multi:
                exps = generate_low_experiences(s, a, s_next, cell_s, cell_next, vocabulary)
            else:
                exps = single_low_experience(s, a, s_next, cell_s, cell_next, p)
            apply_low_updates(q_low, exps, alpha, gamma, actions)
            if label is not None:
                tree.record_achievement(seq, label, r)
            seq_next = record_step(buffer, s, seq, p, s_next, r, label, assumed)
            if on_step is not None:
                on_step({"episode": episode, "t": env.t - 1, "s": s, "seq": seq, "p": p, "a": a,
                         "s_next": s_next, "r": r, "label": label, "seq_next": seq_next,
                         "terminal": out.terminal})
            steps += 1
            if steps % eval_every == 0:
                log.add(steps, evaluate(eval_env, q_low, q_high, eval_episodes, eval_rng, use_seq), episode)
            if budget is not None and steps >= budget:
                return q_low, q_high, tree, log
            if out.terminal:
                finalize_episode(q_high, buffer, beta, gamma, vocabulary, use_seq, on_high_update)
                break
            s, seq = s_next, seq_next
    return q_low, q_high, tree, log


class ALCS(BaseEstimator):
    """Two-level subtask-composition learner with a scikit-learn style surface.

    ``fit`` takes an environment (or a task name / ``TaskSpec``) instead of
    arrays.  After fitting, ``q_low_``, ``q_high_``, ``tree_`` and ``log_``
    hold the learned tables, the record tree and the evaluation curve.
    """

    def __init__(self, episodes=1_000_000, max_env_steps=None, alpha=0.1, beta=0.1, gamma=0.9,
                 epsilon=0.2, step_cap=None, seed=0, eval_every=1000, eval_episodes=20,
                 no_multi_experience=False, no_sequence=False, no_assumed_choice=False):
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
        self.no_multi_experience = no_multi_experience
        self.no_sequence = no_sequence
        self.no_assumed_choice = no_assumed_choice

    def config(self):
        return TrainConfig.from_dict(self.get_params())

    def fit(self, env, y=None):
        config = self.config().validate()
        self.env_ = as_env(env, config.step_cap)
        self.vocabulary_ = tuple(self.env_.vocabulary())
        self.q_low_, self.q_high_, self.tree_, self.log_ = train(self.env_, config)
        return self

    def _rng(self, seed=None):
        return random.Random(self.seed if seed is None else seed)

    def predict(self, X, seq=(), seed=None):
        """Greedy subtask choice for each cell in ``X`` given achieved ``seq``."""
        check_is_fitted(self, "q_high_")
        rng = self._rng(seed)
        key_seq = () if self.no_sequence else tuple(seq)
        cells = [GridPos(int(x), int(y)) for x, y in np.asarray(X).reshape(-1, 2)]
        return np.array([self.q_high_.argmax((c, key_seq), self.vocabulary_, rng, tuple(seq)) for c in cells],
                        dtype=object)

    def explain(self, state, seq=(), seed=None):
        check_is_fitted(self, "tree_")
        return explain(self.tree_, self.q_high_, GridPos(*state), tuple(seq), self._rng(seed),
                       self.vocabulary_, self.env_.step_cap, not self.no_sequence)

    def score(self, env=None, episodes=None, seed=None):
        """Mean greedy episode return."""
        check_is_fitted(self, "q_high_")
        env = self.env_ if env is None else as_env(env, self.step_cap)
        env = LabeledGridEnv(env.spec, env.seed)
        return evaluate(env, self.q_low_, self.q_high_, episodes or self.eval_episodes,
                        self._rng(seed), not self.no_sequence)
