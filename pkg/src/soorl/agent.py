"""The exploring agent: model updates, a grid value function and per-step lookahead.

At the start of every episode the agent fits a value function over a coarse
grid of agent positions by value iteration on its replay buffer (with a
count bonus), then plays the episode choosing each macro action by tree
search in its learned object models, bootstrapping leaves with that value
function.  Families that failed model selection grow their history between
episodes.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .macros import MacroAction
from .models import Displacement, FEATURE_SETS, ModelFamily, ObjectTransition
from .oomdp import FactoredState, ObjectState
from .planning import PlannerConfig, strategic_explore
from .worldmodel import ModelPosterior, ModelSet, ModelSpec, ObjectWorldModel, PlanState, StepResult

logger = logging.getLogger(__name__)

TERMINAL = -1


def exploration_bonus(n: int, beta: float) -> float:
    if n < 0:
        raise ValueError("visit count must be non-negative")
    return beta * max(n, 1) ** -0.5


@dataclass(frozen=True)
class TransitionRecord:
    state: FactoredState
    action: int
    next_state: FactoredState
    reward: float
    done: bool
    episode: int


class ReplayBuffer:
    """Append-only transitions with episode boundaries."""

    def __init__(self) -> None:
        self.records: list[TransitionRecord] = []
        self.episode_starts: list[int] = []

    def start_episode(self) -> int:
        self.episode_starts.append(len(self.records))
        return len(self.episode_starts) - 1

    def append(self, record: TransitionRecord) -> None:
        if not self.episode_starts or record.episode != len(self.episode_starts) - 1:
            raise ValueError("records must belong to the current episode")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def episodes(self) -> list[list[TransitionRecord]]:
        bounds = self.episode_starts + [len(self.records)]
        return [self.records[a:b] for a, b in zip(bounds, bounds[1:])]


class GridValueFunction:
    """Value iteration over an N x M grid of agent positions.

    Cell-level transitions and rewards are tallied from the replay buffer.
    A (cell, action) pair without data is closed as a self-loop whose reward
    is the cell's bonus, so unexplored regions keep optimistic value.
    """

    def __init__(
        self,
        bounds: tuple,
        n_actions: int,
        grid: tuple = (10, 8),
        beta: float = 1.0,
        gamma: float = 0.99,
        tol: float = 1e-6,
        max_sweeps: int = 10_000,
    ) -> None:
        self.x0, self.y0, self.width, self.height = bounds
        self.grid_n, self.grid_m = grid
        if self.grid_n < 1 or self.grid_m < 1:
            raise ValueError("grid dimensions must be positive")
        self.n_actions = n_actions
        self.beta = beta
        self.gamma = gamma
        self.tol = tol
        self.max_sweeps = max_sweeps
        n_cells = self.grid_n * self.grid_m
        self.visits = np.zeros(n_cells, dtype=np.int64)
        self.trans: dict[tuple, Counter] = {}
        self.reward_sum: dict[tuple, float] = {}
        self.values = np.zeros(n_cells)
        self.sweep_deltas: list[float] = []

    @property
    def n_cells(self) -> int:
        return self.grid_n * self.grid_m

    def cell(self, xy: tuple) -> int:
        x, y = xy
        i = (x - self.x0) * self.grid_n // self.width
        j = (y - self.y0) * self.grid_m // self.height
        i = min(max(i, 0), self.grid_n - 1)
        j = min(max(j, 0), self.grid_m - 1)
        return j * self.grid_n + i

    def visit_count(self, xy: tuple) -> int:
        return int(self.visits[self.cell(xy)])

    def observe(self, xy: tuple, action: int, next_xy: Optional[tuple], reward: float, done: bool) -> None:
        c = self.cell(xy)
        self.visits[c] += 1
        nxt = TERMINAL if done or next_xy is None else self.cell(next_xy)
        self.trans.setdefault((c, action), Counter())[nxt] += 1
        self.reward_sum[(c, action)] = self.reward_sum.get((c, action), 0.0) + reward

    def bonus(self) -> np.ndarray:
        return self.beta * np.maximum(self.visits, 1) ** -0.5

    def train(self) -> np.ndarray:
        n_c, n_a = self.n_cells, self.n_actions
        P = np.zeros((n_c, n_a, n_c))
        R = np.zeros((n_c, n_a))
        bonus = self.bonus()
        for c in range(n_c):
            for a in range(n_a):
                row = self.trans.get((c, a))
                if not row:
                    P[c, a, c] = 1.0
                    continue
                n = sum(row.values())
                R[c, a] = self.reward_sum[(c, a)] / n
                for nxt, k in row.items():
                    if nxt != TERMINAL:
                        P[c, a, nxt] += k / n
        R = R + bonus[:, None]
        V = np.zeros(n_c)
        self.sweep_deltas = []
        for _ in range(self.max_sweeps):
            V_new = (R + self.gamma * P @ V).max(axis=1)
            delta = float(np.max(np.abs(V_new - V)))
            self.sweep_deltas.append(delta)
            V = V_new
            if delta < self.tol:
                break
        self.values = V
        return V

    def value(self, xy: tuple) -> float:
        return float(self.values[self.cell(xy)])


def train_value_function(
    buffer: ReplayBuffer,
    agent_xy: Callable[[FactoredState], tuple],
    bounds: tuple,
    n_actions: int,
    grid: tuple = (10, 8),
    beta: float = 1.0,
    gamma: float = 0.99,
) -> GridValueFunction:
    gv = GridValueFunction(bounds, n_actions, grid, beta, gamma)
    for rec in buffer.records:
        gv.observe(agent_xy(rec.state), rec.action, agent_xy(rec.next_state), rec.reward, rec.done)
    gv.train()
    return gv


# -- model plumbing ------------------------------------------------------------


class ObjectAgentModel:
    """Learned object-level transition and reward families."""

    def __init__(self, env, spec: ModelSpec, macros: Sequence[MacroAction], alpha: float) -> None:
        self.env = env
        self.macros = list(macros)
        self.models = ModelSet(spec)
        self.posterior = ModelPosterior(
            self.models, lambda res: ObjectWorldModel(self.models, res, self.macros), alpha
        )

    def root(self, states: Sequence[FactoredState], actions: Sequence[int]) -> PlanState:
        h = self.models.max_t - 1
        objs = [s.objects for s in states]
        return PlanState(
            objs[-1],
            tuple(objs[:-1][-h:]) if h else (),
            tuple(actions[-h:]) if h else (),
        )

    def agent_xy(self, plan_state) -> tuple:
        o = plan_state.objects[self.env.agent_index]
        return o.x, o.y

    def observe(self, states, actions, next_state, reward) -> None:
        h = self.models.spec.max_history
        self.models.observe([s.objects for s in states[-h:]], list(actions[-h:]),
                            next_state.objects, reward)

    def apply_backoffs(self) -> int:
        return self.models.apply_backoffs()

    def selected_feature_sets(self) -> str:
        parts = []
        for fam in self.models.transition_families():
            key = ":".join(str(k) for k in fam.key[1:])
            parts.append(f"{key}={FEATURE_SETS[fam.selected_index()]}@t{fam.current_t}")
        return ";".join(parts)

    def to_json(self) -> list:
        return self.models.to_json()


# Pong contact outcomes are the ball's first displacement after leaving the
# paddle; a point for the player removes the ball.
CONTACT_OUTCOMES = {0: Displacement(1, 0, False), 1: Displacement(2, 0, False), 2: Displacement(0, 0, True)}
CONTACT_KINDS = {v: k for k, v in CONTACT_OUTCOMES.items()}


class PongContactWorldModel:
    """Pong simulator whose player-paddle contact effects come from a learned family.

    Everything but the paddle regions (ball flight, enemy, serves, the
    paddle's action kernel) is supplied as known structure; a contact on a
    row the family has never seen is reported as unknown and ends the step.
    """

    def __init__(self, env, family: ModelFamily, resolver, macros) -> None:
        from .envs import pong_prime as pp

        self.pp = pp
        self.env = env
        self.family = family
        self.resolver = resolver
        self.macros = list(macros)
        self.actions = self.macros
        self.deterministic = resolver.deterministic

    def key(self, state):
        return state

    def agent_xy(self, state) -> tuple:
        return self.pp.PLAYER_X, state.player_y

    def step(self, state, action: int) -> StepResult:
        pp = self.pp
        macro = self.macros[action]
        unknown = []

        def contact(row: int) -> int:
            out = self.resolver.query(self.family, contact_context(row))
            if out is None:
                unknown.append(row)
                return pp.NORMAL
            return CONTACT_KINDS[out]

        total = 0
        done = False
        for a in [macro.atomic] + [pp.NOOP] * macro.noops:
            state, r, done, _ = pp.advance(
                state, a, self.env.serves, self.env.enemy_speed, contact=contact,
                points_to_win=self.env.points_to_win, step_cap=self.env.step_cap,
            )
            total += r
            if done or unknown:
                break
        return StepResult(state, float(total), not unknown, done, False)


def contact_context(row: int):
    from .models import Context

    return Context(((0, row),), ())


class PongContactAgentModel:
    """Provided model class for Pong Prime: only the paddle-region effects are learned."""

    def __init__(self, env, macros: Sequence[MacroAction], alpha: float) -> None:
        from .envs import pong_prime as pp

        self.env = env
        self.macros = list(macros)
        self.family = ModelFamily(("contact",), fixed_index=2, include_action_in_null=False)
        declared = tuple((o, alpha) for o in sorted(CONTACT_OUTCOMES.values()))
        self.models = ModelSet(ModelSpec(agent_class=pp.PLAYER))
        self.models.families[self.family.key] = self.family
        self.posterior = ModelPosterior(
            self.models,
            lambda res: PongContactWorldModel(self.env, self.family, res, self.macros),
            alpha,
            declared=lambda fam: declared,
        )
        self._seen_contacts = 0

    def root(self, states, actions):
        return self.env.sim

    def agent_xy(self, state) -> tuple:
        return 1, state.player_y

    def observe(self, states, actions, next_state, reward) -> None:
        for row, kind in self.env.last_contacts[self._seen_contacts:]:
            obj = ObjectState(0, 0, row)
            self.family.observe(ObjectTransition((obj,), (None,), (0,), CONTACT_OUTCOMES[kind]))
        self._seen_contacts = len(self.env.last_contacts)

    def new_episode(self) -> None:
        self._seen_contacts = 0

    def apply_backoffs(self) -> int:
        return 0

    def selected_feature_sets(self) -> str:
        return f"contact={FEATURE_SETS[self.family.selected_index()]}@t{self.family.current_t}"

    def to_json(self) -> list:
        return self.models.to_json()


# -- the agent -------------------------------------------------------------------


@dataclass
class SoorlConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    grid: tuple = (10, 8)
    beta: float = 1.0
    epsilon_ent: float = 0.05
    alpha: float = 0.5
    history_t: int = 1
    model_class: str = "learned"  # or "oracle"
    leaf_value: bool = True
    macros: Optional[dict] = None  # atomic id -> no-op count


@dataclass
class EpisodeStats:
    episode: int
    ret: float
    steps: int
    decisions: int
    reached_goal: bool
    model_backoffs: int
    selected_feature_sets: str


def build_macros(env, table: Optional[dict]) -> list[MacroAction]:
    table = table or {}
    return [MacroAction(a, int(table.get(a, table.get(str(a), 0)))) for a in env.atomic_actions()]


def build_agent_model(env, cfg: SoorlConfig, macros):
    if env.name == "pong-prime" and cfg.model_class == "oracle":
        return PongContactAgentModel(env, macros, cfg.alpha)
    kw: dict[str, Any] = dict(t=cfg.history_t, epsilon_ent=cfg.epsilon_ent)
    if cfg.model_class == "oracle":
        kw.update(env.oracle_model_class())
    elif cfg.model_class != "learned":
        raise ValueError(f"unknown model class {cfg.model_class!r}")
    spec = ModelSpec.selecting(env, **kw)
    return ObjectAgentModel(env, spec, macros, cfg.alpha)


class SoorlAgent:
    def __init__(self, env, cfg: SoorlConfig, seed: int = 0) -> None:
        self.env = env
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.macros = build_macros(env, cfg.macros)
        self.model = build_agent_model(env, cfg, self.macros)
        self.buffer = ReplayBuffer()
        self.value_fn_grid = GridValueFunction(
            env.bounds, len(self.macros), cfg.grid, cfg.beta, cfg.planner.gamma
        )
        self.episodes_run = 0
        self.trace_sink: Optional[list] = None

    def _env_xy(self, state: FactoredState) -> tuple:
        o = state.objects[self.env.agent_index]
        return o.x, o.y

    def visit_count(self, xy: tuple) -> int:
        return self.value_fn_grid.visit_count(xy)

    def update_models(self, states, actions, next_state, reward, done) -> None:
        self.model.observe(states, actions, next_state, reward)
        self.value_fn_grid.observe(
            self._env_xy(states[-1]), actions[-1], self._env_xy(next_state), reward, done
        )

    def run_episode(self, seed: int = 0, max_decisions: Optional[int] = None) -> EpisodeStats:
        env, cfg = self.env, self.cfg
        grid = self.value_fn_grid
        grid.train()
        if cfg.leaf_value:
            def value_fn(ps):
                return grid.value(self.model.agent_xy(ps))
        else:
            def value_fn(ps):
                return 0.0
        ep = self.buffer.start_episode()
        if hasattr(self.model, "new_episode"):
            self.model.new_episode()
        state = env.reset(seed)
        states = [state]
        actions: list[int] = []
        total = 0.0
        steps = 0
        decisions = 0
        done = False
        while not done:
            root = self.model.root(states, actions)
            rollouts = [] if self.trace_sink is not None else None
            plan = strategic_explore(
                self.model.posterior, root, cfg.planner, value_fn, self.rng,
                bonus_beta=cfg.beta, visit_counts=self.visit_count, trace=rollouts,
            )
            if rollouts is not None:
                self.trace_sink.append({
                    "episode": self.episodes_run + 1, "decision": decisions, "best": plan.best,
                    "q": plan.q,
                    "rollouts": [[[[d, short_key(k), act, ret] for d, k, act, ret in p], g]
                                 for p, g in rollouts],
                })
            a = plan.best
            nxt, reward, done = env.step(self.macros[a])
            steps += env.last_primitive_steps
            decisions += 1
            actions.append(a)
            self.buffer.append(TransitionRecord(state, a, nxt, reward, done, ep))
            self.update_models(states, actions, nxt, reward, done)
            total += reward
            state = nxt
            states.append(nxt)
            h = self.model.models.spec.max_history
            if len(states) > h:
                states = states[-h:]
                actions = actions[len(actions) - (h - 1):] if h > 1 else []
            if max_decisions is not None and decisions >= max_decisions:
                break
        backoffs = self.model.apply_backoffs()
        self.episodes_run += 1
        return EpisodeStats(
            episode=self.episodes_run,
            ret=total,
            steps=steps,
            decisions=decisions,
            reached_goal=bool(env.success()),
            model_backoffs=backoffs,
            selected_feature_sets=self.model.selected_feature_sets(),
        )


def short_key(key) -> str:
    """Stable 12-hex-digit digest of a planner state key, for logs."""
    return hashlib.sha1(repr(key).encode()).hexdigest()[:12]


def soorl_episode(env, agent: SoorlAgent, cfg: Optional[SoorlConfig] = None, seed: int = 0) -> EpisodeStats:
    if cfg is not None and cfg is not agent.cfg:
        raise ValueError("agent was built with a different config")
    return agent.run_episode(seed)
