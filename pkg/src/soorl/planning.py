"""UCT search over learned world models, with four exploration regimes.

``uct_plan`` is plain UCB1 tree search to a fixed depth with a bootstrap
value at the leaves.  ``strategic_explore`` chooses which model(s) to search
in: the modal model (MLE), the modal model wrapped with optimism, one
posterior sample (Thompson sampling), or a fresh sample per rollout feeding a
shared tree (BAMCP-style root sampling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np

from .worldmodel import StepResult


class Mode(str, Enum):
    MLE = "mle"
    OPTIMISM = "optimism"
    TS = "ts"
    BAMCP = "bamcp"


@dataclass(frozen=True)
class PlannerConfig:
    depth_d: int = 10
    rollouts_L: int = 500
    models_K: int = 1
    ucb_c: float = 1.0
    gamma: float = 0.99
    r_max: float = 10.0
    mode: Mode = Mode.OPTIMISM
    expand_one: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.depth_d < 1 or self.rollouts_L < 1 or self.models_K < 1:
            raise ValueError("depth, rollouts and models must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.ucb_c <= 0:
            raise ValueError("ucb_c must be positive")
        if self.mode is Mode.TS and self.models_K != 1:
            raise ValueError("Thompson sampling searches a single model (K = 1)")
        if self.mode is Mode.BAMCP and self.rollouts_L != 1:
            raise ValueError("BAMCP runs one rollout per sampled model (L = 1)")

    @property
    def simulations(self) -> int:
        return self.rollouts_L * self.models_K

    @classmethod
    def for_mode(cls, mode: Mode | str, searches: int = 500, **kw) -> "PlannerConfig":
        """Config spending ``searches`` rollouts in the way ``mode`` prescribes."""
        mode = Mode(mode)
        if mode is Mode.BAMCP:
            return cls(rollouts_L=1, models_K=searches, mode=mode, **kw)
        return cls(rollouts_L=searches, models_K=1, mode=mode, **kw)


@dataclass
class Node:
    visits: int
    action_visits: list
    q: list
    children: list  # cached StepResults for deterministic models


@dataclass
class SearchTree:
    n_actions: int
    nodes: dict = field(default_factory=dict)

    def node(self, key) -> Node:
        nd = self.nodes.get(key)
        if nd is None:
            nd = Node(0, [0] * self.n_actions, [0.0] * self.n_actions, [None] * self.n_actions)
            self.nodes[key] = nd
        return nd

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass
class PlanResult:
    best: int
    q: list
    visits: list
    tree: SearchTree


def select_action(node: Node, c: float) -> int:
    """Untried actions first in id order, then UCB1 with lowest-id ties."""
    for a, n in enumerate(node.action_visits):
        if n == 0:
            return a
    log_n = math.log(node.visits)
    best, best_val = 0, -math.inf
    for a, (n, q) in enumerate(zip(node.action_visits, node.q)):
        v = q + c * math.sqrt(log_n / n)
        if v > best_val:
            best, best_val = a, v
    return best


def _rollout(model, state, depth, cfg, value_fn, tree, cache, trace) -> float:
    if depth == cfg.depth_d:
        return value_fn(state)
    key = (depth, model.key(state))
    if cfg.expand_one and depth > 0 and key not in tree.nodes:
        # expansion: one new node per rollout, valued by the bootstrap
        tree.node(key)
        return value_fn(state)
    nd = tree.node(key)
    a = select_action(nd, cfg.ucb_c)
    res: Optional[StepResult] = nd.children[a] if cache else None
    if res is None:
        res = model.step(state, a)
        if cache:
            nd.children[a] = res
    step = None
    if trace is not None:
        step = [depth, key[1], a, None]
        trace.append(step)
    if res.done:
        g = res.reward
    else:
        g = res.reward + cfg.gamma * _rollout(
            model, res.next_state, depth + 1, cfg, value_fn, tree, cache, trace
        )
    nd.visits += 1
    nd.action_visits[a] += 1
    nd.q[a] += (g - nd.q[a]) / nd.action_visits[a]
    if step is not None:
        step[3] = g
    return g


def uct_plan(
    model,
    root,
    cfg: PlannerConfig,
    value_fn: Callable[[Any], float] = lambda s: 0.0,
    rng: Optional[np.random.Generator] = None,
    tree: Optional[SearchTree] = None,
    rollouts: Optional[int] = None,
    trace: Optional[list] = None,
    cache: Optional[bool] = None,
) -> PlanResult:
    """Run ``rollouts`` (default ``cfg.rollouts_L``) UCT simulations from ``root``.

    The tree is keyed by (depth, state key).  A rollout selects actions by
    UCB1 down to depth ``d`` and scores the leaf with ``value_fn``; with
    ``cfg.expand_one`` it instead stops at the first new node below the root
    and scores that.  Terminal steps end a rollout early.  Pass ``tree`` to
    accumulate into an existing search.  ``trace`` receives one
    ``(path, return)`` entry per rollout.  Child transitions are cached per
    node when the model is deterministic; a tree shared across different
    models must not cache.
    """
    n_actions = len(model.actions)
    if tree is None:
        tree = SearchTree(n_actions)
    L = cfg.rollouts_L if rollouts is None else rollouts
    if L < 1:
        raise ValueError("need at least one rollout")
    if cache is None:
        cache = bool(getattr(model, "deterministic", False))
    for _ in range(L):
        path = [] if trace is not None else None
        g = _rollout(model, root, 0, cfg, value_fn, tree, cache, path)
        if trace is not None:
            trace.append((path, g))
    return root_result(tree, model.key(root), n_actions)


def root_result(tree: SearchTree, root_key, n_actions: int) -> PlanResult:
    nd = tree.nodes.get((0, root_key))
    if nd is None:
        return PlanResult(0, [0.0] * n_actions, [0] * n_actions, tree)
    tried = [a for a in range(n_actions) if nd.action_visits[a] > 0]
    best = max(tried, key=lambda a: (nd.q[a], -a)) if tried else 0
    return PlanResult(best, list(nd.q), list(nd.action_visits), tree)


class OptimisticModel:
    """Wraps a world model with optimism for the unknown.

    Unknown predictions and never-seen interaction pairs end the rollout with
    ``r_max``; every known step earns ``beta * max(n, 1) ** -0.5`` for the
    visit count ``n`` of the resulting agent cell.
    """

    def __init__(self, base, r_max: float, bonus_beta: float = 0.0, visit_counts=None) -> None:
        self.base = base
        self.r_max = r_max
        self.beta = bonus_beta
        self.visit_counts = visit_counts
        self.actions = base.actions
        self.deterministic = getattr(base, "deterministic", False)

    def key(self, state):
        return self.base.key(state)

    def agent_xy(self, state):
        return self.base.agent_xy(state)

    def step(self, state, action) -> StepResult:
        res = self.base.step(state, action)
        if not res.known or res.novel_pair:
            return StepResult(res.next_state, self.r_max, res.known, True, res.novel_pair)
        if self.beta and self.visit_counts is not None:
            n = self.visit_counts(self.base.agent_xy(res.next_state))
            return res._replace(reward=res.reward + self.beta * max(n, 1) ** -0.5)
        return res


def make_optimistic(model, r_max: float, bonus_beta: float = 0.0, visit_counts=None) -> OptimisticModel:
    return OptimisticModel(model, r_max, bonus_beta, visit_counts)


def sample_model(posterior, rng: np.random.Generator):
    return posterior.sample(rng)


def strategic_explore(
    posterior,
    root,
    cfg: PlannerConfig,
    value_fn: Callable[[Any], float] = lambda s: 0.0,
    rng: Optional[np.random.Generator] = None,
    bonus_beta: float = 0.0,
    visit_counts=None,
    trace: Optional[list] = None,
) -> PlanResult:
    """Plan one decision; ``trace`` (if given) collects ``(path, return)`` per rollout."""
    rng = rng if rng is not None else np.random.default_rng(0)
    mode = cfg.mode
    if mode is Mode.MLE:
        return uct_plan(posterior.modal(), root, cfg, value_fn, rng, trace=trace)
    if mode is Mode.OPTIMISM:
        model = make_optimistic(posterior.modal(), cfg.r_max, bonus_beta, visit_counts)
        return uct_plan(model, root, cfg, value_fn, rng, trace=trace)
    if mode is Mode.TS:
        return uct_plan(sample_model(posterior, rng), root, cfg, value_fn, rng, trace=trace)
    # BAMCP: one fresh model per simulation, all into one tree
    tree = None
    key = None
    for _ in range(cfg.models_K):
        model = sample_model(posterior, rng)
        res = uct_plan(
            model, root, cfg, value_fn, rng, tree=tree, rollouts=cfg.rollouts_L, trace=trace, cache=False
        )
        tree = res.tree
        key = model.key(root)
    return root_result(tree, key, len(model.actions))
