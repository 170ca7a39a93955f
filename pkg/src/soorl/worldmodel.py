"""Composing per-class model families into a world model the planner can query.

Routing rule: every alive, non-static object is routed to exactly one
transition family per step.  If it touches another object, the family of
the class pair (own class, first partner's class) is used, otherwise its own
class's standalone family.  Rewards are modelled the same way, keyed on the
agent object.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .models import (
    DEFAULT_EPSILON_ENT,
    HistoryTooShort,
    Context,
    Displacement,
    FEATURE_SETS,
    ModelFamily,
    ObjectTransition,
    Outcome,
    Reward,
    featurize,
)
from .oomdp import FactoredState, ObjectState, interaction_partners

DEFAULT_MAX_HISTORY = 16
DEFAULT_ALPHA = 0.5
NO_MOVE = Displacement(0, 0, False)
NO_REWARD = Reward(0)


def transition_key(cls: int, partner_cls: Optional[int]) -> tuple:
    return ("T", cls) if partner_cls is None else ("T", cls, partner_cls)


def reward_key(cls: int, partner_cls: Optional[int]) -> tuple:
    return ("R", cls) if partner_cls is None else ("R", cls, partner_cls)


def is_pair_key(key: tuple) -> bool:
    return len(key) == 3


def first_partner(objects: Sequence[ObjectState], index: int) -> Optional[int]:
    partners = interaction_partners(objects, index)
    return partners[0] if partners else None


@dataclass
class ModelSpec:
    """How records are routed and which model class each family uses.

    ``fixed`` maps "standalone"/"pair" to a feature-set index pinned for the
    transition families; ``fixed_reward`` does the same for reward
    families.  Unpinned families choose by entropy.
    """

    agent_index: int = 0
    agent_class: int = 0
    static_classes: frozenset = frozenset()
    learned_classes: Optional[frozenset] = None
    t: int = 1
    epsilon_ent: float = DEFAULT_EPSILON_ENT
    include_action_in_null: bool = True
    learn_rewards: bool = True
    fixed: dict = field(default_factory=dict)
    fixed_reward: dict = field(default_factory=dict)
    max_history: int = DEFAULT_MAX_HISTORY
    declared_rewards: tuple = ()

    @classmethod
    def selecting(cls, env, classes: Optional[Iterable[int]] = None, **kw) -> "ModelSpec":
        learned = None if classes is None else frozenset(classes)
        return cls(
            agent_index=env.agent_index,
            agent_class=env.agent_class,
            static_classes=frozenset(env.static_classes),
            learned_classes=learned,
            declared_rewards=(0, int(env.max_reward)),
            **kw,
        )

    def learns(self, cls: int) -> bool:
        if cls in self.static_classes:
            return False
        return self.learned_classes is None or cls in self.learned_classes

    def fixed_index(self, key: tuple) -> Optional[int]:
        table = self.fixed if key[0] == "T" else self.fixed_reward
        return table.get("pair" if is_pair_key(key) else "standalone")


class ModelSet:
    """All transition and reward families for one agent."""

    def __init__(self, spec: ModelSpec) -> None:
        self.spec = spec
        self.families: dict[tuple, ModelFamily] = {}
        self.seen_pairs: set[tuple] = set()
        self.skipped = 0
        self.backoffs = 0
        self._ctx_cache: dict = {}
        self._ctx_version: tuple = ()

    def context_cache(self) -> dict:
        """Scratch space for planner queries, emptied whenever the data changes."""
        fams = self.families.values()
        version = (len(self.families), len(self.seen_pairs),
                   sum(f.total_observations for f in fams), sum(f.current_t for f in fams))
        if version != self._ctx_version:
            self._ctx_cache = {}
            self._ctx_version = version
        return self._ctx_cache

    def family(self, key: tuple) -> ModelFamily:
        fam = self.families.get(key)
        if fam is None:
            fam = ModelFamily(
                key,
                current_t=self.spec.t,
                epsilon_ent=self.spec.epsilon_ent,
                include_action_in_null=self.spec.include_action_in_null,
                fixed_index=self.spec.fixed_index(key),
            )
            self.families[key] = fam
        return fam

    def transition_families(self) -> list[ModelFamily]:
        return [f for k, f in sorted(self.families.items()) if k[0] == "T"]

    def reward_families(self) -> list[ModelFamily]:
        return [f for k, f in sorted(self.families.items()) if k[0] == "R"]

    @property
    def max_t(self) -> int:
        return max((f.current_t for f in self.families.values()), default=self.spec.t)

    def route(
        self,
        history: Sequence[tuple],
        actions: Sequence[int],
        nxt: tuple,
        reward: float,
    ) -> list[tuple[tuple, ObjectTransition]]:
        """Split one step into per-family records.

        ``history`` holds object tuples oldest to newest, the last being the
        state the action ``actions[-1]`` was taken in.
        """
        current = history[-1]
        out = []
        spec = self.spec
        for i, obj in enumerate(current):
            if not obj.alive or not spec.learns(obj.class_id):
                continue
            p = first_partner(current, i)
            pcls = None if p is None else current[p].class_id
            obj_hist, partner_hist = _histories(history, i)
            after = nxt[i]
            outcome = Displacement(after.x - obj.x, after.y - obj.y, not after.alive)
            out.append(
                (transition_key(obj.class_id, pcls),
                 ObjectTransition(obj_hist, partner_hist, tuple(actions), outcome))
            )
            if spec.learn_rewards and i == spec.agent_index:
                out.append(
                    (reward_key(obj.class_id, pcls),
                     ObjectTransition(obj_hist, partner_hist, tuple(actions), Reward(reward)))
                )
        return out

    def observe(self, history, actions, nxt, reward) -> int:
        """Update every routed family; returns how many records were used."""
        used = 0
        for key, rec in self.route(history, actions, nxt, reward):
            if is_pair_key(key):
                self.seen_pairs.add(key[1:])
            try:
                self.family(key).observe(rec)
                used += 1
            except HistoryTooShort:
                self.family(key)
                self.skipped += 1
        return used

    def observe_episode(self, episode: Sequence[tuple]) -> None:
        """Feed ``(state, action, next_state, reward)`` tuples of one episode."""
        h = self.spec.max_history
        history: list[tuple] = []
        actions: list[int] = []
        for state, action, nxt, reward in episode:
            objs = state.objects if isinstance(state, FactoredState) else state
            history = (history + [objs])[-h:]
            actions = (actions + [action])[-h:]
            n_objs = nxt.objects if isinstance(nxt, FactoredState) else nxt
            self.observe(history, actions, n_objs, reward)

    def apply_backoffs(self) -> int:
        """Grow the history of every family whose selection failed."""
        n = 0
        for fam in self.families.values():
            if fam.fixed_index is not None:
                continue
            fam.selected_index()
            if fam.needs_backoff and fam.current_t < self.spec.max_history:
                fam.backoff()
                n += 1
        self.backoffs += n
        return n

    def to_json(self) -> list[dict[str, Any]]:
        return [f.to_json() for _, f in sorted(self.families.items())]


def _histories(history: Sequence[tuple], i: int):
    obj_hist = tuple(objs[i] for objs in history)
    partner_hist = []
    for objs in history:
        p = first_partner(objs, i)
        partner_hist.append(None if p is None else objs[p])
    return obj_hist, tuple(partner_hist)


class StepResult(NamedTuple):
    next_state: Any
    reward: float
    known: bool
    done: bool
    novel_pair: bool = False


class PlanState(NamedTuple):
    """Planner-side state: current objects plus the history models need."""

    objects: tuple
    past: tuple = ()
    past_actions: tuple = ()


# -- resolvers: turn a family query into an outcome ---------------------------


class ModalResolver:
    """The most frequent outcome of each context; ``None`` if unseen."""

    deterministic = True

    def query(self, family: ModelFamily, ctx: Context) -> Optional[Outcome]:
        row = family.selected_model.table.get(ctx)
        if not row:
            return None
        return family.predict(ctx).outcome


def _draw(rng: np.random.Generator, weights: Sequence[float]) -> int:
    """Index drawn with probability proportional to ``weights``."""
    u = rng.random() * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


class SampledResolver:
    """A posterior draw, fixed per context on first query.

    A context's outcomes observed so far carry weight ``alpha + count``; one
    extra ``alpha`` of mass stands for "something not yet seen here", which
    resolves to a declared outcome the context has not produced, drawn in
    proportion to the declared prior weights.  Drawing from this predictive
    once per context matches drawing a categorical from a Dirichlet sample.
    """

    deterministic = True

    def __init__(self, rng: np.random.Generator, alpha: float, declared: Callable[[ModelFamily], tuple],
                 tables: Optional[dict] = None):
        self.rng = rng
        self.alpha = alpha
        self.declared = declared
        self.memo: dict = {}
        # weight tables depend only on the data, so sibling resolvers may share them
        self.tables = {} if tables is None else tables

    def _table(self, family: ModelFamily, ctx: Context) -> tuple:
        row = family.selected_model.table.get(ctx) or {}
        seen = sorted(row)
        unseen = [(o, w) for o, w in self.declared(family) if o not in row]
        weights = [self.alpha + row[o] for o in seen]
        if unseen:
            weights.append(self.alpha)
        return seen, weights, [o for o, _ in unseen], [w for _, w in unseen]

    def query(self, family: ModelFamily, ctx: Context) -> Optional[Outcome]:
        key = (family.key, family.current_t, ctx)
        if key in self.memo:
            return self.memo[key]
        table = self.tables.get(key)
        if table is None:
            table = self.tables[key] = self._table(family, ctx)
        seen, weights, unseen, unseen_w = table
        if not weights:
            self.memo[key] = None
            return None
        i = _draw(self.rng, weights)
        pick = seen[i] if i < len(seen) else unseen[_draw(self.rng, unseen_w)]
        self.memo[key] = pick
        return pick


class ObjectWorldModel:
    """Deterministic next-state/reward prediction from a ``ModelSet``.

    Objects whose class is not learned stay where they are.  Unknown
    contexts are reported with ``known=False`` and fall back to no movement
    and zero reward; wrappers decide what that means.  Query contexts are
    cached per data version at construction, so build a fresh model after
    observing new data.
    """

    def __init__(self, models: ModelSet, resolver, actions: Sequence) -> None:
        self.models = models
        self.resolver = resolver
        self.actions = list(actions)
        self.deterministic = resolver.deterministic
        self.spec = models.spec
        self.history = max(models.max_t, 1)
        self._contexts = models.context_cache()

    def root(self, states: Sequence[FactoredState], actions: Sequence[int]) -> PlanState:
        h = self.history - 1
        objs = [s.objects if isinstance(s, FactoredState) else s for s in states]
        past = tuple(objs[:-1][-h:]) if h else ()
        past_actions = tuple(actions[-h:]) if h else ()
        return PlanState(objs[-1], past, past_actions)

    def key(self, state: PlanState) -> Hashable:
        return state

    def agent_xy(self, state: PlanState) -> tuple[int, int]:
        o = state.objects[self.spec.agent_index]
        return o.x, o.y

    def _context(self, key, history, i, acts):
        fam = self.models.families.get(key)
        if fam is None:
            return None
        obj_hist, partner_hist = _histories(history, i)
        fs = FEATURE_SETS[fam.selected_index()]
        try:
            ctx = featurize(obj_hist, partner_hist, acts, fs, fam.current_t,
                            include_action=fam.include_action_in_null)
        except HistoryTooShort:
            return None
        return fam, ctx

    def _queries(self, state: PlanState, action: int) -> tuple:
        """Per learned object: (index, transition query, reward query), plus the novelty flag.

        Depends only on the data and (state, action), so it is shared by
        every world model built from the same families.
        """
        objects = state.objects
        history = state.past + (objects,)
        acts = state.past_actions + (action,)
        spec = self.spec
        novel = False
        out = []
        for i, obj in enumerate(objects):
            if not obj.alive or not spec.learns(obj.class_id):
                continue
            p = first_partner(objects, i)
            pcls = None if p is None else objects[p].class_id
            if pcls is not None and (obj.class_id, pcls) not in self.models.seen_pairs:
                novel = True
            tq = self._context(transition_key(obj.class_id, pcls), history, i, acts)
            rq = False
            if spec.learn_rewards and i == spec.agent_index:
                rq = self._context(reward_key(obj.class_id, pcls), history, i, acts)
            out.append((i, tq, rq))
        return tuple(out), novel

    def step(self, state: PlanState, action: int) -> StepResult:
        cache = self._contexts
        plan = cache.get((state, action))
        if plan is None:
            plan = cache[(state, action)] = self._queries(state, action)
        queries, novel = plan
        objects = state.objects
        known = True
        reward = 0.0
        new = list(objects)
        query = self.resolver.query
        for i, tq, rq in queries:
            out = None if tq is None else query(*tq)
            if out is None:
                known = False
                out = NO_MOVE
            if out.dx or out.dy or out.died:
                obj = objects[i]
                new[i] = ObjectState(obj.class_id, obj.x + out.dx, obj.y + out.dy,
                                     obj.w, obj.h, not out.died)
            if rq is not False:
                r = None if rq is None else query(*rq)
                if r is None:
                    known = False
                    r = NO_REWARD
                reward = float(r.r)
        h = self.history - 1
        nxt = PlanState(
            tuple(new),
            (state.past + (objects,))[-h:] if h else (),
            (state.past_actions + (action,))[-h:] if h else (),
        )
        done = not new[self.spec.agent_index].alive
        return StepResult(nxt, reward, known, done, novel)


class ModelPosterior:
    """Builds world models from the current families: modal or sampled."""

    def __init__(
        self,
        models: ModelSet,
        builder: Callable[[Any], Any],
        alpha: float = DEFAULT_ALPHA,
        declared: Optional[Callable[[ModelFamily], tuple]] = None,
    ) -> None:
        self.models = models
        self.builder = builder
        self.alpha = alpha
        self.declared = declared or (lambda fam: declared_outcomes(models, fam.key, alpha))
        self._cache: dict = {}
        self._tables: dict = {}
        self._version = -1

    def modal(self):
        return self.builder(ModalResolver())

    def sample(self, rng: np.random.Generator):
        version = sum(f.total_observations for f in self.models.families.values())
        if version != self._version:
            self._cache.clear()
            self._tables.clear()
            self._version = version
        return self.builder(SampledResolver(rng, self.alpha, self._declared_cached, self._tables))

    def _declared_cached(self, family: ModelFamily) -> tuple:
        out = self._cache.get(family.key)
        if out is None:
            out = self._cache[family.key] = self.declared(family)
        return out


def declared_outcomes(models: ModelSet, key: tuple, alpha: float = DEFAULT_ALPHA) -> tuple:
    """Outcomes an unseen context may produce, with prior weights.

    Transition families: every displacement seen for the same object class.
    Reward families: the declared reward values plus every reward seen.
    Each outcome weighs ``alpha`` plus how often the class produced it in
    any context, so a fresh context is expected to behave like a typical
    seen one.  Returns sorted ``(outcome, weight)`` pairs.
    """
    pool: Counter = Counter()
    for k, f in models.families.items():
        if k[0] == key[0] and k[1] == key[1]:
            pool.update(outcome_counts(f))
    if key[0] == "R":
        for r in models.spec.declared_rewards:
            pool[Reward(r)] += 0
    return tuple((o, alpha + pool[o]) for o in sorted(pool))


def outcome_counts(family: ModelFamily) -> Counter:
    total: Counter = Counter()
    for row in family.models[0].table.values():
        total.update(row)
    return total
