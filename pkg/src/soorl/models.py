"""Count-based deterministic object models with entropy-driven model selection.

Each object class (and each interacting class pair) owns a ``ModelFamily``:
eight count tables over the same data, one per input feature set.  The
family picks the simplest table whose empirical conditional entropy is under
``epsilon_ent``; when none is, the history window is doubled.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, NamedTuple, Optional, Sequence, Union

from .oomdp import ObjectState

DEFAULT_EPSILON_ENT = 0.05


class HistoryTooShort(ValueError):
    """Fewer aligned steps are available than the model's history window."""


@dataclass(frozen=True)
class FeatureSet:
    include_size: bool = False
    include_location: bool = False
    include_intersection: bool = False

    @property
    def is_null(self) -> bool:
        return not (self.include_size or self.include_location or self.include_intersection)

    @property
    def names(self) -> list[str]:
        out = []
        if self.include_size:
            out.append("size")
        if self.include_location:
            out.append("location")
        if self.include_intersection:
            out.append("intersection")
        return out

    @property
    def complexity(self) -> int:
        return self.include_size + self.include_location + self.include_intersection

    def __str__(self) -> str:
        return "+".join(self.names) or "null"

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        parts = {p.strip() for p in text.split("+") if p.strip()} - {"null"}
        unknown = parts - {"size", "location", "intersection"}
        if unknown:
            raise ValueError(f"unknown feature names: {sorted(unknown)}")
        return cls("size" in parts, "location" in parts, "intersection" in parts)


# Complexity order: null, singles, pairs, all three; ties size < location < intersection.
FEATURE_SETS: tuple[FeatureSet, ...] = (
    FeatureSet(),
    FeatureSet(True, False, False),
    FeatureSet(False, True, False),
    FeatureSet(False, False, True),
    FeatureSet(True, True, False),
    FeatureSet(True, False, True),
    FeatureSet(False, True, True),
    FeatureSet(True, True, True),
)
NULL_INDEX = 0
MOST_COMPLEX_INDEX = len(FEATURE_SETS) - 1


def feature_set_index(fs: FeatureSet) -> int:
    return FEATURE_SETS.index(fs)


@dataclass(frozen=True, order=True)
class Displacement:
    dx: int
    dy: int
    died: bool = False


@dataclass(frozen=True, order=True)
class Reward:
    r: int


Outcome = Union[Displacement, Reward]


def outcome_to_json(outcome: Outcome) -> dict[str, Any]:
    if isinstance(outcome, Reward):
        return {"reward": outcome.r}
    return {"dx": outcome.dx, "dy": outcome.dy, "died": outcome.died}


class Context(NamedTuple):
    features: tuple
    actions: tuple


@dataclass(frozen=True)
class ObjectTransition:
    """One object's observed step with time-aligned history.

    ``object_history[-1]`` is the object's state when ``actions[-1]`` was
    taken; ``partner_history`` holds the interaction partner at each step
    (``None`` where there was none).
    """

    object_history: tuple[ObjectState, ...]
    partner_history: tuple[Optional[ObjectState], ...]
    actions: tuple[int, ...]
    outcome: Outcome


def featurize(
    object_history: Sequence[ObjectState],
    partner_history: Optional[Sequence[Optional[ObjectState]]],
    actions: Sequence[int],
    fs: FeatureSet,
    t: int,
    *,
    include_action: bool = True,
) -> Context:
    if t < 1:
        raise ValueError(f"history window must be positive, got {t}")
    if len(object_history) < t or len(actions) < t:
        raise HistoryTooShort(
            f"need {t} steps, have {len(object_history)} states and {len(actions)} actions"
        )
    n = len(object_history)
    values: list = []
    for k in range(n - t, n):
        o = object_history[k]
        if fs.include_size:
            values.append((o.w, o.h))
        if fs.include_location:
            values.append((o.x, o.y))
        if fs.include_intersection:
            p = None
            if partner_history is not None:
                offset = len(partner_history) - n
                if 0 <= k + offset < len(partner_history):
                    p = partner_history[k + offset]
            values.append(None if p is None else (p.x - o.x, p.y - o.y))
    if include_action or not fs.is_null:
        acts = tuple(actions[len(actions) - t:])
    else:
        acts = ()
    return Context(tuple(values), acts)


class Known(NamedTuple):
    outcome: Outcome
    support: dict


def modal_outcome(counts: dict) -> Outcome:
    # highest count; ties go to the smallest outcome
    best = None
    best_n = -1
    for outcome, n in counts.items():
        if n > best_n or (n == best_n and outcome < best):
            best, best_n = outcome, n
    return best


@dataclass
class CountModel:
    history_t: int
    feature_set: FeatureSet
    table: dict = field(default_factory=dict)
    total_observations: int = 0

    def add(self, ctx: Context, outcome: Outcome, n: int = 1) -> None:
        row = self.table.get(ctx)
        if row is None:
            row = self.table[ctx] = Counter()
        row[outcome] += n
        self.total_observations += n

    def predict(self, ctx: Context) -> Optional[Known]:
        return predict(self, ctx)

    def entropy(self) -> float:
        return empirical_entropy(self)


def predict(model: CountModel, ctx: Context) -> Optional[Known]:
    """Modal outcome for ``ctx`` with its full count support, or ``None`` if unseen."""
    row = model.table.get(ctx)
    if not row:
        return None
    return Known(modal_outcome(row), dict(row))


def empirical_entropy(model: CountModel) -> float:
    """Count-weighted mean negative log conditional likelihood, in nats."""
    n_total = model.total_observations
    if n_total == 0:
        return 0.0
    acc = 0.0
    for row in model.table.values():
        if len(row) < 2:
            continue
        n_ctx = sum(row.values())
        for n in row.values():
            acc -= n * math.log(n / n_ctx)
    return acc / n_total


@dataclass
class ModelFamily:
    """Eight count models over the same data, plus the raw records behind them.

    ``fixed_index`` pins the selection to one feature set, which is how a
    known-correct model class is supplied to the agent.
    """

    key: Hashable
    current_t: int = 1
    epsilon_ent: float = DEFAULT_EPSILON_ENT
    include_action_in_null: bool = True
    fixed_index: Optional[int] = None
    declared_outcomes: Optional[tuple] = None
    models: list = field(default_factory=list)
    records: list = field(default_factory=list)
    selected: int = NULL_INDEX
    needs_backoff: bool = False
    skipped: int = 0
    _dirty: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        if self.current_t < 1:
            raise ValueError("current_t must be positive")
        if not self.models:
            self.models = [CountModel(self.current_t, fs) for fs in FEATURE_SETS]

    @property
    def total_observations(self) -> int:
        return self.models[0].total_observations

    def context(self, record_or_history, partner_history=None, actions=None, index=None) -> Context:
        """Featurize for one model (the selected one by default)."""
        if isinstance(record_or_history, ObjectTransition):
            rec = record_or_history
            record_or_history, partner_history, actions = (
                rec.object_history,
                rec.partner_history,
                rec.actions,
            )
        fs = FEATURE_SETS[self.selected_index() if index is None else index]
        return featurize(
            record_or_history,
            partner_history,
            actions,
            fs,
            self.current_t,
            include_action=self.include_action_in_null,
        )

    def observe(self, record: ObjectTransition) -> "ModelFamily":
        contexts = [
            featurize(
                record.object_history,
                record.partner_history,
                record.actions,
                fs,
                self.current_t,
                include_action=self.include_action_in_null,
            )
            for fs in FEATURE_SETS
        ]
        self.records.append(record)
        for model, ctx in zip(self.models, contexts):
            model.add(ctx, record.outcome)
        self._dirty = True
        return self

    def entropies(self) -> list[float]:
        return [empirical_entropy(m) for m in self.models]

    def select(self) -> int:
        index, flag = _select(self)
        self.selected = index
        self.needs_backoff = flag
        self._dirty = False
        return index

    def selected_index(self) -> int:
        if self.fixed_index is not None:
            return self.fixed_index
        if self._dirty:
            self.select()
        return self.selected

    @property
    def selected_model(self) -> CountModel:
        return self.models[self.selected_index()]

    def predict(self, ctx: Context) -> Optional[Known]:
        return predict(self.selected_model, ctx)

    def backoff(self) -> "ModelFamily":
        new_t = next_power_of_two(self.current_t)
        records = self.records
        self.current_t = new_t
        self.models = [CountModel(new_t, fs) for fs in FEATURE_SETS]
        self.records = []
        for rec in records:
            try:
                self.observe(rec)
            except HistoryTooShort:
                self.skipped += 1
        self._dirty = True
        self.needs_backoff = False
        return self

    def to_json(self) -> dict[str, Any]:
        key = self.key
        if isinstance(key, tuple):
            key = list(key)
        entropies = self.entropies()
        return {
            "class": key,
            "t": self.current_t,
            "epsilon": self.epsilon_ent,
            "selected": self.selected_index(),
            "models": [
                {
                    "features": fs.names,
                    "entropy": h,
                    "contexts": len(m.table),
                }
                for fs, m, h in zip(FEATURE_SETS, self.models, entropies)
            ],
        }


def _select(family: ModelFamily) -> tuple[int, bool]:
    for index, model in enumerate(family.models):
        if empirical_entropy(model) <= family.epsilon_ent:
            return index, False
    return MOST_COMPLEX_INDEX, True


def observe(family: ModelFamily, record: ObjectTransition) -> ModelFamily:
    return family.observe(record)


def select_model(family: ModelFamily) -> int:
    """Index of the simplest feature set within the entropy threshold.

    Falls back to the most complex set and flags the family for back-off
    when every model exceeds the threshold.
    """
    return family.select()


def backoff_history(family: ModelFamily) -> ModelFamily:
    return family.backoff()


def next_power_of_two(t: int) -> int:
    p = 1
    while p <= t:
        p *= 2
    return p


def build_family(
    key: Hashable,
    records: Iterable[ObjectTransition],
    t: int = 1,
    epsilon_ent: float = DEFAULT_EPSILON_ENT,
    **kwargs,
) -> ModelFamily:
    """Fresh family over ``records``; records with too little history are skipped."""
    family = ModelFamily(key, current_t=t, epsilon_ent=epsilon_ent, **kwargs)
    for rec in records:
        try:
            family.observe(rec)
        except HistoryTooShort:
            family.skipped += 1
    return family
