"""Learning "act then wait" macro actions.

Every atomic action starts padded with ``k_max`` no-ops.  Candidates are
reduced one no-op at a time, round-robin, and a reduction is kept only if the
learned object models stay deterministic (total entropy below a threshold)
on fresh data gathered with the reduced macro set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 8
DEFAULT_THRESHOLD = 0.05
DEFAULT_BUDGET = 2000


@dataclass(frozen=True, order=True)
class MacroAction:
    atomic: int
    noops: int = 0

    def __post_init__(self) -> None:
        if self.noops < 0:
            raise ValueError("noops must be non-negative")

    @property
    def length(self) -> int:
        return 1 + self.noops

    def to_json(self) -> dict:
        return {"atomic": self.atomic, "noops": self.noops}


@dataclass
class MacroLearnerState:
    macros: dict[int, MacroAction]
    reducible: set[int]
    threshold: float = DEFAULT_THRESHOLD
    budget_per_eval: int = DEFAULT_BUDGET
    trace: list[dict] = field(default_factory=list)

    @property
    def total_noops(self) -> int:
        return sum(m.noops for m in self.macros.values())


def macro_set(
    table: dict[int, MacroAction], noop_action: Optional[int], all_atomic: Sequence[int]
) -> list[MacroAction]:
    """Full macro list for an agent: learned macros plus single-step no-op."""
    out = []
    for a in all_atomic:
        if a in table:
            out.append(table[a])
        elif a == noop_action:
            out.append(MacroAction(a, 0))
    return out


def collect_transitions(env, macros: Sequence[MacroAction], budget: int, rng: np.random.Generator):
    """Run a uniform-random macro policy for ``budget`` primitive steps.

    Returns a list of episodes, each a list of ``(state, macro_index, next_state, reward)``;
    a final macro truncated by the end of its episode is left out.
    """
    episodes = []
    steps = 0
    while steps < budget:
        state = env.reset(int(rng.integers(2**31 - 1)))
        episode = []
        done = False
        while not done and steps < budget:
            idx = int(rng.integers(len(macros)))
            nxt, reward, done = env.step(macros[idx])
            steps += env.last_primitive_steps
            # a macro cut short by the episode's end is not a sample of its effect
            if env.last_primitive_steps == macros[idx].length:
                episode.append((state, idx, nxt, reward))
            state = nxt
        episodes.append(episode)
    return episodes


def model_entropy(env, episodes, classes: Optional[Iterable[int]] = None, t: int = 1) -> float:
    """Sum over transition families of the selected model's entropy."""
    from .worldmodel import ModelSet, ModelSpec

    spec = ModelSpec.selecting(env, classes=classes, t=t, learn_rewards=False)
    models = ModelSet(spec)
    for episode in episodes:
        models.observe_episode(episode)
    total = 0.0
    for family in models.transition_families():
        idx = family.select()
        total += family.entropies()[idx]
    return total


def learn_macro_actions(
    env,
    atomic_actions: Optional[Sequence[int]] = None,
    k_max: int = DEFAULT_K_MAX,
    threshold: float = DEFAULT_THRESHOLD,
    budget_per_eval: int = DEFAULT_BUDGET,
    rng_seed: int = 0,
    classes: Optional[Iterable[int]] = None,
    state: Optional[MacroLearnerState] = None,
    trace: Optional[list] = None,
) -> dict[int, MacroAction]:
    """Greedy no-op reduction under an entropy constraint.

    ``atomic_actions`` defaults to the environment's actions minus its no-op,
    which stays a single-step macro.  ``classes`` restricts the entropy to
    those object classes (default: the classes the agent controls).  Per
    iteration records are appended to ``trace`` when given.
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    noop = getattr(env, "noop_action", None)
    if atomic_actions is None:
        atomic_actions = [a for a in env.atomic_actions() if a != noop]
    if classes is None:
        classes = env.controlled_classes()
    rng = np.random.default_rng(rng_seed)
    if state is None:
        state = MacroLearnerState(
            macros={a: MacroAction(a, k_max) for a in atomic_actions},
            reducible={a for a in atomic_actions if k_max > 0},
            threshold=threshold,
            budget_per_eval=budget_per_eval,
        )
    order = list(atomic_actions)
    cursor = 0
    iteration = 0
    while state.reducible:
        # round-robin over the reducible set
        while order[cursor % len(order)] not in state.reducible:
            cursor += 1
        a = order[cursor % len(order)]
        cursor += 1
        old = state.macros[a]
        state.macros[a] = MacroAction(a, old.noops - 1)
        macros = macro_set(state.macros, noop, env.atomic_actions())
        episodes = collect_transitions(env, macros, budget_per_eval, rng)
        tau = model_entropy(env, episodes, classes)
        accepted = tau < threshold
        if not accepted:
            state.macros[a] = old
            state.reducible.discard(a)
        elif state.macros[a].noops == 0:
            state.reducible.discard(a)
        iteration += 1
        state.trace.append(
            {
                "iteration": iteration,
                "action": a,
                "noops": state.macros[a].noops,
                "accepted": accepted,
                "total_noops": state.total_noops,
                "total_entropy": tau,
            }
        )
        if trace is not None:
            trace.append(state.trace[-1])
        logger.debug("macro iteration %d: action %d tau=%.4f accepted=%s", iteration, a, tau, accepted)
    return dict(state.macros)
