"""Shared environment plumbing."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Optional, Sequence

from ..macros import MacroAction
from ..oomdp import FactoredState, ObjectClass


class EnvError(RuntimeError):
    """Raised for invalid use of an environment."""


class SteppedAfterDone(EnvError):
    """``step`` was called on an episode that already ended."""


class Environment(ABC):
    """Deterministic episodic environment emitting object-level states.

    ``step`` runs a macro action (the atomic action followed by its no-ops)
    and returns the summed reward.  Execution stops early if the episode
    ends mid-macro; ``last_primitive_steps`` reports how many steps ran.
    """

    name: str = "env"
    classes: tuple[ObjectClass, ...] = ()
    action_names: tuple[str, ...] = ()
    noop_action: Optional[int] = None
    agent_index: int = 0
    agent_class: int = 0
    static_classes: frozenset = frozenset()
    bounds: tuple[int, int, int, int] = (0, 0, 1, 1)  # x0, y0, width, height
    max_reward: float = 1.0

    def __init__(self) -> None:
        self.done = True
        self.last_primitive_steps = 0

    def atomic_actions(self) -> list[int]:
        return list(range(len(self.action_names)))

    def controlled_classes(self) -> list[int]:
        """Classes whose dynamics depend on the agent's actions directly."""
        return [self.agent_class]

    @abstractmethod
    def reset(self, seed: int = 0) -> FactoredState: ...

    @abstractmethod
    def _primitive(self, action: int) -> tuple[int, bool]:
        """Advance one step; return (reward, done)."""

    @abstractmethod
    def state(self) -> FactoredState: ...

    def step(self, macro: MacroAction | int) -> tuple[FactoredState, int, bool]:
        if self.done:
            raise SteppedAfterDone(f"{self.name}: step called after episode end")
        if not isinstance(macro, MacroAction):
            macro = MacroAction(int(macro), 0)
        if macro.atomic not in range(len(self.action_names)):
            raise EnvError(f"{self.name}: unknown action {macro.atomic}")
        total = 0
        steps = 0
        actions: Sequence[int] = [macro.atomic] + [self.noop_action] * macro.noops
        for a in actions:
            r, done = self._primitive(a)
            total += r
            steps += 1
            if done:
                self.done = True
                break
        self.last_primitive_steps = steps
        return self.state(), total, self.done

    def success(self) -> bool:
        """Whether the finished episode achieved the environment's goal."""
        return False

    def extra_json(self) -> dict[str, Any]:
        return {}

    def render_json(self) -> dict[str, Any]:
        out = self.state().to_json()
        out.update(self.extra_json())
        return out
