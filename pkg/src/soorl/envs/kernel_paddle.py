"""Synthetic single-paddle environment with a configurable action-history kernel.

The paddle's displacement each step is ``sum(w_i * move(a_{t-i}))`` with
integer weights, so the dynamics need exactly ``len(weights)`` actions of
history.  Position wraps around a small ring: no clipping hides the kernel,
and the few distinct positions keep location contexts densely sampled.
"""

from __future__ import annotations

from ..oomdp import FactoredState, ObjectClass, ObjectState
from .base import Environment

PADDLE = 0
UP, DOWN, NOOP = range(3)
MOVE = (-1, 1, 0)


class KernelPaddle(Environment):
    name = "kernel-paddle"
    classes = (ObjectClass(PADDLE, "paddle"),)
    action_names = ("Up", "Down", "NoOp")
    noop_action = NOOP
    agent_class = PADDLE

    def __init__(self, weights: tuple = (4, 3, 2, 1), ring: int = 8, step_cap: int = 200) -> None:
        super().__init__()
        if not weights:
            raise ValueError("weights must be non-empty")
        self.weights = tuple(int(w) for w in weights)
        self.ring = ring
        self.step_cap = step_cap
        self.bounds = (0, 0, 1, ring)
        self.reset(0)

    def reset(self, seed: int = 0) -> FactoredState:
        self.y = seed % self.ring
        self.hist = (NOOP,) * (len(self.weights) - 1)
        self.steps = 0
        self.done = False
        return self.state()

    def state(self) -> FactoredState:
        return FactoredState((ObjectState(PADDLE, 0, self.y),), self.steps)

    def _primitive(self, action: int) -> tuple[int, bool]:
        acts = (action,) + self.hist
        self.y = (self.y + sum(w * MOVE[a] for w, a in zip(self.weights, acts))) % self.ring
        self.hist = acts[: len(self.weights) - 1]
        self.steps += 1
        return 0, self.steps >= self.step_cap
