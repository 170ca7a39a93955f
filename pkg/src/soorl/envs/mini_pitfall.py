"""Two-room side-scroller with a pit, a ladder, a goal flag and a dead end.

Global x runs from -40 (left edge of room -1) to 39 (right edge of room 0).
The player stands on the ground row; jumps are an 8-step arc that moves 6
cells sideways.  Landing inside the hole carries the player on to the first
solid cell beyond it, so any jump launched near the hole clears it.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np

from ..oomdp import FactoredState, ObjectClass, ObjectState
from .base import Environment

PLAYER, PIT, LADDER, FLAG, END = range(5)
LEFT, RIGHT, JUMP_LEFT, JUMP_RIGHT, DOWN, NOOP = range(6)

ROOM_WIDTH = 40
X_MIN = -ROOM_WIDTH
X_GOAL = ROOM_WIDTH - 1
GROUND_Y = 6
HOLE = range(18, 23)
LADDER_X = 10
START_X = 2
START_SPREAD = range(-4, 7)
JUMP_DX = (1, 1, 1, 0, 0, 1, 1, 1)
JUMP_DY = (-1, -1, -1, 0, 0, 1, 1, 1)
JUMP_LEFT_LIMIT = X_MIN + 1
GOAL_REWARD = 1000
STEP_CAP = 500

# Static boxes.  The pit box spans the approach cells from which a jump can
# end inside the hole, so those outcomes are all inside one interaction.
PIT_BOX = (13, GROUND_Y + 1, 15, 1)
LADDER_BOX = (LADDER_X, GROUND_Y + 1, 1, 3)
FLAG_BOX = (33, GROUND_Y, 7, 1)
END_BOX = (X_MIN - 6, GROUND_Y, 12, 1)


class MiniPitfall(Environment):
    name = "mini-pitfall"
    classes = (
        ObjectClass(PLAYER, "player"),
        ObjectClass(PIT, "pit"),
        ObjectClass(LADDER, "ladder"),
        ObjectClass(FLAG, "flag"),
        ObjectClass(END, "end"),
    )
    action_names = ("Left", "Right", "JumpLeft", "JumpRight", "Down", "NoOp")
    noop_action = NOOP
    agent_index = 0
    agent_class = PLAYER
    static_classes = frozenset({PIT, LADDER, FLAG, END})
    bounds = (X_MIN, 0, 2 * ROOM_WIDTH, GROUND_Y + 2)
    max_reward = GOAL_REWARD

    def __init__(self, step_cap: int = STEP_CAP, start_x: Optional[int] = None) -> None:
        super().__init__()
        self.step_cap = step_cap
        self.start_x = start_x
        self.reset(0)

    def reset(self, seed: int = 0) -> FactoredState:
        """Start on the ground; the seed picks the start cell unless one is fixed."""
        if self.start_x is None:
            rng = np.random.default_rng(seed)
            self.x = int(rng.integers(START_SPREAD.start, START_SPREAD.stop))
        else:
            self.x = self.start_x
        self.y = GROUND_Y
        self.jump_phase = 0
        self.jump_dir = 0
        self.alive = True
        self.steps = 0
        self.done = False
        self.outcome = ""
        return self.state()

    @property
    def room(self) -> int:
        return 0 if self.x >= 0 else -1

    @property
    def on_ground(self) -> bool:
        return self.jump_phase == 0

    def state(self) -> FactoredState:
        return FactoredState(
            (
                ObjectState(PLAYER, self.x, self.y, 1, 1, self.alive),
                ObjectState(PIT, *PIT_BOX),
                ObjectState(LADDER, *LADDER_BOX),
                ObjectState(FLAG, *FLAG_BOX),
                ObjectState(END, *END_BOX),
            ),
            self.steps,
        )

    def _finish(self, reason: str, reward: int = 0) -> tuple[int, bool]:
        self.alive = False
        self.outcome = reason
        return reward, True

    def _primitive(self, action: int) -> tuple[int, bool]:
        self.steps += 1
        reward, done = self._move(action)
        if not done and self.steps >= self.step_cap:
            self.outcome = "cap"
            done = True
        return reward, done

    def _move(self, action: int) -> tuple[int, bool]:
        if self.jump_phase > 0:
            return self._fly()
        if action in (JUMP_LEFT, JUMP_RIGHT):
            # launch step: the arc itself takes the next 8 steps
            self.jump_phase = len(JUMP_DX)
            self.jump_dir = 1 if action == JUMP_RIGHT else -1
            return 0, False
        if action in (LEFT, RIGHT):
            self.x += 1 if action == RIGHT else -1
            if self.x >= X_GOAL:
                return self._finish("goal", GOAL_REWARD)
            if self.x <= X_MIN:
                return self._finish("left-end")
            if self.x in HOLE:
                return self._finish("pit")
            return 0, False
        if action == DOWN and self.x == LADDER_X:
            return self._finish("underground")
        return 0, False

    def _fly(self) -> tuple[int, bool]:
        k = len(JUMP_DX) - self.jump_phase
        self.x = max(self.x + self.jump_dir * JUMP_DX[k], JUMP_LEFT_LIMIT)
        self.y += JUMP_DY[k]
        self.jump_phase -= 1
        if self.x >= X_GOAL:
            self.y = GROUND_Y
            self.jump_phase = 0
            return self._finish("goal", GOAL_REWARD)
        if self.jump_phase == 0:
            while self.x in HOLE:
                self.x += self.jump_dir
        return 0, False

    def success(self) -> bool:
        return self.outcome == "goal"

    @staticmethod
    def oracle_model_class() -> dict:
        # player alone: action only; player touching a static object: offset + action
        return {
            "fixed": {"standalone": 0, "pair": 3},
            "fixed_reward": {"standalone": 0, "pair": 3},
        }

    def extra_json(self) -> dict[str, Any]:
        return {
            "room": self.room,
            "on_ground": self.on_ground,
            "jump_phase": self.jump_phase,
            "outcome": self.outcome,
        }


def scripted_goal_path(start_x: int = START_X) -> list[int]:
    """Primitive actions that walk to the pit's lip, jump it, then walk to the flag.

    The jump's arc steps ignore their action; they are spelled as no-ops.
    """
    lip = HOLE.start - 1
    arc = [NOOP] * len(JUMP_DX)
    return [RIGHT] * (lip - start_x) + [JUMP_RIGHT] + arc + [RIGHT] * (X_GOAL - (lip + sum(JUMP_DX)))
