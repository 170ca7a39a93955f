"""Object-level state representation shared by every other module.

A state is an ordered list of objects, each with a class id, an integer
position and an integer bounding box.  Two objects interact when their
closed bounding boxes intersect.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

ATTRIBUTE_SCHEMA = ("x", "y", "w", "h")


@dataclass(frozen=True)
class ObjectClass:
    id: int
    name: str
    attribute_schema: tuple[str, ...] = ATTRIBUTE_SCHEMA


@dataclass(frozen=True, order=True)
class ObjectState:
    class_id: int
    x: int
    y: int
    w: int = 1
    h: int = 1
    alive: bool = True

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bounding box must be at least 1x1, got {self.w}x{self.h}")

    def moved(self, dx: int, dy: int, *, alive: bool | None = None) -> "ObjectState":
        return replace(
            self,
            x=self.x + dx,
            y=self.y + dy,
            alive=self.alive if alive is None else alive,
        )

    def as_tuple(self) -> tuple:
        return (self.class_id, self.x, self.y, self.w, self.h, self.alive)

    def to_json(self) -> dict[str, Any]:
        return {
            "class": self.class_id,
            "x": self.x,
            "y": self.y,
            "w": self.w,
            "h": self.h,
            "alive": self.alive,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ObjectState":
        return cls(
            class_id=int(data["class"]),
            x=int(data["x"]),
            y=int(data["y"]),
            w=int(data["w"]),
            h=int(data["h"]),
            alive=bool(data["alive"]),
        )


@dataclass(frozen=True)
class FactoredState:
    objects: tuple[ObjectState, ...] = ()
    step_index: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.objects, tuple):
            object.__setattr__(self, "objects", tuple(self.objects))
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")

    def __len__(self) -> int:
        return len(self.objects)

    def __getitem__(self, index: int) -> ObjectState:
        return self.objects[index]

    def replace_object(self, index: int, obj: ObjectState) -> "FactoredState":
        objects = list(self.objects)
        objects[index] = obj
        return FactoredState(tuple(objects), self.step_index)

    def to_json(self) -> dict[str, Any]:
        return {"step": self.step_index, "objects": [o.to_json() for o in self.objects]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "FactoredState":
        return cls(
            objects=tuple(ObjectState.from_json(o) for o in data["objects"]),
            step_index=int(data["step"]),
        )


class InteractionPair(NamedTuple):
    first: int
    second: int


def bounding_box_overlap(a: ObjectState, b: ObjectState) -> bool:
    """Closed-interval box intersection; touching edges count."""
    return (
        a.x <= b.x + b.w
        and b.x <= a.x + a.w
        and a.y <= b.y + b.h
        and b.y <= a.y + a.h
    )


def detect_interactions(state: FactoredState | Sequence[ObjectState]) -> list[InteractionPair]:
    objects = state.objects if isinstance(state, FactoredState) else tuple(state)
    pairs = []
    n = len(objects)
    for i in range(n):
        a = objects[i]
        if not a.alive:
            continue
        for j in range(i + 1, n):
            b = objects[j]
            if b.alive and bounding_box_overlap(a, b):
                pairs.append(InteractionPair(i, j))
    return pairs


def interaction_partners(objects: Sequence[ObjectState], index: int) -> list[int]:
    """Indices of alive objects interacting with ``objects[index]``, ascending."""
    me = objects[index]
    if not me.alive:
        return []
    return [
        j
        for j, other in enumerate(objects)
        if j != index and other.alive and bounding_box_overlap(me, other)
    ]


def state_key(state: FactoredState) -> Hashable:
    """Hashable identity of a state, ignoring its step index."""
    return tuple(o.as_tuple() for o in state.objects)


def make_state(objects: Iterable[ObjectState], step_index: int = 0) -> FactoredState:
    return FactoredState(tuple(objects), step_index)
