import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soorl.oomdp import (
    FactoredState,
    InteractionPair,
    ObjectState,
    bounding_box_overlap,
    detect_interactions,
    make_state,
    state_key,
)


def box(x, y, w=1, h=1, cls=0, alive=True):
    return ObjectState(cls, x, y, w, h, alive)


boxes = st.builds(
    ObjectState,
    class_id=st.integers(0, 3),
    x=st.integers(-20, 20),
    y=st.integers(-20, 20),
    w=st.integers(1, 6),
    h=st.integers(1, 6),
    alive=st.just(True),
)


class TestOverlap:
    def test_strict_overlap(self):
        assert bounding_box_overlap(box(0, 0, 2, 2), box(1, 1, 2, 2))

    def test_disjoint(self):
        assert not bounding_box_overlap(box(0, 0), box(5, 5))

    def test_touching_edges_collide(self):
        assert bounding_box_overlap(box(0, 0, 2, 2), box(2, 0, 2, 2))

    def test_one_cell_gap_is_disjoint(self):
        assert not bounding_box_overlap(box(0, 0, 2, 2), box(3, 0, 2, 2))

    @given(boxes, boxes)
    def test_symmetric(self, a, b):
        assert bounding_box_overlap(a, b) == bounding_box_overlap(b, a)

    @given(boxes, boxes)
    def test_matches_cell_interval_oracle(self, a, b):
        def hits(lo1, len1, lo2, len2):
            return max(lo1, lo2) <= min(lo1 + len1, lo2 + len2)

        expect = hits(a.x, a.w, b.x, b.w) and hits(a.y, a.h, b.y, b.h)
        assert bounding_box_overlap(a, b) == expect


def test_zero_extent_rejected():
    with pytest.raises(ValueError):
        ObjectState(0, 0, 0, 0, 1)


class TestDetectInteractions:
    def test_empty(self):
        assert detect_interactions(make_state([])) == []

    def test_pair(self):
        assert detect_interactions(make_state([box(0, 0, 2, 2), box(1, 1)])) == [(0, 1)]

    def test_hub_object(self):
        s = make_state([box(0, 0, 10, 1), box(0, 0), box(9, 0)])
        assert not bounding_box_overlap(s[1], s[2])
        assert detect_interactions(s) == [InteractionPair(0, 1), InteractionPair(0, 2)]

    def test_dead_objects_ignored(self):
        s = make_state([box(0, 0), box(0, 0, alive=False)])
        assert detect_interactions(s) == []

    @settings(max_examples=300)
    @given(st.lists(boxes, max_size=10))
    def test_brute_force_oracle(self, objs):
        got = detect_interactions(make_state(objs))
        want = [
            (i, j)
            for i, j in itertools.combinations(range(len(objs)), 2)
            if bounding_box_overlap(objs[i], objs[j])
        ]
        assert [tuple(p) for p in got] == want
        assert all(p.first < p.second for p in got)


class TestStateKey:
    def test_copy_equal(self):
        s = make_state([box(1, 2), box(3, 4, 2, 2, cls=1)])
        t = make_state([box(1, 2), box(3, 4, 2, 2, cls=1)])
        assert state_key(s) == state_key(t)

    def test_shift_differs(self):
        s = make_state([box(1, 2)])
        assert state_key(s) != state_key(make_state([box(2, 2)]))

    def test_step_index_ignored(self):
        s = make_state([box(1, 2)], step_index=0)
        assert state_key(s) == state_key(make_state([box(1, 2)], step_index=9))

    def test_random_pairs_key_equality_iff_field_equality(self):
        rng = random.Random(5)

        def rand_state():
            n = rng.randint(0, 3)
            objs = [
                ObjectState(rng.randint(0, 1), rng.randint(0, 2), rng.randint(0, 2),
                            rng.randint(1, 2), 1, rng.random() < 0.9)
                for _ in range(n)
            ]
            return make_state(objs, rng.randint(0, 5))

        for _ in range(10_000):
            a, b = rand_state(), rand_state()
            assert (state_key(a) == state_key(b)) == (a.objects == b.objects)


def test_json_round_trip_keeps_order():
    s = make_state([box(5, 1, cls=2), box(0, 0, 3, 2, cls=1, alive=False)], step_index=7)
    doc = json.loads(s.dumps())
    assert doc == {
        "step": 7,
        "objects": [
            {"class": 2, "x": 5, "y": 1, "w": 1, "h": 1, "alive": True},
            {"class": 1, "x": 0, "y": 0, "w": 3, "h": 2, "alive": False},
        ],
    }
    assert FactoredState.from_json(doc) == s
