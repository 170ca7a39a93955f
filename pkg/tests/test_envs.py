import random

import pytest

from soorl.envs import kernel_paddle as kp
from soorl.envs import mini_pitfall as mp
from soorl.envs import pong_prime as pp
from soorl.envs.base import EnvError, SteppedAfterDone
from soorl.macros import MacroAction
from soorl.models import Displacement, ObjectTransition, build_family
from soorl.oomdp import detect_interactions


def at_contact(row, py=12):
    """Ball one step from the player's contact column, meeting paddle row ``row``."""
    s = pp.initial_state(pp.make_serves(0))
    return s._replace(ball_x=pp.PLAYER_CONTACT_X + 1, ball_y=py + row - 1, ball_vy=1,
                      ball_dir=-1, player_y=py, hist=(pp.NOOP, pp.NOOP))


class TestPongGeometry:
    def test_paddle_proportions(self):
        assert pp.ENEMY_H == 3 * pp.PLAYER_H
        regions = [pp.player_region(r) for r in range(pp.PLAYER_H)]
        assert regions == [pp.FAST] * 3 + [pp.NORMAL] * 2 + [pp.SCORE]
        assert pp.ENEMY_EDGE_ROWS / pp.ENEMY_H == pytest.approx(0.1, abs=0.02)

    def test_lower_region_scores(self):
        s, r, done, event = pp.advance(at_contact(pp.LOWER_ROW), pp.NOOP, pp.make_serves(0))
        assert r == 1 and not s.ball_alive and event == (pp.LOWER_ROW, pp.SCORE)
        assert s.score_player == 1 and not done

    def test_top_region_returns_fast(self):
        s, r, _, event = pp.advance(at_contact(0), pp.NOOP, pp.make_serves(0))
        assert r == 0 and s.ball_dir == 1 and s.ball_fast and event == (0, pp.FAST)

    def test_middle_region_returns_normal(self):
        s, _, _, event = pp.advance(at_contact(3), pp.NOOP, pp.make_serves(0))
        assert s.ball_dir == 1 and not s.ball_fast and event == (3, pp.NORMAL)

    def test_unreturned_ball_loses_point(self):
        serves = pp.make_serves(0)
        s = at_contact(0, py=0)._replace(ball_y=25, ball_x=6)
        total = 0
        for _ in range(10):
            s, r, _, _ = pp.advance(s, pp.NOOP, serves)
            total += r
            if not s.ball_alive:
                break
        assert total == -1 and s.score_enemy == 1

    def test_three_ups_then_noop_follow_the_kernel(self):
        env = pp.PongPrime()
        env.reset(0)
        y0 = env.sim.player_y
        ys = []
        for a in (pp.UP, pp.UP, pp.UP, pp.NOOP):
            env.step(a)
            ys.append(env.sim.player_y)
        # kernel (0.5, 0.3, 0.2) scaled by 4 cells: -2, -3.2, -4, -2 after rounding
        assert [y - y0 for y in ys] == [-2, -5, -9, -11]

    def test_step_after_done(self):
        env = pp.PongPrime(points_to_win=1)
        env.reset(0)
        done = False
        while not done:
            _, _, done = env.step(pp.NOOP)
        with pytest.raises(SteppedAfterDone):
            env.step(pp.NOOP)

    def test_unknown_action(self):
        env = pp.PongPrime()
        with pytest.raises(EnvError):
            env.step(7)

    def test_render_json(self):
        env = pp.PongPrime()
        doc = env.render_json()
        assert doc["objects"][0]["class"] == pp.PLAYER and doc["score"] == [0, 0]

    def test_scoring_rate_sanity(self):
        assert 0.0 < pp.top_region_scoring_rate(300, seed=1) < 0.2


class TestPongNeedsHistory:
    def _records(self, t, steps=3000, seed=0):
        rng = random.Random(seed)
        env = pp.PongPrime()
        env.reset(seed)
        states, acts, out = [env.state()], [], []
        for _ in range(steps):
            a = rng.randrange(3)
            nxt, _, done = env.step(a)
            acts.append(a)
            if len(acts) >= t:
                hist = tuple(s.objects[0] for s in states[-t:])
                dy = nxt.objects[0].y - states[-1].objects[0].y
                out.append(ObjectTransition(hist, (None,) * t, tuple(acts[-t:]), Displacement(0, dy)))
            states.append(nxt)
            if done:
                break
        return out

    def test_one_step_is_ambiguous(self):
        fam = build_family("player", self._records(1))
        assert min(fam.entropies()) > 0

    def test_three_steps_are_deterministic(self):
        fam = build_family("player", self._records(3), t=3)
        assert min(fam.entropies()) == 0.0


class TestMiniPitfall:
    def test_goal(self):
        env = mp.MiniPitfall(start_x=mp.X_GOAL - 1)
        _, r, done = env.step(mp.RIGHT)
        assert (r, done, env.success()) == (1000, True, True)

    def test_walk_into_pit(self):
        lip = mp.HOLE.start - 1
        env = mp.MiniPitfall(start_x=lip)
        s, r, done = env.step(mp.RIGHT)
        assert done and r == 0 and env.outcome == "pit" and not s.objects[0].alive

    def test_jump_clears_pit(self):
        lip = mp.HOLE.start - 1
        env = mp.MiniPitfall(start_x=lip)
        s, r, done = env.step(MacroAction(mp.JUMP_RIGHT, 8))
        assert not done and r == 0
        assert s.objects[0].x == lip + 6 and s.objects[0].x not in mp.HOLE
        assert s.objects[0].y == mp.GROUND_Y and env.on_ground

    def test_jump_arc(self):
        env = mp.MiniPitfall(start_x=0)
        env.step(mp.JUMP_RIGHT)
        xs, ys = [], []
        for _ in range(8):
            s, _, _ = env.step(mp.NOOP)
            xs.append(s.objects[0].x)
            ys.append(s.objects[0].y)
        assert xs[-1] == 6 and ys[-1] == mp.GROUND_Y and min(ys) == mp.GROUND_Y - 3

    def test_ladder_is_terminal(self):
        env = mp.MiniPitfall(start_x=mp.LADDER_X)
        _, r, done = env.step(mp.DOWN)
        assert done and r == 0 and env.outcome == "underground"

    def test_left_end_is_terminal(self):
        env = mp.MiniPitfall(start_x=mp.X_MIN + 1)
        s, r, done = env.step(mp.LEFT)
        assert done and r == 0 and env.outcome == "left-end"

    def test_room_crossing(self):
        env = mp.MiniPitfall(start_x=0)
        env.step(mp.LEFT)
        assert env.room == -1 and not env.done
        assert env.render_json()["room"] == -1

    def test_cap(self):
        env = mp.MiniPitfall(step_cap=5, start_x=0)
        for _ in range(4):
            assert not env.step(mp.NOOP)[2]
        _, r, done = env.step(mp.NOOP)
        assert done and r == 0 and env.outcome == "cap"

    def test_scripted_path_reaches_goal(self):
        for start in (mp.START_X, -4, 6):
            env = mp.MiniPitfall(start_x=start)
            total = 0
            for a in mp.scripted_goal_path(start):
                assert not env.done
                _, r, done = env.step(a)
                total += r
            assert done and total == mp.GOAL_REWARD

    def test_interactions_visible(self):
        env = mp.MiniPitfall(start_x=mp.PIT_BOX[0] - 2)
        env.step(mp.RIGHT)
        s, _, _ = env.step(mp.RIGHT)
        assert (0, 1) in detect_interactions(s)
        env = mp.MiniPitfall(start_x=mp.FLAG_BOX[0] - 1)
        s, _, _ = env.step(mp.RIGHT)
        assert (0, 3) in detect_interactions(s)


def test_paddle_ball_contact_is_an_interaction():
    serves = pp.make_serves(0)
    s, _, _, _ = pp.advance(at_contact(3), pp.NOOP, serves)
    assert (0, 2) in detect_interactions(pp.to_factored(s))


@pytest.mark.parametrize("make", [pp.PongPrime, mp.MiniPitfall, kp.KernelPaddle])
def test_replay_is_byte_identical(make):
    rng = random.Random(11)
    for trial in range(100):
        n = len(make().action_names)
        seq = [rng.randrange(n) for _ in range(40)]

        def trace():
            env = make()
            env.reset(trial)
            out = [env.state().dumps()]
            for a in seq:
                if env.done:
                    break
                out.append(env.step(a)[0].dumps())
            return "\n".join(out)

        assert trace() == trace()


class TestKernelPaddle:
    def test_kernel_unrolled(self):
        env = kp.KernelPaddle(ring=64)
        env.reset(30)
        ys = [env.step(a)[0].objects[0].y for a in (kp.DOWN, kp.DOWN, kp.NOOP, kp.NOOP, kp.NOOP)]
        assert ys == [34, 41, 46, 49, 50]

    def test_empty_weights_rejected(self):
        with pytest.raises(ValueError):
            kp.KernelPaddle(weights=())
