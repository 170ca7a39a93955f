import pytest

from soorl.agent import (
    GridValueFunction,
    ReplayBuffer,
    SoorlAgent,
    SoorlConfig,
    TransitionRecord,
    exploration_bonus,
    train_value_function,
)
from soorl.envs import mini_pitfall as mp
from soorl.envs.base import Environment
from soorl.oomdp import FactoredState, ObjectClass, ObjectState
from soorl.planning import PlannerConfig


class OneShot(Environment):
    """Ends after one step with reward 7."""

    name = "one-shot"
    classes = (ObjectClass(0, "agent"),)
    action_names = ("Go", "Wait")
    noop_action = 1
    bounds = (0, 0, 4, 4)

    def reset(self, seed=0):
        self.done = False
        self.x = 0
        return self.state()

    def state(self):
        return FactoredState((ObjectState(0, self.x, 0),))

    def _primitive(self, action):
        self.x += 1
        return 7, True


class TestBonus:
    @pytest.mark.parametrize("n,beta,want", [(4, 1.0, 0.5), (1, 2.0, 2.0), (0, 1.0, 1.0)])
    def test_values(self, n, beta, want):
        assert exploration_bonus(n, beta) == want

    def test_strictly_decreasing(self):
        vals = [exploration_bonus(n, 1.0) for n in range(1, 200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_negative_count(self):
        with pytest.raises(ValueError):
            exploration_bonus(-1, 1.0)


class TestGridValueFunction:
    def test_empty_buffer_is_uniform_bonus_fixed_point(self):
        gv = train_value_function(ReplayBuffer(), lambda s: (0, 0), (0, 0, 10, 8), 3,
                                  grid=(5, 4), beta=1.0, gamma=0.9)
        assert gv.values == pytest.approx([1.0 / (1 - 0.9)] * 20, abs=1e-4)

    def test_four_cell_chain(self):
        gamma = 0.9
        gv = GridValueFunction((0, 0, 4, 1), 1, grid=(4, 1), beta=0.0, gamma=gamma)
        for x in range(3):
            gv.observe((x, 0), 0, (x + 1, 0), 0.0, False)
        gv.observe((3, 0), 0, None, 10.0, True)
        v = gv.train()
        assert v == pytest.approx([gamma ** 3 * 10, gamma ** 2 * 10, gamma * 10, 10.0], abs=1e-5)

    def test_absorbing_zero_reward(self):
        gv = GridValueFunction((0, 0, 4, 4), 2, grid=(2, 2), beta=0.0, gamma=0.95)
        for xy in [(0, 0), (3, 3), (0, 3), (3, 0)]:
            for a in range(2):
                gv.observe(xy, a, xy, 0.0, False)
        assert list(gv.train()) == [0.0] * 4

    def test_sweeps_contract(self):
        gv = GridValueFunction((0, 0, 8, 8), 2, grid=(4, 4), beta=1.0, gamma=0.95)
        for x in range(7):
            gv.observe((x, 0), 1, (x + 1, 0), 0.0, False)
            gv.observe((x + 1, 0), 0, (x, 0), 0.0, False)
        gv.observe((7, 0), 1, None, 5.0, True)
        gv.train()
        d = gv.sweep_deltas
        assert all(b <= a + 1e-12 for a, b in zip(d[1:], d[2:]))
        assert d[-1] < 1e-6

    def test_transition_rows_normalised(self):
        gv = GridValueFunction((0, 0, 4, 1), 1, grid=(4, 1), beta=0.0)
        gv.observe((0, 0), 0, (1, 0), 0.0, False)
        gv.observe((0, 0), 0, (2, 0), 0.0, False)
        row = gv.trans[(0, 0)]
        assert sum(row.values()) == 2 and set(row) == {1, 2}

    def test_cells_clip_to_grid(self):
        gv = GridValueFunction((-40, 0, 80, 8), 1, grid=(40, 8))
        assert gv.cell((-40, 0)) == 0 and gv.cell((39, 7)) == 40 * 8 - 1
        assert gv.cell((500, 500)) == gv.cell((39, 7))


def test_replay_buffer_rejects_cross_episode_records():
    buf = ReplayBuffer()
    s = FactoredState((ObjectState(0, 0, 0),))
    with pytest.raises(ValueError):
        buf.append(TransitionRecord(s, 0, s, 0.0, False, 0))
    buf.start_episode()
    buf.append(TransitionRecord(s, 0, s, 0.0, False, 0))
    buf.start_episode()
    with pytest.raises(ValueError):
        buf.append(TransitionRecord(s, 0, s, 0.0, False, 0))
    assert [len(e) for e in buf.episodes()] == [1, 0]


def test_one_step_episode():
    cfg = SoorlConfig(planner=PlannerConfig(depth_d=2, rollouts_L=10))
    stats = SoorlAgent(OneShot(), cfg, seed=0).run_episode(0)
    assert (stats.ret, stats.steps, stats.decisions) == (7, 1, 1)


def pitfall_config(**planner):
    p = dict(depth_d=3, rollouts_L=500, ucb_c=300.0, gamma=0.9, r_max=1000.0, expand_one=True)
    p.update(planner)
    return SoorlConfig(planner=PlannerConfig(**p), grid=(40, 8), alpha=0.1,
                       model_class="oracle", macros={mp.JUMP_LEFT: 8, mp.JUMP_RIGHT: 8})


def test_optimism_reaches_goal_within_episode_budget():
    agent = SoorlAgent(mp.MiniPitfall(), pitfall_config(), seed=0)
    assert any(agent.run_episode(e).reached_goal for e in range(30))


def test_identical_seeds_identical_learning():
    def run():
        agent = SoorlAgent(mp.MiniPitfall(), pitfall_config(rollouts_L=100), seed=3)
        stats = [agent.run_episode(e) for e in range(3)]
        return stats, [(r.state.dumps(), r.action, r.reward) for r in agent.buffer.records]

    assert run() == run()


def test_standalone_only_without_interactions():
    agent = SoorlAgent(mp.MiniPitfall(start_x=0), pitfall_config(rollouts_L=5), seed=0)
    env = agent.env
    s0 = env.reset(0)
    s1, r, done = env.step(mp.RIGHT)
    agent.update_models([s0], [mp.RIGHT], s1, r, done)
    assert set(agent.model.models.families) == {("T", mp.PLAYER), ("R", mp.PLAYER)}
    assert agent.visit_count((0, mp.GROUND_Y)) == 1


def test_trace_sink_records_each_decision():
    agent = SoorlAgent(OneShot(), SoorlConfig(planner=PlannerConfig(depth_d=2, rollouts_L=4)), seed=0)
    agent.trace_sink = []
    agent.run_episode(0)
    (entry,) = agent.trace_sink
    assert entry["decision"] == 0 and len(entry["rollouts"]) == 4
    depth, key, action, ret = entry["rollouts"][0][0][0]
    assert depth == 0 and len(key) == 12
