import numpy as np
import pytest

from soorl.envs import mini_pitfall as mp
from soorl.macros import MacroAction
from soorl.models import Context, Displacement, ModelFamily, ObjectTransition, Reward
from soorl.oomdp import ObjectState, detect_interactions
from soorl.planning import make_optimistic
from soorl.worldmodel import (
    ModalResolver,
    ModelPosterior,
    ModelSet,
    ModelSpec,
    ObjectWorldModel,
    SampledResolver,
    declared_outcomes,
    is_pair_key,
)

A, B = Displacement(1, 0), Displacement(-1, 0)


def pitfall_models(**kw):
    env = mp.MiniPitfall()
    return env, ModelSet(ModelSpec.selecting(env, **{**env.oracle_model_class(), **kw}))


def one_step(env, action):
    s0 = env.state()
    s1, r, _ = env.step(action)
    return s0, s1, r


class TestRouting:
    def test_free_step_uses_standalone_families(self):
        _, models = pitfall_models()
        s0, s1, r = one_step(mp.MiniPitfall(start_x=0), mp.RIGHT)
        keys = [k for k, _ in models.route([s0.objects], [mp.RIGHT], s1.objects, r)]
        assert keys == [("T", mp.PLAYER), ("R", mp.PLAYER)]

    def test_contact_routes_to_pair_family(self):
        _, models = pitfall_models()
        env = mp.MiniPitfall(start_x=mp.PIT_BOX[0])
        s0, s1, r = one_step(env, mp.RIGHT)
        assert (0, 1) in detect_interactions(s0)
        models.observe([s0.objects], [mp.RIGHT], s1.objects, r)
        assert ("T", mp.PLAYER, mp.PIT) in models.families
        assert ("R", mp.PLAYER, mp.PIT) in models.families
        assert (mp.PLAYER, mp.PIT) in models.seen_pairs
        assert ("T", mp.PLAYER) not in models.families

    def test_one_transition_family_per_learned_object(self):
        env, models = pitfall_models()
        rng = np.random.default_rng(4)
        env.reset(3)
        state = env.state()
        while not env.done:
            nxt, r, _ = env.step(int(rng.integers(6)))
            routed = models.route([state.objects], [0], nxt.objects, r)
            learned = [o for o in state.objects if o.alive and models.spec.learns(o.class_id)]
            assert sum(k[0] == "T" for k, _ in routed) == len(learned)
            assert sum(k[0] == "R" for k, _ in routed) == 1
            state = nxt

    def test_static_objects_never_learned(self):
        _, models = pitfall_models()
        for cls in (mp.PIT, mp.LADDER, mp.FLAG, mp.END):
            assert not models.spec.learns(cls)


class TestOptimismFlip:
    def test_first_flag_contact(self):
        _, models = pitfall_models()
        wm_for = lambda: ObjectWorldModel(models, ModalResolver(), [MacroAction(a) for a in range(6)])
        env = mp.MiniPitfall(start_x=mp.FLAG_BOX[0])
        s0 = env.state()
        assert (0, 3) in detect_interactions(s0)
        opt = make_optimistic(wm_for(), r_max=5000.0)
        before = opt.step(wm_for().root([s0], []), mp.RIGHT)
        assert before.reward == 5000.0 and before.done

        s1, r, _ = env.step(mp.RIGHT)
        models.observe([s0.objects], [mp.RIGHT], s1.objects, r)
        after = make_optimistic(wm_for(), r_max=5000.0).step(wm_for().root([s0], []), mp.RIGHT)
        assert after.known and not after.novel_pair
        assert after.reward == 0.0 and after.next_state.objects[0].x == s0.objects[0].x + 1


class TestModalWorldModel:
    def test_replays_observed_dynamics(self):
        _, models = pitfall_models()
        s0, s1, r = one_step(mp.MiniPitfall(start_x=0), mp.RIGHT)
        models.observe([s0.objects], [mp.RIGHT], s1.objects, r)
        wm = ObjectWorldModel(models, ModalResolver(), [MacroAction(a) for a in range(6)])
        res = wm.step(wm.root([s0], []), mp.RIGHT)
        assert res.known and res.next_state.objects == s1.objects and res.reward == 0.0
        unknown = wm.step(wm.root([s0], []), mp.LEFT)
        assert not unknown.known


def family_with(counts, ctx=Context((), (0,))):
    fam = ModelFamily(("T", 0), include_action_in_null=True, fixed_index=0)
    for out, n in counts.items():
        for _ in range(n):
            fam.observe(ObjectTransition((ObjectState(0, 0, 0),), (None,), (0,), out))
    return fam, ctx


class TestSampledResolver:
    def test_dominant_outcome_sampled_almost_always(self):
        fam, ctx = family_with({A: 1000})
        declared = ((A, 0.1), (B, 0.1))
        rng = np.random.default_rng(0)
        hits = sum(
            SampledResolver(rng, 0.1, lambda f: declared).query(fam, ctx) == A for _ in range(5000)
        )
        assert hits / 5000 >= 0.99

    def test_draw_frequencies_match_predictive(self):
        fam, ctx = family_with({A: 3, B: 1})
        rng = np.random.default_rng(1)
        n = 20000
        hits = sum(SampledResolver(rng, 0.5, lambda f: ()).query(fam, ctx) == A for _ in range(n))
        assert hits / n == pytest.approx(3.5 / 5.0, abs=0.015)

    def test_unseen_context_draws_a_declared_outcome(self):
        fam, _ = family_with({A: 5})
        fresh = Context((), (9,))
        rng = np.random.default_rng(2)
        draws = {SampledResolver(rng, 0.5, lambda f: ((A, 5.5), (B, 0.5))).query(fam, fresh)
                 for _ in range(200)}
        assert draws == {A, B}

    def test_unseen_context_without_declared_is_unknown(self):
        fam, _ = family_with({A: 5})
        assert SampledResolver(np.random.default_rng(0), 0.5, lambda f: ()).query(
            fam, Context((), (9,))) is None

    def test_memoized_per_context(self):
        fam, ctx = family_with({A: 1, B: 1})
        res = SampledResolver(np.random.default_rng(3), 0.5, lambda f: ())
        first = res.query(fam, ctx)
        assert all(res.query(fam, ctx) == first for _ in range(50))

    def test_reproducible_with_same_rng_state(self):
        fam, ctx = family_with({A: 2, B: 2})
        draws = lambda: [SampledResolver(rng, 0.5, lambda f: ()).query(fam, ctx) for _ in range(30)]
        rng = np.random.default_rng(7)
        one = draws()
        rng = np.random.default_rng(7)
        assert draws() == one


def test_declared_outcomes_pool_the_class():
    _, models = pitfall_models()
    env = mp.MiniPitfall(start_x=0)
    for a in (mp.RIGHT, mp.RIGHT, mp.LEFT):
        s0, s1, r = one_step(env, a)
        models.observe([s0.objects], [a], s1.objects, r)
    got = dict(declared_outcomes(models, ("T", mp.PLAYER, mp.PIT), alpha=0.5))
    assert got == {Displacement(1, 0): 2.5, Displacement(-1, 0): 1.5}
    rewards = dict(declared_outcomes(models, ("R", mp.PLAYER), alpha=0.5))
    assert rewards == {Reward(0): 3.5, Reward(1000): 0.5}


def test_posterior_sample_and_modal_agree_when_data_is_certain():
    _, models = pitfall_models()
    env = mp.MiniPitfall(start_x=0)
    s0, s1, r = one_step(env, mp.RIGHT)
    models.observe([s0.objects], [mp.RIGHT], s1.objects, r)
    acts = [MacroAction(a) for a in range(6)]
    post = ModelPosterior(models, lambda res: ObjectWorldModel(models, res, acts), alpha=0.5,
                          declared=lambda fam: ())
    rng = np.random.default_rng(0)
    root = post.modal().root([s0], [])
    for _ in range(20):
        assert post.sample(rng).step(root, mp.RIGHT) == post.modal().step(root, mp.RIGHT)


def test_pair_key_shape():
    assert is_pair_key(("T", 0, 1)) and not is_pair_key(("T", 0))


def test_caches_refresh_after_new_data():
    _, models = pitfall_models()
    env = mp.MiniPitfall(start_x=0)
    s0, s1, r = one_step(env, mp.RIGHT)
    models.observe([s0.objects], [mp.RIGHT], s1.objects, r)
    acts = [MacroAction(a) for a in range(6)]
    post = ModelPosterior(models, lambda res: ObjectWorldModel(models, res, acts), alpha=0.5,
                          declared=lambda fam: ())
    rng = np.random.default_rng(0)
    root = post.modal().root([s0], [])
    assert not post.sample(rng).step(root, mp.LEFT).known
    assert not post.modal().step(root, mp.LEFT).known
    back = mp.MiniPitfall(start_x=0)
    t0, t1, rr = one_step(back, mp.LEFT)
    models.observe([t0.objects], [mp.LEFT], t1.objects, rr)
    assert post.sample(rng).step(root, mp.LEFT).known
    assert post.modal().step(root, mp.LEFT).next_state.objects[0].x == s0.objects[0].x - 1
