import math

import numpy as np
import pytest

import duobandit as db
from duobandit.agents import (
    ALGORITHM_IDS,
    ALGORITHM_MODES,
    LogWeights,
    MossState,
    default_params,
    exp4_act,
    exp4_estimates,
    exp4_probs,
    exp4_update,
    joint_exp4_step,
    make_algorithm,
    moss_index_values,
    moss_next_arm,
    moss_pair_step,
    p2exp4_act,
    p2exp4_action_probs,
    p2exp4_estimates,
    p2exp4_select_policy,
    p2exp4_update,
    sample_index,
)
from duobandit.core import ConfigError, NumericGuardError, ValidationError

from conftest import FakeRng


class TestLogWeights:
    def test_uniform_start(self):
        assert np.allclose(LogWeights(4).probs(), 0.25, atol=1e-15)
        lw = LogWeights((2, 3))
        assert lw.probs().shape == (2, 3)
        assert lw.probs().sum() == pytest.approx(1.0, abs=1e-12)

    def test_multiplicative_update(self):
        lw = LogWeights(4)
        lw.update(np.log(np.array([2.0, 1.0, 1.0, 1.0])))
        assert np.allclose(lw.probs(), [0.4, 0.2, 0.2, 0.2], atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            LogWeights(0)

    def test_long_run_stability(self):
        rng = np.random.default_rng(0)
        lw = LogWeights(3)
        for est in rng.normal(0.0, 0.05, size=(200_000, 3)):
            lw.update(est)
        # huge one-shot swings must not overflow the normalization
        lw.update(np.array([1000.0, -1000.0, 0.0]))
        lw.update(np.array([-1000.0, 1000.0, 0.0]))
        assert np.all(np.isfinite(lw.log))
        assert lw.probs().sum() == pytest.approx(1.0, abs=1e-9)
        assert lw.log.max() <= 0.0


class TestSampleIndex:
    def test_inverse_cdf_cells(self):
        w = np.array([0.2, 0.3, 0.5])
        assert sample_index(w, 0.0) == 0
        assert sample_index(w, 0.1999) == 0
        assert sample_index(w, 0.2) == 1  # boundary mass goes right
        assert sample_index(w, 0.4999) == 1
        assert sample_index(w, 0.999) == 2
        assert sample_index(w, 1.0) == 2

    def test_unnormalized_ok(self):
        assert sample_index(np.array([2.0, 6.0]), 0.24) == 0
        assert sample_index(np.array([2.0, 6.0]), 0.26) == 1

    def test_all_zero_guard(self):
        with pytest.raises(NumericGuardError):
            sample_index(np.zeros(3), 0.5)


class TestExp4Ops:
    def test_advice_weighted_mixture(self):
        p = exp4_probs(np.array([0.8, 0.2]), np.array([1, 0]), 2)
        assert np.allclose(p, [0.2, 0.8], atol=1e-15)

    def test_all_agree(self):
        p = exp4_probs(np.array([0.3, 0.7]), np.array([1, 1]), 3)
        assert np.allclose(p, [0.0, 1.0, 0.0], atol=1e-15)

    def test_act_plays_sampled_experts_advice(self):
        w = np.array([0.8, 0.2])
        advice = np.array([1, 0])
        p, a = exp4_act(w, advice, 2, FakeRng([0.5]))
        assert a == 1  # expert 0 sampled, its advice is action 1
        p, a = exp4_act(w, advice, 2, FakeRng([0.9]))
        assert a == 0

    def test_estimates_full_reward_is_flat(self):
        est = exp4_estimates(np.array([0.4, 0.6]), 1, 1.0, 0.0)
        assert np.allclose(est, 1.0, atol=1e-15)

    def test_estimates_zero_reward(self):
        est = exp4_estimates(np.array([0.25, 0.75]), 0, 0.0, 0.0)
        assert est[0] == pytest.approx(-3.0, abs=1e-12)
        assert est[1] == pytest.approx(1.0, abs=1e-15)

    def test_gamma_softens(self):
        est = exp4_estimates(np.array([0.5, 0.5]), 0, 0.0, 0.5)
        assert est[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_probability_guard(self):
        with pytest.raises(NumericGuardError):
            exp4_estimates(np.array([0.0, 1.0]), 0, 0.5, 0.0)

    def test_full_reward_leaves_weights_fixed(self):
        lw = LogWeights(3)
        lw.update(np.array([0.3, 0.0, -0.2]))
        before = lw.probs()
        exp4_update(lw, np.array([0, 1, 1]), 1, np.array([0.4, 0.6]), 1.0, 0.1)
        assert np.allclose(lw.probs(), before, atol=1e-12)

    def test_unbiased_over_action_law(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = int(rng.integers(2, 9))
            k = int(rng.integers(2, 5))
            w = rng.random(m) + 0.05
            w = w / w.sum()
            advice = rng.integers(0, k, size=m)
            payoffs = rng.random(k)
            p = exp4_probs(w, advice, k)
            mean = np.zeros(k)
            for a in range(k):
                if p[a] > 0.0:
                    mean += p[a] * exp4_estimates(p, a, payoffs[a], 0.0)
            assert np.max(np.abs(mean[advice] - payoffs[advice])) <= 1e-12


class TestP2Exp4Ops:
    def test_row_marginal_selection(self):
        Q = np.array([[0.1, 0.3], [0.2, 0.4]])
        i, q = p2exp4_select_policy(Q, FakeRng([0.3]))
        assert np.allclose(q, [0.4, 0.6], atol=1e-15)
        assert i == 0
        i, _ = p2exp4_select_policy(Q, FakeRng([0.41]))
        assert i == 1

    def test_row_conditional_law(self):
        Q = np.array([[0.1, 0.3], [0.2, 0.4]])
        p = p2exp4_action_probs(Q, 0, np.array([0, 1]), 2)
        assert np.allclose(p, [0.25, 0.75], atol=1e-12)
        p = p2exp4_action_probs(Q, 0, np.array([1, 1]), 2)
        assert np.allclose(p, [0.0, 1.0], atol=1e-15)

    def test_zero_row_guard(self):
        Q = np.array([[0.0, 0.0], [0.5, 0.5]])
        with pytest.raises(NumericGuardError):
            p2exp4_action_probs(Q, 0, np.array([0, 1]), 2)

    def test_joint_denominator(self):
        est = p2exp4_estimates(0.5, np.array([0.5, 0.5]), 0, 0.0, 0.0)
        assert est[0] == pytest.approx(-3.0, abs=1e-12)
        est = p2exp4_estimates(0.5, np.array([0.5, 0.5]), 0, 1.0, 0.0)
        assert np.allclose(est, 1.0, atol=1e-15)

    def test_full_reward_leaves_pair_weights_fixed(self):
        lw = LogWeights((2, 2))
        lw.update(np.array([[0.2, -0.1], [0.0, 0.3]]))
        before = lw.probs()
        p2exp4_update(lw, 0, np.array([0, 1]), 1, np.array([0.25, 0.75]), 0.4, 1.0, 0.1)
        assert np.allclose(lw.probs(), before, atol=1e-12)

    def test_undirected_rows_keep_ratios(self):
        lw = LogWeights((3, 2))
        lw.update(np.log(np.arange(1.0, 7.0).reshape(3, 2)))
        before = lw.probs()
        p2exp4_update(lw, 0, np.array([0, 1]), 0, np.array([0.3, 0.7]), 0.2, 0.0, 0.3)
        after = lw.probs()
        for row in (1, 2):
            assert after[row, 0] / after[row, 1] == pytest.approx(
                before[row, 0] / before[row, 1], rel=1e-12
            )

    def test_unbiased_over_directive_and_action(self):
        # averaging the pair estimate matrix over the realized (directive,
        # action) law returns each pair's true advice payoff exactly
        rng = np.random.default_rng(11)
        for _ in range(20):
            n1 = int(rng.integers(2, 5))
            n2 = int(rng.integers(1, 5))
            k = int(rng.integers(2, 5))
            Q = rng.random((n1, n2)) + 0.05
            Q = Q / Q.sum()
            advice = rng.integers(0, k, size=(n1, n2))
            payoffs = rng.random(k)
            q = Q.sum(axis=1)
            mean = np.zeros((n1, n2))
            for i in range(n1):
                p = p2exp4_action_probs(Q, i, advice[i], k)
                for a in range(k):
                    if p[a] <= 0.0:
                        continue
                    est = np.ones((n1, n2))
                    est[i] = p2exp4_estimates(q[i], p, a, payoffs[a], 0.0)[advice[i]]
                    mean += q[i] * p[a] * est
            target = payoffs[advice]
            assert np.max(np.abs(mean - target)) <= 1e-12

    def test_single_row_reduces_to_plain_exp4(self):
        # with one machine policy the directive is forced and the joint
        # importance weight collapses to the plain action probability
        rng = np.random.default_rng(3)
        n2, k, eta = 5, 3, 0.15
        pair = LogWeights((1, n2))
        flat = LogWeights(n2)
        for t in range(300):
            advice = rng.integers(0, k, size=n2)
            y = float(rng.random() < 0.4)
            Q = pair.probs()
            w = flat.probs()
            i, q = p2exp4_select_policy(Q, FakeRng([rng.random()]))
            assert i == 0 and q[0] == pytest.approx(1.0, abs=1e-12)
            p_pair = p2exp4_action_probs(Q, 0, advice, k)
            p_flat = exp4_probs(w, advice, k)
            assert np.allclose(p_pair, p_flat, atol=1e-12)
            a = sample_index(p_pair, rng.random())
            p2exp4_update(pair, 0, advice, a, p_pair, q[0], y, eta)
            exp4_update(flat, advice, a, p_flat, y, eta)
            assert np.allclose(pair.probs().ravel(), flat.probs(), atol=1e-12)


class TestMossOps:
    def test_index_value(self):
        idx = moss_index_values(np.full(4, 6.0), np.full(4, 10), 1000)
        assert idx[0] == pytest.approx(1.167352, abs=1e-6)

    def test_log_clamped_at_zero(self):
        idx = moss_index_values(np.array([50.0, 40.0]), np.array([100, 100]), 150)
        assert np.allclose(idx, [0.5, 0.4], atol=1e-12)

    def test_unpulled_first_in_order(self):
        state = MossState(3)
        order = []
        for _ in range(3):
            arm = moss_next_arm(state, 100)
            order.append(arm)
            state.update(arm, 0.0)
        assert order == [0, 1, 2]

    def test_tie_breaks_to_lowest(self):
        state = MossState(3)
        for arm in range(3):
            state.update(arm, 0.5)
        assert moss_next_arm(state, 100) == 0

    def test_pair_decode(self):
        state = MossState(12)
        for arm in range(12):
            state.update(arm, 1.0 if arm == 7 else 0.0)
        assert moss_pair_step(state, 4, 3, 12) == (2, 1)

    def test_bad_horizon(self):
        with pytest.raises(ConfigError):
            moss_next_arm(MossState(2), 0)

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError):
            moss_pair_step(MossState(5), 2, 3, 100)


class TestJointStep:
    def _setup(self):
        inst = db.make_random_tabular(3, 4, 2, env_seed=2)
        rng = np.random.default_rng(5)
        Q = rng.random((3, 4)) + 0.01
        Q = Q / Q.sum()
        prob, x, z, _ = inst.env.support()[0]
        return inst, Q, x, z

    def test_action_marginal_matches_flat_mixture(self):
        inst, Q, x, z = self._setup()
        step = joint_exp4_step(
            Q, x, z, inst.machine_policies, inst.human_policies, 2, inst.recs.count
        )
        joint_advice = np.array(
            [
                g(f(x), z)
                for f in inst.machine_policies
                for g in inst.human_policies
            ]
        )
        flat = exp4_probs(Q.ravel(), joint_advice, 2)
        assert np.allclose(step.action_probs, flat, atol=1e-12)

    def test_two_stage_law_recomposes(self):
        inst, Q, x, z = self._setup()
        step = joint_exp4_step(
            Q, x, z, inst.machine_policies, inst.human_policies, 2, inst.recs.count
        )
        assert step.rec_probs.sum() == pytest.approx(1.0, abs=1e-12)
        recomposed = (step.rec_probs[:, None] * step.cond_action_probs).sum(axis=0)
        assert np.allclose(recomposed, step.action_probs, atol=1e-12)

    def test_sampling_follows_drawn_expert(self):
        inst, Q, x, z = self._setup()
        u = 0.37
        step = joint_exp4_step(
            Q, x, z, inst.machine_policies, inst.human_policies, 2,
            inst.recs.count, rng=FakeRng([u]),
        )
        expert = sample_index(Q.ravel(), u)
        i, j = divmod(expert, 4)
        assert step.expert == expert
        assert step.rec == inst.machine_policies[i](x)
        assert step.action == inst.human_policies[j](step.rec, z)


class TestDefaults:
    def test_directive_rate(self):
        inst = db.make_private_info_lb((0.6, 0.5))
        p = default_params("p2exp4", inst, 10_000)
        assert p["eta"] == pytest.approx(0.005887, abs=1e-6)
        assert p["gamma"] == 0.0

    def test_joint_rate(self):
        inst = db.make_random_tabular(4, 8, 2, env_seed=0)
        p = default_params("joint_exp4", inst, 10_000)
        assert p["eta"] == pytest.approx(0.0186165, abs=1e-6)
        assert default_params("exp4", inst, 10_000) == p

    def test_independent_rates(self):
        inst = db.make_random_tabular(4, 8, 2, env_seed=0)
        p = default_params("indep_pair", inst, 10_000)
        assert p["eta_machine"] == pytest.approx(0.0117741, abs=1e-6)
        assert p["eta_human"] == pytest.approx(0.0144203, abs=1e-6)

    def test_defer_rate_uses_enlarged_menu(self):
        inst = db.make_random_defer(4, 2, env_seed=0)
        p = default_params("indep_pair", inst, 10_000)
        # three recommendation symbols: both actions plus defer
        assert p["eta_machine"] == pytest.approx(
            math.sqrt(2.0 * math.log(4) / (10_000 * 3)), abs=1e-12
        )

    def test_moss_has_no_knobs(self):
        inst = db.make_private_info_lb((0.6, 0.5))
        assert default_params("moss_pairs", inst, 100) == {}

    def test_unknown_id(self):
        inst = db.make_private_info_lb((0.6, 0.5))
        with pytest.raises(ConfigError):
            default_params("sarsa", inst, 100)


class TestMakeAlgorithm:
    def _inst(self):
        return db.make_private_info_lb((0.6, 0.5))

    def test_every_id_builds(self):
        inst = self._inst()
        for algo_id in ALGORITHM_IDS:
            algo = make_algorithm(algo_id, inst, 100)
            assert algo.algo_id == algo_id
            assert algo.mode == ALGORITHM_MODES[algo_id]

    def test_override(self):
        algo = make_algorithm("p2exp4", self._inst(), 100, {"eta": 0.25})
        assert algo.human.eta == 0.25

    def test_unknown_param(self):
        with pytest.raises(ConfigError):
            make_algorithm("p2exp4", self._inst(), 100, {"alpha": 0.1})

    def test_moss_rejects_rates(self):
        with pytest.raises(ConfigError):
            make_algorithm("moss_pairs", self._inst(), 100, {"eta": 0.1})

    def test_negative_param(self):
        with pytest.raises(ConfigError):
            make_algorithm("p2exp4", self._inst(), 100, {"eta": -0.1})

    def test_bad_horizon(self):
        with pytest.raises(ConfigError):
            make_algorithm("p2exp4", self._inst(), 0)


def test_directive_weights_concentrate_on_best_row():
    # frozen from a pilot study: mean terminal mass on the best machine
    # policy across 50 seeds was 0.995 (min 0.972), so 0.9 is a safe floor
    inst = db.make_private_info_lb((0.8, 0.5, 0.5))
    mass = []
    for seed in range(50):
        algo = make_algorithm("p2exp4", inst, 3000)
        db.run_episode(inst, algo, 3000, seed)
        q = algo.play_law().sum(axis=1)
        assert q.sum() == pytest.approx(1.0, abs=1e-9)
        mass.append(q[0])
    assert float(np.mean(mass)) > 0.9
