import itertools
import math

import numpy as np
import pytest

import duobandit as db
from duobandit.core import HumanPolicy, MachinePolicy, ValidationError
from duobandit.envgen import BernoulliArms, pack_bits

from conftest import enum_value_matrix


def conjecture_pair_oracle(env, i, j):
    """Expected payoff of pair (i, j) by exhaustive enumeration.

    Sums over recommendation profiles, the winning action, and the
    queried human policy's map draw, with the map law re-derived
    independently of the environment code.
    """
    n, d = env.n, env.delta
    total = 0.0
    for rec_bits in itertools.product((0, 1), repeat=n):
        p_rec = 0.5**n
        r_i = rec_bits[i]
        r_star = rec_bits[env.i_star]
        for w in (0, 1):
            p_w = 0.5
            if j == env.j_star:
                # follow lands on w with prob 0.5+d, contrary with 0.5-d
                for follow in (0, 1):
                    for contrary in (0, 1):
                        p_f = 0.5 + d if follow == w else 0.5 - d
                        p_c = 0.5 - d if contrary == w else 0.5 + d
                        action = follow if r_i == r_star else contrary
                        total += p_rec * p_w * p_f * p_c * (action == w)
            else:
                probs = (0.25 - d * d, 0.25 + d * d, 0.25 + d * d, 0.25 - d * d)
                for code in range(4):
                    action = (code & 1) if r_i == 0 else (code >> 1)
                    total += p_rec * p_w * probs[code] * (action == w)
    return total


def test_pack_bits_little_endian():
    assert pack_bits([0, 1, 0]) == 2
    assert pack_bits([1, 0, 0, 1]) == 9
    assert pack_bits([]) == 0


def test_bernoulli_arms_range():
    assert BernoulliArms.of((0.5, 1.0)).means == (0.5, 1.0)
    with pytest.raises(ValidationError):
        BernoulliArms.of((0.5, 1.2))


class TestTabular:
    def test_prob_sum_validation(self):
        with pytest.raises(ValidationError):
            db.make_tabular(
                [(0.6, 0, 0, (1.0, 0.0)), (0.6, 1, 1, (0.0, 1.0))],
                [MachinePolicy("c0", lambda x: 0)],
                [HumanPolicy("f", lambda r, z: r)],
            )

    def test_payoff_range_validation(self):
        with pytest.raises(ValidationError):
            db.make_tabular(
                [(1.0, 0, 0, (1.5, 0.0))],
                [MachinePolicy("c0", lambda x: 0)],
                [HumanPolicy("f", lambda r, z: r)],
            )

    def test_perfect_private_information(self):
        inst = db.make_tabular(
            [(0.5, 0, 0, (1.0, 0.0)), (0.5, 0, 1, (0.0, 1.0))],
            [MachinePolicy("c0", lambda x: 0)],
            [HumanPolicy("play_z", lambda r, z: z)],
        )
        assert db.expected_reward(inst, 0, 0) == pytest.approx(1.0, abs=1e-15)

    def test_bernoulli_atoms_sampled(self):
        inst = db.make_tabular(
            [(1.0, 0, 0, ("bernoulli", (0.3, 0.8)))],
            [MachinePolicy("c1", lambda x: 1)],
            [HumanPolicy("f", lambda r, z: r)],
        )
        assert db.expected_reward(inst, 0, 0) == pytest.approx(0.8, abs=1e-12)
        rng = np.random.default_rng(0)
        draws = [inst.env.sample(rng)[2][1] for _ in range(4000)]
        assert set(draws) <= {0.0, 1.0}
        assert abs(np.mean(draws) - 0.8) < 0.03


class TestPrivateInfoLB:
    def test_dimensions(self):
        inst = db.make_private_info_lb((0.6, 0.5))
        assert inst.n_machine == 2
        assert inst.n_human == 1
        assert inst.n_actions == 2
        assert inst.recs.count == 2

    def test_bit_decisions(self):
        inst = db.make_private_info_lb((0.6, 0.5))
        g = inst.human_policies[0]
        z = pack_bits([1, 0])
        assert g(1, z) == 0  # recommended arm's bit is 0 -> action 0 pays 0
        assert g(0, z) == 1  # bit 1 -> action 1 pays 1

    def test_exact_values(self):
        mu = (0.62, 0.5, 0.44, 0.51)
        inst = db.make_private_info_lb(mu)
        for i in range(4):
            assert db.expected_reward(inst, i, 0) == pytest.approx(mu[i], abs=1e-12)

    def test_sample_marginals(self):
        inst = db.make_private_info_lb((0.7, 0.4))
        rng = np.random.default_rng(1)
        hits = np.zeros(2)
        n = 4000
        for _ in range(n):
            x, z, payoffs = inst.env.sample(rng)
            assert x == 0
            hits += [(z >> 0) & 1, (z >> 1) & 1]
        assert abs(hits[0] / n - 0.7) < 0.03
        assert abs(hits[1] / n - 0.4) < 0.03


class TestOpacityLB:
    def test_geometry(self):
        inst = db.make_opacity_lb((0.6, 0.5), horizon=100, env_seed=4)
        assert inst.shared_context
        assert inst.env.context_count == 50 * 100 * 100
        # repeated-context chance over the horizon stays under 1%
        assert 100 * 100 / (2 * inst.env.context_count) <= 0.01

    def test_lazy_table_determinism(self):
        a = db.make_opacity_lb((0.6, 0.5), horizon=50, env_seed=7)
        b = db.make_opacity_lb((0.6, 0.5), horizon=50, env_seed=7)
        for x in (0, 123, 99_999):
            assert np.array_equal(a.env.reaction_bits(x), b.env.reaction_bits(x))
        c = db.make_opacity_lb((0.6, 0.5), horizon=50, env_seed=8)
        assert any(
            not np.array_equal(a.env.reaction_bits(x), c.env.reaction_bits(x))
            for x in range(40)
        )

    def test_closed_form_against_monte_carlo(self):
        inst = db.make_opacity_lb((0.6, 0.5), horizon=30, env_seed=0)
        assert db.expected_reward(inst, 0, 0) == pytest.approx(0.6, abs=1e-12)
        rng = np.random.default_rng(2)
        f, g = inst.machine_policies[0], inst.human_policies[0]
        n = 40_000
        total = 0.0
        for _ in range(n):
            x, z, payoffs = inst.env.sample(rng)
            total += payoffs[g(f(x), z)]
        se = math.sqrt(0.25 / n)
        assert abs(total / n - 0.6) < 4 * se


class TestRandomizedLB:
    def test_recommendations_distinct_per_round(self):
        inst = db.make_randomized_lb((0.55, 0.5, 0.5), horizon=40, env_seed=3)
        rng = np.random.default_rng(5)
        for _ in range(200):
            x, _, _ = inst.env.sample(rng)
            recs = [f(x) for f in inst.machine_policies]
            assert sorted(recs) == [0, 1, 2]

    def test_relabeling_determinism(self):
        a = db.make_randomized_lb((0.55, 0.5), horizon=20, env_seed=11)
        b = db.make_randomized_lb((0.55, 0.5), horizon=20, env_seed=11)
        for x in (0, 7, 4_321):
            pa, wa = a.env.relabeling(x)
            pb, wb = b.env.relabeling(x)
            assert np.array_equal(pa, pb) and wa == wb

    def test_planted_value_against_monte_carlo(self):
        inst = db.make_randomized_lb((0.55, 0.5, 0.5), horizon=30, env_seed=0)
        assert db.expected_reward(inst, 0, 0) == pytest.approx(0.55, abs=1e-12)
        f, g = inst.machine_policies[0], inst.human_policies[0]
        rng = np.random.default_rng(9)
        n = 40_000
        total = 0.0
        for _ in range(n):
            x, z, payoffs = inst.env.sample(rng)
            total += payoffs[db.eval_joint(f, g, x, z)]
        assert abs(total / n - 0.55) < 4 * math.sqrt(0.25 / n)


class TestConjecture:
    def test_delta_range(self):
        with pytest.raises(ValidationError):
            db.make_conjecture(2, 0.6)
        with pytest.raises(ValidationError):
            db.make_conjecture(2, 0.0)

    def test_map_probability_table(self):
        env = db.make_conjecture(3, 0.3, env_seed=1).env
        assert np.allclose(env.map_probs, [0.16, 0.34, 0.34, 0.16], atol=1e-15)

    def test_values_match_enumeration_oracle(self):
        inst = db.make_conjecture(3, 0.25, env_seed=2)
        env = inst.env
        for i in range(3):
            for j in range(3):
                want = conjecture_pair_oracle(env, i, j)
                assert db.expected_reward(inst, i, j) == pytest.approx(want, abs=1e-12)
        i, j, v = db.best_pair(inst)
        assert (i, j) == (env.i_star, env.j_star)
        assert v == pytest.approx(0.75, abs=1e-12)

    def test_map_marginal_monte_carlo(self):
        # every human policy's map, the planted one included, shows the
        # same symmetric marginal over the four codes
        delta = 0.3
        inst = db.make_conjecture(3, delta, env_seed=0)
        env = inst.env
        rng = np.random.default_rng(3)
        n = 150_000
        counts = np.zeros((3, 4))
        for _ in range(n):
            _, z, _ = env.sample(rng)
            for j in range(3):
                counts[j, (z >> (2 * j)) & 3] += 1
        expect = np.array([0.25 - delta**2, 0.25 + delta**2, 0.25 + delta**2, 0.25 - delta**2])
        for j in range(3):
            for c in range(4):
                p = expect[c]
                se = math.sqrt(p * (1 - p) / n)
                assert abs(counts[j, c] / n - p) < 3 * se, (j, c)


class TestAllocationAndDefer:
    def test_allocator_zero_machine_decides(self):
        base = db.make_random_tabular(3, 2, 2, env_seed=6)
        inst = db.make_allocation(
            base.env,
            allocator=lambda z: 0,
            human_rules=[lambda z: 0, lambda z: 1],
            machine_policies=list(base.machine_policies),
        )
        v = db.value_matrix(inst)
        assert np.allclose(v[:, 0], v[:, 1], atol=1e-15)

    def test_allocator_one_human_decides(self):
        base = db.make_random_tabular(3, 2, 2, env_seed=6)
        inst = db.make_allocation(
            base.env,
            allocator=lambda z: 1,
            human_rules=[lambda z: 0, lambda z: 1],
            machine_policies=list(base.machine_policies),
        )
        v = db.value_matrix(inst)
        assert np.allclose(v[0, :], v[1, :], atol=1e-15)
        assert np.allclose(v[0, :], v[2, :], atol=1e-15)

    def test_defer_extremes(self):
        base = db.make_random_tabular(2, 2, 2, env_seed=8)
        always = MachinePolicy("always_defer", lambda x: 2)
        never = MachinePolicy("never_defer", lambda x: 1)
        human_rule = lambda z: int(z % 2)
        inst = db.make_defer(base.env, human_rule, [always, never])
        v = db.value_matrix(inst)
        # machine-alone value for the constant action
        alone = sum(p * m[1] for p, x, z, m in base.env.support())
        human_alone = sum(p * m[human_rule(z)] for p, x, z, m in base.env.support())
        assert v[1, 0] == pytest.approx(alone, abs=1e-12)
        assert v[0, 0] == pytest.approx(human_alone, abs=1e-12)

    def test_random_families_validate(self):
        for inst in (
            db.make_random_tabular(3, 4, 2, env_seed=0),
            db.make_random_allocation(3, 4, 2, env_seed=0),
            db.make_random_defer(3, 2, env_seed=0),
        ):
            inst.validate()
            assert inst.exact_values


class TestIndependence:
    def test_coupled_pair_violation(self):
        inst = db.make_coupled_pair()
        assert np.allclose(db.value_matrix(inst), np.eye(2), atol=1e-15)
        rep = db.check_independence(inst)
        assert not rep.independent
        assert rep.worst_violation == pytest.approx(2.0, abs=1e-12)
        assert rep.witness is not None

    def test_degenerate_sides_trivially_independent(self):
        rep = db.check_independence(db.make_private_info_lb((0.6, 0.5)))
        assert rep.independent
        assert rep.worst_violation == pytest.approx(0.0, abs=1e-15)

    def test_allocation_and_defer_independent(self):
        for inst in (
            db.make_random_allocation(3, 4, 2, env_seed=1),
            db.make_random_allocation(4, 8, 2, env_seed=2),
            db.make_random_defer(4, 2, env_seed=1),
        ):
            rep = db.check_independence(inst)
            assert rep.independent, inst.name
            assert rep.worst_violation <= 1e-12
            assert rep.exact

    def test_symmetry_under_policy_reordering(self):
        inst = db.make_random_tabular(3, 3, 2, env_seed=4)
        flipped = db.Instance(
            name="flipped",
            env=inst.env,
            machine_policies=tuple(reversed(inst.machine_policies)),
            human_policies=tuple(reversed(inst.human_policies)),
            actions=inst.actions,
            recs=inst.recs,
        )
        a = db.check_independence(inst)
        b = db.check_independence(flipped)
        assert a.worst_violation == pytest.approx(b.worst_violation, abs=1e-15)

    def test_monte_carlo_path(self):
        # strip the closed form so the checker must sample
        inst = db.make_private_info_lb((0.6, 0.5))

        class NoOracle(type(inst.env)):
            has_pair_values = False

        env = NoOracle((inst.env.arms))
        noisy = db.Instance(
            name="mc",
            env=env,
            machine_policies=inst.machine_policies,
            human_policies=inst.human_policies,
            actions=inst.actions,
            recs=inst.recs,
        )
        rep = db.check_independence(noisy, mc_samples=20_000)
        assert not rep.exact
        assert rep.independent  # N2 = 1, differences collapse


class TestSpecRegistry:
    def test_tabular_from_spec(self):
        spec = {
            "generator": "tabular",
            "params": {
                "atoms": [
                    {"prob": 0.5, "x": 0, "z": 0, "payoff": [1.0, 0.0]},
                    {"prob": 0.5, "x": 1, "z": 1, "bernoulli": [0.2, 0.9]},
                ],
                "machine_tables": [{"0": 0, "1": 1}],
                "human_tables": [{"0,0": 0, "0,1": 0, "1,0": 1, "1,1": 1}],
            },
        }
        inst = db.instance_from_spec(spec)
        assert inst.n_machine == 1 and inst.n_human == 1
        want = 0.5 * 1.0 + 0.5 * 0.9
        assert db.expected_reward(inst, 0, 0) == pytest.approx(want, abs=1e-12)

    def test_unknown_generator(self):
        with pytest.raises(db.ConfigError):
            db.instance_from_spec({"generator": "nope"})

    def test_bad_params(self):
        with pytest.raises(db.ConfigError):
            db.instance_from_spec({"generator": "private_info_lb", "params": {"wat": 1}})

    def test_name_override(self):
        inst = db.instance_from_spec(
            {"generator": "coupled_pair", "name": "renamed"}
        )
        assert inst.name == "renamed"

    def test_spec_determinism(self):
        spec = {"generator": "conjecture", "params": {"n_policies": 3, "delta": 0.2}, "env_seed": 5}
        a = db.instance_from_spec(spec)
        b = db.instance_from_spec(spec)
        ra, rb = np.random.default_rng(1), np.random.default_rng(1)
        for _ in range(50):
            sa, sb = a.env.sample(ra), b.env.sample(rb)
            assert sa[0] == sb[0] and sa[1] == sb[1]
            assert np.array_equal(sa[2], sb[2])

    def test_every_generator_listed(self):
        assert set(db.GENERATORS) == {
            "tabular",
            "random_tabular",
            "private_info_lb",
            "opacity_lb",
            "randomized_lb",
            "conjecture",
            "random_allocation",
            "random_defer",
            "coupled_pair",
        }


def test_enum_matrix_agrees_on_random_instances():
    for seed in range(3):
        inst = db.make_random_tabular(3, 3, 2, env_seed=seed)
        assert np.allclose(db.value_matrix(inst), enum_value_matrix(inst), atol=1e-12)
