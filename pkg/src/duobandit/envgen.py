"""Environment generators and the policy-space independence checker.

An Environment is an i.i.d. process over rounds: each draw yields a
machine context x, a human context z, and a realized payoff vector over
the K actions. Generators bundle an environment with matched policy
menus into an Instance. Several constructions use lazily materialized
per-context tables; those are a pure function of (env_seed, context), so
equal seeds give identical environments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    ActionSpace,
    ConfigError,
    HumanPolicy,
    Instance,
    MachinePolicy,
    RecommendationSpace,
    SupportError,
    ValidationError,
    expected_reward,
    expected_reward_with_error,
    value_matrix,
)
from .rng import BUILD_STREAM, TABLE_STREAM, stream


def pack_bits(bits) -> int:
    """Pack an iterable of 0/1 values into an int, lowest index first."""
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size == 0:
        return 0
    return int.from_bytes(np.packbits(arr, bitorder="little").tobytes(), "little")


@dataclass(frozen=True)
class BernoulliArms:
    """Per-arm mean payoffs for the planted-arm constructions."""

    means: tuple

    def __post_init__(self) -> None:
        if len(self.means) < 1:
            raise ValidationError("need at least one arm")
        for m in self.means:
            if not (0.0 <= m <= 1.0):
                raise ValidationError(f"arm mean {m} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def of(cls, means) -> "BernoulliArms":
        if isinstance(means, cls):
            return means
        return cls(tuple(float(m) for m in means))


class Environment:
    """Base class; subclasses fix the per-round draw law."""

    n_actions: int = 0
    shared_context: bool = False
    has_pair_values: bool = False

    def sample(self, rng: np.random.Generator):
        """Draw one round: (x, z, realized payoff vector)."""
        raise NotImplementedError

    def support(self):
        """Finite support as [(prob, x, z, mean payoffs)], or None."""
        return None

    def pair_value(self, i: int, j: int) -> float:
        raise NotImplementedError


_DET = 0
_BERN = 1


class TabularEnv(Environment):
    """Explicit finite mixture of (x, z, payoff) atoms.

    Each atom carries either a deterministic payoff vector or per-action
    Bernoulli means; in both cases the atom's mean payoff vector is what
    enumeration-based oracles use.
    """

    def __init__(self, atoms: Sequence[tuple]):
        if not atoms:
            raise ValidationError("tabular environment needs at least one atom")
        probs, xs, zs, means, kinds = [], [], [], [], []
        for atom in atoms:
            prob, x, z, payoff = atom
            if isinstance(payoff, tuple) and payoff[0] == "bernoulli":
                vec = np.asarray(payoff[1], dtype=float)
                kinds.append(_BERN)
            else:
                vec = np.asarray(payoff, dtype=float)
                kinds.append(_DET)
            if vec.ndim != 1:
                raise ValidationError("payoff spec must be a flat vector")
            if np.any(vec < 0.0) or np.any(vec > 1.0):
                raise ValidationError("payoffs must lie in [0, 1]")
            probs.append(float(prob))
            xs.append(int(x))
            zs.append(int(z))
            means.append(vec)
        k = len(means[0])
        if any(len(v) != k for v in means):
            raise ValidationError("all atoms must share one action count")
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0.0):
            raise ValidationError("atom probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"atom probabilities sum to {p.sum()!r}, not 1")
        self.n_actions = k
        self.shared_context = all(x == z for x, z in zip(xs, zs))
        self._probs = p
        self._cum = np.cumsum(p)
        self._xs = xs
        self._zs = zs
        self._means = np.vstack(means)
        self._kinds = kinds

    def sample(self, rng: np.random.Generator):
        idx = int(np.searchsorted(self._cum, rng.random(), side="right"))
        idx = min(idx, len(self._xs) - 1)
        if self._kinds[idx] == _DET:
            payoffs = self._means[idx]
        else:
            payoffs = (rng.random(self.n_actions) < self._means[idx]).astype(float)
        return self._xs[idx], self._zs[idx], payoffs

    def support(self):
        return [
            (float(self._probs[i]), self._xs[i], self._zs[i], self._means[i])
            for i in range(len(self._xs))
        ]


class PrivateInfoEnv(Environment):
    """Planted-arm environment where the human privately sees all payoffs.

    z packs one Bernoulli draw per machine policy; recommending i and
    following the bit at position i earns exactly that draw, so the value
    of machine policy i is its planted mean.
    """

    has_pair_values = True

    def __init__(self, arms: BernoulliArms):
        self.arms = arms
        self.n_actions = 2
        self._mu = np.asarray(arms.means, dtype=float)
        self._payoffs = np.array([0.0, 1.0])

    def sample(self, rng: np.random.Generator):
        bits = rng.random(len(self._mu)) < self._mu
        return 0, pack_bits(bits), self._payoffs

    def pair_value(self, i: int, j: int) -> float:
        return float(self._mu[i])


class OpacityEnv(Environment):
    """Both players see a huge uniform context; the single human policy's
    reaction table is drawn lazily per context and never revealed to the
    machine side.

    context_count is large enough that a repeat within the horizon has
    probability at most 1% (birthday bound T^2 / (2M) with M = 50 T^2).
    """

    shared_context = True
    has_pair_values = True

    def __init__(self, arms: BernoulliArms, horizon: int, env_seed: int):
        if horizon < 1:
            raise ValidationError("horizon must be positive")
        self.arms = arms
        self.n_actions = 2
        self.env_seed = int(env_seed)
        self.context_count = 50 * horizon * horizon
        self._mu = np.asarray(arms.means, dtype=float)
        self._payoffs = np.array([0.0, 1.0])
        self._cache: dict = {}

    def reaction_bits(self, x: int) -> np.ndarray:
        bits = self._cache.get(x)
        if bits is None:
            g = stream(self.env_seed, TABLE_STREAM, x)
            bits = (g.random(len(self._mu)) < self._mu).astype(np.int8)
            self._cache[x] = bits
        return bits

    def sample(self, rng: np.random.Generator):
        x = int(rng.integers(self.context_count))
        return x, x, self._payoffs

    def pair_value(self, i: int, j: int) -> float:
        # expectation over both the lazy tables and the uniform context
        return float(self._mu[i])


class RandomizedEnv(Environment):
    """Planted arms behind a fresh uniform relabeling of recommendations.

    Per context (lazily): a permutation of the machine policies and a
    uniformly chosen winning action. Per round: Bernoulli payoff bits for
    every machine policy. z packs the bits in recommendation order plus
    the winning action, so the single human policy can turn any
    recommendation into the action paying that policy's bit.
    """

    has_pair_values = True

    def __init__(self, arms: BernoulliArms, horizon: int, env_seed: int):
        if horizon < 1:
            raise ValidationError("horizon must be positive")
        self.arms = arms
        self.n_actions = 2
        self.env_seed = int(env_seed)
        self.context_count = 50 * horizon * horizon
        self._mu = np.asarray(arms.means, dtype=float)
        self._payoff_rows = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        self._cache: dict = {}

    def relabeling(self, x: int):
        entry = self._cache.get(x)
        if entry is None:
            g = stream(self.env_seed, TABLE_STREAM, x)
            perm = g.permutation(len(self._mu))
            win = int(g.integers(2))
            entry = (perm, win)
            self._cache[x] = entry
        return entry

    def sample(self, rng: np.random.Generator):
        x = int(rng.integers(self.context_count))
        arm_bits = rng.random(len(self._mu)) < self._mu
        perm, win = self.relabeling(x)
        slot_bits = np.empty(len(self._mu), dtype=np.uint8)
        slot_bits[perm] = arm_bits  # bit at slot perm[i] is policy i's payoff
        z = (pack_bits(slot_bits) << 1) | win
        return x, z, self._payoff_rows[win]

    def pair_value(self, i: int, j: int) -> float:
        return float(self._mu[i])


class ConjectureEnv(Environment):
    """Planted optimal pair inside symmetric per-round recommendation maps.

    x packs one uniform recommendation bit per machine policy. Each human
    policy owns a per-round map from recommendation bits to actions,
    packed into z two bits at a time. The planted human policy's map is
    biased to follow the planted machine policy's recommendation toward
    the winning action with probability 0.5 + delta; every other map is
    drawn from the matched symmetric law over the four maps, so only the
    planted pair beats 0.5.
    """

    has_pair_values = True

    def __init__(self, n_policies: int, delta: float, env_seed: int):
        if n_policies < 2:
            raise ValidationError("need at least two policies per player")
        if not (0.0 < delta <= 0.5):
            raise ValidationError(f"delta must lie in (0, 0.5], got {delta}")
        self.n = int(n_policies)
        self.delta = float(delta)
        self.n_actions = 2
        self.env_seed = int(env_seed)
        g = stream(env_seed, BUILD_STREAM)
        self.i_star = int(g.integers(self.n))
        self.j_star = int(g.integers(self.n))
        d2 = delta * delta
        # map code u + 2v means: recommendation 0 -> action u, 1 -> action v
        self.map_probs = np.array([0.25 - d2, 0.25 + d2, 0.25 + d2, 0.25 - d2])
        self._map_cum = np.cumsum(self.map_probs)
        self._payoff_rows = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    def sample(self, rng: np.random.Generator):
        n, d = self.n, self.delta
        rec_bits = rng.integers(0, 2, size=n)
        w = int(rng.integers(2))
        x = pack_bits(rec_bits)
        r_star = int(rec_bits[self.i_star])
        u = rng.random(2)
        follow = w if u[0] < 0.5 + d else 1 - w
        contrary = w if u[1] < 0.5 - d else 1 - w
        star_map = [0, 0]
        star_map[r_star] = follow
        star_map[1 - r_star] = contrary
        codes = np.searchsorted(self._map_cum, rng.random(n), side="right")
        codes = np.minimum(codes, 3)
        z = 0
        for j in range(n):
            if j == self.j_star:
                code = star_map[0] + 2 * star_map[1]
            else:
                code = int(codes[j])
            z |= code << (2 * j)
        return x, z, self._payoff_rows[w]

    def pair_value(self, i: int, j: int) -> float:
        if i == self.i_star and j == self.j_star:
            return 0.5 + self.delta
        return 0.5


def make_tabular(
    atoms: Sequence[tuple],
    machine_policies: Sequence[MachinePolicy],
    human_policies: Sequence[HumanPolicy],
    rec_space: Optional[RecommendationSpace] = None,
    name: str = "tabular",
) -> Instance:
    """Instance over an explicit finite mixture of atoms.

    Validates probabilities, payoff ranges, and policy totality over the
    support before returning.
    """
    env = TabularEnv(atoms)
    if rec_space is None:
        rec_space = RecommendationSpace.actions(env.n_actions)
    inst = Instance(
        name=name,
        env=env,
        machine_policies=tuple(machine_policies),
        human_policies=tuple(human_policies),
        actions=ActionSpace(env.n_actions),
        recs=rec_space,
    )
    inst.validate()
    return inst


def make_private_info_lb(mu) -> Instance:
    """Hard instance for learning without the human's private payoffs.

    One machine policy per arm (constant recommendation), one human
    policy that plays the action matching the recommended arm's payoff
    bit. Machine policy i is worth exactly mu[i].
    """
    arms = BernoulliArms.of(mu)
    n = len(arms)
    if n < 2:
        raise ValidationError("need at least two arms")
    env = PrivateInfoEnv(arms)
    pi1 = tuple(
        MachinePolicy(f"recommend_{i}", (lambda x, _i=i: _i)) for i in range(n)
    )
    follow = HumanPolicy("follow_recommended_bit", lambda r, z: (z >> r) & 1)
    return Instance(
        name=f"private_info_lb_n{n}",
        env=env,
        machine_policies=pi1,
        human_policies=(follow,),
        actions=ActionSpace(2),
        recs=RecommendationSpace.finite(n),
    )


def make_opacity_lb(mu, horizon: int, env_seed: int = 0) -> Instance:
    """Hard instance for learning without seeing the human policy.

    Shared uniform context, constant-recommendation machine policies, and
    a single human policy whose per-context reaction table is lazily
    drawn with the planted arm means. Machine policy i is worth mu[i] in
    expectation over tables and contexts.
    """
    arms = BernoulliArms.of(mu)
    n = len(arms)
    if n < 2:
        raise ValidationError("need at least two arms")
    env = OpacityEnv(arms, horizon, env_seed)
    pi1 = tuple(
        MachinePolicy(f"recommend_{i}", (lambda x, _i=i: _i)) for i in range(n)
    )
    react = HumanPolicy(
        "context_reaction_table", lambda r, z, _env=env: int(_env.reaction_bits(z)[r])
    )
    return Instance(
        name=f"opacity_lb_n{n}",
        env=env,
        machine_policies=pi1,
        human_policies=(react,),
        actions=ActionSpace(2),
        recs=RecommendationSpace.finite(n),
    )


def make_randomized_lb(mu, horizon: int, env_seed: int = 0) -> Instance:
    """Planted arms behind per-context relabeled recommendations.

    Machine policy i recommends its fresh label under the context's
    permutation; the human policy converts any label back into that
    policy's payoff. Recommendations within a round are all distinct.
    """
    arms = BernoulliArms.of(mu)
    n = len(arms)
    if n < 2:
        raise ValidationError("need at least two arms")
    env = RandomizedEnv(arms, horizon, env_seed)
    pi1 = tuple(
        MachinePolicy(
            f"permuted_label_{i}", (lambda x, _i=i, _env=env: int(_env.relabeling(x)[0][_i]))
        )
        for i in range(n)
    )

    def decode(r: int, z: int) -> int:
        win = z & 1
        bit = (z >> (1 + r)) & 1
        return win if bit else 1 - win

    return Instance(
        name=f"randomized_lb_n{n}",
        env=env,
        machine_policies=pi1,
        human_policies=(HumanPolicy("payoff_bit_decoder", decode),),
        actions=ActionSpace(2),
        recs=RecommendationSpace.finite(n),
    )


def make_conjecture(n_policies: int, delta: float, env_seed: int = 0) -> Instance:
    """Symmetric planted-pair instance with per-round map contexts."""
    env = ConjectureEnv(n_policies, delta, env_seed)
    n = env.n
    pi1 = tuple(
        MachinePolicy(f"profile_bit_{i}", (lambda x, _i=i: (x >> _i) & 1)) for i in range(n)
    )
    pi2 = tuple(
        HumanPolicy(f"own_map_{j}", (lambda r, z, _j=j: ((z >> (2 * _j + r)) & 1)))
        for j in range(n)
    )
    return Instance(
        name=f"conjecture_n{n}_d{delta:g}",
        env=env,
        machine_policies=pi1,
        human_policies=pi2,
        actions=ActionSpace(2),
        recs=RecommendationSpace.actions(2),
    )


def make_allocation(
    base_env: Environment,
    allocator: Callable[[int], int],
    human_rules: Sequence[Callable[[int], int]],
    machine_policies: Sequence[MachinePolicy],
    name: str = "allocation",
) -> Instance:
    """Decision allocation: a fixed predicate over z says who decides.

    Where the allocator fires the human policy plays its own rule,
    elsewhere it follows the recommendation, so recommendations must be
    actions. This family always satisfies policy space independence.
    """
    if not human_rules:
        raise ValidationError("need at least one human rule")
    k = base_env.n_actions
    pi2 = []
    for j, rule in enumerate(human_rules):
        rule_name = getattr(rule, "name", f"rule_{j}")

        def g(r: int, z: int, _rule=rule) -> int:
            if not (0 <= r < k):
                raise SupportError(f"recommendation {r} is not an action")
            return _rule(z) if allocator(z) else r

        pi2.append(HumanPolicy(f"allocated_{rule_name}", g))
    return Instance(
        name=name,
        env=base_env,
        machine_policies=tuple(machine_policies),
        human_policies=tuple(pi2),
        actions=ActionSpace(k),
        recs=RecommendationSpace.actions(k),
    )


def make_defer(
    base_env: Environment,
    fixed_human: Callable[[int], int],
    machine_policies: Sequence[MachinePolicy],
    name: str = "defer",
) -> Instance:
    """Learning to defer: recommendations are actions plus a defer symbol.

    The single human policy executes the recommended action, except on
    the defer symbol where it consults the fixed human rule.
    """
    k = base_env.n_actions
    defer = k

    def g(r: int, z: int) -> int:
        if r == defer:
            return fixed_human(z)
        if not (0 <= r < k):
            raise SupportError(f"recommendation {r} outside actions plus defer")
        return r

    return Instance(
        name=name,
        env=base_env,
        machine_policies=tuple(machine_policies),
        human_policies=(HumanPolicy("execute_or_defer", g),),
        actions=ActionSpace(k),
        recs=RecommendationSpace.actions_plus_defer(k),
    )


def _random_tabular_env(
    g: np.random.Generator, n_atoms: int, n_actions: int
) -> TabularEnv:
    probs = g.random(n_atoms) + 0.2
    probs = probs / probs.sum()
    atoms = []
    for t in range(n_atoms):
        payoffs = g.random(n_actions)
        atoms.append((float(probs[t]), t, t, payoffs))
    return TabularEnv(atoms)


def make_random_tabular(
    n_machine: int,
    n_human: int,
    n_actions: int = 2,
    n_atoms: int = 6,
    env_seed: int = 0,
    rec_count: Optional[int] = None,
) -> Instance:
    """Random shared-context tabular instance with dense policy tables."""
    g = stream(env_seed, BUILD_STREAM, 1)
    env = _random_tabular_env(g, n_atoms, n_actions)
    r_count = n_actions if rec_count is None else int(rec_count)
    rec_space = (
        RecommendationSpace.actions(n_actions)
        if r_count == n_actions
        else RecommendationSpace.finite(r_count)
    )
    pi1 = tuple(
        MachinePolicy.from_table(
            f"table_{i}", {x: int(v) for x, v in enumerate(g.integers(r_count, size=n_atoms))}
        )
        for i in range(n_machine)
    )
    pi2 = []
    for j in range(n_human):
        table = {}
        for r in range(r_count):
            for z in range(n_atoms):
                table[(r, z)] = int(g.integers(n_actions))
        pi2.append(HumanPolicy.from_table(f"table_{j}", table))
    inst = Instance(
        name=f"random_tabular_{n_machine}x{n_human}_k{n_actions}_s{env_seed}",
        env=env,
        machine_policies=pi1,
        human_policies=tuple(pi2),
        actions=ActionSpace(n_actions),
        recs=rec_space,
    )
    inst.validate()
    return inst


def make_random_allocation(
    n_machine: int,
    n_human: int,
    n_actions: int = 2,
    n_atoms: int = 6,
    env_seed: int = 0,
) -> Instance:
    """Random allocation instance: random base, allocator, and human rules."""
    g = stream(env_seed, BUILD_STREAM, 2)
    env = _random_tabular_env(g, n_atoms, n_actions)
    pi1 = tuple(
        MachinePolicy.from_table(
            f"table_{i}", {x: int(v) for x, v in enumerate(g.integers(n_actions, size=n_atoms))}
        )
        for i in range(n_machine)
    )
    alloc_table = g.integers(2, size=n_atoms)
    rule_tables = [g.integers(n_actions, size=n_atoms) for _ in range(n_human)]

    def allocator(z: int, _t=alloc_table) -> int:
        return int(_t[z])

    rules = [
        (lambda z, _t=t: int(_t[z]))
        for t in rule_tables
    ]
    inst = make_allocation(
        env,
        allocator,
        rules,
        pi1,
        name=f"random_allocation_{n_machine}x{n_human}_k{n_actions}_s{env_seed}",
    )
    inst.validate()
    return inst


def make_random_defer(
    n_machine: int,
    n_actions: int = 2,
    n_atoms: int = 6,
    env_seed: int = 0,
) -> Instance:
    """Random defer instance: machine may execute or hand off."""
    g = stream(env_seed, BUILD_STREAM, 3)
    env = _random_tabular_env(g, n_atoms, n_actions)
    pi1 = tuple(
        MachinePolicy.from_table(
            f"table_{i}",
            {x: int(v) for x, v in enumerate(g.integers(n_actions + 1, size=n_atoms))},
        )
        for i in range(n_machine)
    )
    human_table = g.integers(n_actions, size=n_atoms)
    inst = make_defer(
        env,
        lambda z, _t=human_table: int(_t[z]),
        pi1,
        name=f"random_defer_{n_machine}_k{n_actions}_s{env_seed}",
    )
    inst.validate()
    return inst


def make_coupled_pair() -> Instance:
    """Smallest instance that violates policy space independence.

    Two machine and two human policies where matched pairs earn 1 and
    crossed pairs earn 0, all from a single atom.
    """
    atoms = [(1.0, 0, 0, np.array([1.0, 0.0]))]
    pi1 = tuple(MachinePolicy(f"say_{i}", (lambda x, _i=i: _i)) for i in range(2))
    pi2 = tuple(
        HumanPolicy(f"match_{j}", (lambda r, z, _j=j: 0 if r == _j else 1)) for j in range(2)
    )
    return make_tabular(atoms, pi1, pi2, name="coupled_pair")


@dataclass(frozen=True)
class IndependenceReport:
    """Outcome of a policy space independence check.

    witness is the first (f1, f2, g1, g2) index quadruple whose
    difference-of-differences exceeded the tolerance, or None.
    """

    independent: bool
    worst_violation: float
    witness: Optional[tuple]
    tol: float
    exact: bool


def check_independence(
    inst: Instance,
    tol: Optional[float] = None,
    mc_samples: int = 200_000,
    mc_seed: int = 0,
) -> IndependenceReport:
    """Measure how far an instance is from policy space independence.

    Independence means the value change from swapping the machine policy
    never depends on which human policy is in place. With an exact oracle
    the default tolerance is 1e-9; with Monte Carlo values each quadruple
    is tested against four combined standard errors.
    """
    n1, n2 = inst.n_machine, inst.n_human
    exact = inst.exact_values
    values = np.empty((n1, n2))
    errs = np.zeros((n1, n2))
    for i in range(n1):
        for j in range(n2):
            values[i, j], errs[i, j] = expected_reward_with_error(
                inst, i, j, mc_samples=mc_samples, mc_seed=mc_seed
            )
    base_tol = 1e-9 if tol is None else float(tol)
    worst = 0.0
    worst_tol = base_tol
    witness = None
    for f1 in range(n1):
        for f2 in range(n1):
            for g1 in range(n2):
                for g2 in range(n2):
                    v = abs(
                        (values[f1, g1] - values[f2, g1])
                        - (values[f1, g2] - values[f2, g2])
                    )
                    if exact or tol is not None:
                        q_tol = base_tol
                    else:
                        q_tol = 4.0 * math.sqrt(
                            errs[f1, g1] ** 2
                            + errs[f2, g1] ** 2
                            + errs[f1, g2] ** 2
                            + errs[f2, g2] ** 2
                        )
                    if v > worst:
                        worst = v
                    if q_tol > worst_tol:
                        worst_tol = q_tol
                    if witness is None and v > q_tol:
                        witness = (f1, f2, g1, g2)
    return IndependenceReport(
        independent=witness is None,
        worst_violation=worst,
        witness=witness,
        tol=worst_tol,
        exact=exact,
    )


def _build_tabular_from_spec(params: dict, env_seed: int) -> Instance:
    atoms = []
    for a in params["atoms"]:
        if "bernoulli" in a:
            payoff = ("bernoulli", np.asarray(a["bernoulli"], dtype=float))
        else:
            payoff = np.asarray(a["payoff"], dtype=float)
        atoms.append((a["prob"], a["x"], a["z"], payoff))
    pi1 = [
        MachinePolicy.from_table(f"table_{i}", {int(x): int(r) for x, r in t.items()})
        for i, t in enumerate(params["machine_tables"])
    ]
    pi2 = []
    for j, t in enumerate(params["human_tables"]):
        table = {}
        for key, a in t.items():
            r, z = key.split(",")
            table[(int(r), int(z))] = int(a)
        pi2.append(HumanPolicy.from_table(f"table_{j}", table))
    rec = params.get("rec")
    rec_space = RecommendationSpace(rec["kind"], rec["count"]) if rec else None
    return make_tabular(atoms, pi1, pi2, rec_space, name=params.get("name", "tabular"))


GENERATORS: dict = {
    "tabular": _build_tabular_from_spec,
    "random_tabular": lambda p, s: make_random_tabular(env_seed=s, **p),
    "private_info_lb": lambda p, s: make_private_info_lb(**p),
    "opacity_lb": lambda p, s: make_opacity_lb(env_seed=s, **p),
    "randomized_lb": lambda p, s: make_randomized_lb(env_seed=s, **p),
    "conjecture": lambda p, s: make_conjecture(env_seed=s, **p),
    "random_allocation": lambda p, s: make_random_allocation(env_seed=s, **p),
    "random_defer": lambda p, s: make_random_defer(env_seed=s, **p),
    "coupled_pair": lambda p, s: make_coupled_pair(**p),
}


def instance_from_spec(spec: dict) -> Instance:
    """Build an Instance from a {generator, params, env_seed} document."""
    if "generator" not in spec:
        raise ConfigError("instance spec is missing the generator field")
    gen = spec["generator"]
    if gen not in GENERATORS:
        raise ConfigError(f"unknown generator {gen!r}")
    params = dict(spec.get("params", {}))
    env_seed = int(spec.get("env_seed", 0))
    try:
        inst = GENERATORS[gen](params, env_seed)
    except TypeError as exc:
        raise ConfigError(f"bad params for generator {gen!r}: {exc}") from None
    name = spec.get("name")
    if name:
        inst = Instance(
            name=str(name),
            env=inst.env,
            machine_policies=inst.machine_policies,
            human_policies=inst.human_policies,
            actions=inst.actions,
            recs=inst.recs,
        )
    return inst
