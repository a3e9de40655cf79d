"""Domain model for two-player recommendation bandits.

A round couples two decision makers: a machine observes a context x and
emits a recommendation r from a finite menu; a human observes r together
with a private context z and picks one of K actions; both then see the
chosen action and its payoff. A machine policy maps contexts to
recommendations, a human policy maps (recommendation, context) pairs to
actions, and a pair of them composes into a joint policy.

Conventions used everywhere in this package:

* actions, recommendations, policy indices and contexts are 0-based ints;
* contexts with vector structure are bit-packed into (arbitrary precision)
  integers, so a context is always a plain int;
* payoffs live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import math

import numpy as np

from .rng import MC_STREAM, stream


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SimulationError, ValueError):
    """A constructed object violates its declared constraints."""


class SupportError(SimulationError, LookupError):
    """A policy or environment was queried outside its finite support."""


class ConfigError(SimulationError, ValueError):
    """A run or experiment configuration is unusable."""


class NumericGuardError(SimulationError, ArithmeticError):
    """An importance weight would divide by zero."""


@dataclass(frozen=True)
class ActionSpace:
    """The human's action menu: actions are 0..count-1."""

    count: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValidationError(f"action space needs at least one action, got {self.count}")


REC_FINITE = "finite"
REC_ACTIONS = "actions"
REC_ACTIONS_PLUS_DEFER = "actions_plus_defer"


@dataclass(frozen=True)
class RecommendationSpace:
    """The machine's menu of recommendations, 0..count-1.

    kind "actions" means the menu is a copy of the action space, kind
    "actions_plus_defer" appends one defer symbol as the last index, and
    kind "finite" is an arbitrary finite menu with no action semantics.
    """

    kind: str
    count: int

    def __post_init__(self) -> None:
        if self.kind not in (REC_FINITE, REC_ACTIONS, REC_ACTIONS_PLUS_DEFER):
            raise ValidationError(f"unknown recommendation space kind {self.kind!r}")
        if self.count < 1:
            raise ValidationError("recommendation space must be nonempty")

    @classmethod
    def finite(cls, count: int) -> "RecommendationSpace":
        return cls(REC_FINITE, count)

    @classmethod
    def actions(cls, n_actions: int) -> "RecommendationSpace":
        return cls(REC_ACTIONS, n_actions)

    @classmethod
    def actions_plus_defer(cls, n_actions: int) -> "RecommendationSpace":
        return cls(REC_ACTIONS_PLUS_DEFER, n_actions + 1)

    @property
    def defer_index(self) -> int:
        if self.kind != REC_ACTIONS_PLUS_DEFER:
            raise ValidationError("this recommendation space has no defer symbol")
        return self.count - 1


@dataclass(frozen=True)
class MachinePolicy:
    """Deterministic map from machine context to recommendation."""

    name: str
    rule: Callable[[int], int]

    def __call__(self, x: int) -> int:
        return self.rule(x)

    @classmethod
    def from_table(cls, name: str, table: dict) -> "MachinePolicy":
        def rule(x: int, _table=dict(table)) -> int:
            try:
                return _table[x]
            except KeyError:
                raise SupportError(f"machine policy {name!r} has no entry for context {x}") from None

        return cls(name, rule)


@dataclass(frozen=True)
class HumanPolicy:
    """Deterministic map from (recommendation, human context) to action."""

    name: str
    rule: Callable[[int, int], int]

    def __call__(self, r: int, z: int) -> int:
        return self.rule(r, z)

    @classmethod
    def from_table(cls, name: str, table: dict) -> "HumanPolicy":
        def rule(r: int, z: int, _table=dict(table)) -> int:
            try:
                return _table[(r, z)]
            except KeyError:
                raise SupportError(f"human policy {name!r} has no entry for (r={r}, z={z})") from None

        return cls(name, rule)


def eval_joint(f: MachinePolicy, g: HumanPolicy, x: int, z: int) -> int:
    """Action chosen by the joint policy g(f(x), z)."""
    return g(f(x), z)


@dataclass(frozen=True)
class Instance:
    """A fully specified problem: environment plus both policy menus.

    exact_values is True when the environment can deliver exact joint
    policy values, either through a closed form supplied by its generator
    or by enumerating a finite support.
    """

    name: str
    env: object  # envgen.Environment; duck-typed to avoid a module cycle
    machine_policies: tuple
    human_policies: tuple
    actions: ActionSpace
    recs: RecommendationSpace

    def __post_init__(self) -> None:
        if not self.machine_policies:
            raise ValidationError("instance needs at least one machine policy")
        if not self.human_policies:
            raise ValidationError("instance needs at least one human policy")
        if getattr(self.env, "n_actions", self.actions.count) != self.actions.count:
            raise ValidationError("environment and action space disagree on K")

    @property
    def n_machine(self) -> int:
        return len(self.machine_policies)

    @property
    def n_human(self) -> int:
        return len(self.human_policies)

    @property
    def n_actions(self) -> int:
        return self.actions.count

    @property
    def shared_context(self) -> bool:
        """True when the environment always reveals the same context to both players."""
        return bool(getattr(self.env, "shared_context", False))

    @property
    def exact_values(self) -> bool:
        if getattr(self.env, "has_pair_values", False):
            return True
        return self.env.support() is not None

    def machine_advice(self, x: int) -> list:
        """Recommendation of every machine policy at context x."""
        return [f(x) for f in self.machine_policies]

    def human_advice(self, r: int, z: int) -> list:
        """Action of every human policy at (r, z)."""
        return [g(r, z) for g in self.human_policies]

    def validate(self) -> None:
        """Check ranges and totality as far as the environment is enumerable."""
        sup = self.env.support()
        if sup is None:
            return
        for prob, x, z, means in sup:
            if not (0.0 <= prob <= 1.0 + 1e-12):
                raise ValidationError(f"atom probability {prob} outside [0, 1]")
            if np.any(means < -1e-12) or np.any(means > 1.0 + 1e-12):
                raise ValidationError("mean payoffs must lie in [0, 1]")
            for f in self.machine_policies:
                r = f(x)
                if not (0 <= r < self.recs.count):
                    raise ValidationError(
                        f"machine policy {f.name!r} emits {r} outside the recommendation space at x={x}"
                    )
                for g in self.human_policies:
                    a = g(r, z)
                    if not (0 <= a < self.n_actions):
                        raise ValidationError(
                            f"human policy {g.name!r} emits {a} outside the action space at (r={r}, z={z})"
                        )


def _exact_value(inst: Instance, i: int, j: int) -> Optional[float]:
    env = inst.env
    if getattr(env, "has_pair_values", False):
        return float(env.pair_value(i, j))
    sup = env.support()
    if sup is None:
        return None
    f = inst.machine_policies[i]
    g = inst.human_policies[j]
    total = 0.0
    for prob, x, z, means in sup:
        total += prob * float(means[eval_joint(f, g, x, z)])
    return total


def expected_reward_with_error(
    inst: Instance,
    i: int,
    j: int,
    mc_samples: int = 1_000_000,
    mc_seed: int = 0,
) -> tuple[float, float]:
    """Joint policy value and its standard error.

    Exact paths (generator closed form, or enumeration of a finite
    support) report a standard error of 0. Otherwise the value is a Monte
    Carlo mean over mc_samples fresh environment draws.
    """
    if not (0 <= i < inst.n_machine and 0 <= j < inst.n_human):
        raise SupportError(f"policy pair ({i}, {j}) out of range")
    exact = _exact_value(inst, i, j)
    if exact is not None:
        return exact, 0.0
    if mc_samples <= 0:
        raise ConfigError("no exact oracle for this instance and mc_samples is not positive")
    rng = stream(mc_seed, MC_STREAM, i, j)
    f = inst.machine_policies[i]
    g = inst.human_policies[j]
    total = 0.0
    total_sq = 0.0
    for _ in range(mc_samples):
        x, z, payoffs = inst.env.sample(rng)
        y = float(payoffs[eval_joint(f, g, x, z)])
        total += y
        total_sq += y * y
    mean = total / mc_samples
    var = max(total_sq / mc_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / mc_samples)


def expected_reward(
    inst: Instance,
    i: int,
    j: int,
    mc_samples: int = 1_000_000,
    mc_seed: int = 0,
) -> float:
    """Expected payoff of the joint policy (machine i, human j)."""
    return expected_reward_with_error(inst, i, j, mc_samples, mc_seed)[0]


def value_matrix(inst: Instance, mc_samples: int = 1_000_000, mc_seed: int = 0) -> np.ndarray:
    """All pair values as an (n_machine, n_human) array."""
    out = np.empty((inst.n_machine, inst.n_human))
    for i in range(inst.n_machine):
        for j in range(inst.n_human):
            out[i, j] = expected_reward(inst, i, j, mc_samples, mc_seed)
    return out


def best_pair(inst: Instance, values: Optional[np.ndarray] = None) -> tuple[int, int, float]:
    """Optimal policy pair and its value; ties go to the smallest (i, j)."""
    if values is None:
        values = value_matrix(inst)
    flat = int(np.argmax(values))  # row-major argmax picks smallest i, then j
    i, j = divmod(flat, inst.n_human)
    return i, j, float(values[i, j])


BOUND_JOINT = "prop1_joint"
BOUND_P2EXP4 = "thm3_p2exp4"
BOUND_INDEP = "thm4_indep"

_BOUND_KINDS = (BOUND_JOINT, BOUND_P2EXP4, BOUND_INDEP)


def regret_bound(
    kind: str,
    horizon: int,
    n_actions: int,
    rec_count: int,
    n_machine: int,
    n_human: int,
) -> float:
    """Worst-case cumulative regret guarantee for the named algorithm family.

    prop1_joint:  sqrt(2 T K ln(N1 N2)), the joint full-information-about-
                  structure rate with no private contexts.
    thm3_p2exp4:  sqrt(2 T K N1 ln(N1 N2)), the directive-channel rate.
    thm4_indep:   sqrt(8 T max(K, R) ln(max(N1, N2))), two independent
                  learners under policy space independence.
    """
    if kind not in _BOUND_KINDS:
        raise ValidationError(f"unknown bound kind {kind!r}")
    for label, v in (
        ("horizon", horizon),
        ("n_actions", n_actions),
        ("rec_count", rec_count),
        ("n_machine", n_machine),
        ("n_human", n_human),
    ):
        if v <= 0:
            raise ValidationError(f"{label} must be positive, got {v}")
    t = float(horizon)
    if kind == BOUND_JOINT:
        return math.sqrt(2.0 * t * n_actions * math.log(n_machine * n_human))
    if kind == BOUND_P2EXP4:
        return math.sqrt(2.0 * t * n_actions * n_machine * math.log(n_machine * n_human))
    return math.sqrt(8.0 * t * max(n_actions, rec_count) * math.log(max(n_machine, n_human)))


@dataclass(frozen=True)
class RegretTrace:
    """Per-round regret accounting for one episode.

    accounting is "pseudo" when per-round values are exact conditional
    expected regrets, "hindsight" when they compare realized rewards to
    the best fixed pair on the realized sequence (used when no exact
    oracle exists, and for fixed-sequence replays).
    """

    per_round: np.ndarray
    cumulative: np.ndarray
    rewards: np.ndarray
    opt_value: float
    accounting: str = "pseudo"

    @property
    def final(self) -> float:
        return float(self.cumulative[-1]) if len(self.cumulative) else 0.0
