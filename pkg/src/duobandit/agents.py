"""Learning agents for the two-player protocol.

All exponential-weights agents keep log-space weights, normalize with a
subtract-max logsumexp after every update, and sample by inverse CDF over
cumulative weights in a fixed iteration order (row-major for matrices).
Reward estimates use the optimistic importance-weighted form

    yhat_k = 1 - 1{a == k} (1 - y) / (prob_k + gamma),

so unobserved actions are estimated at 1 and gamma = 0 keeps the
estimates exactly unbiased on the support of the action law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigError, Instance, NumericGuardError, ValidationError

MODE_FULL = "full"
MODE_NO_PRIVACY = "no_privacy_no_opacity"
MODE_DIRECTIVE = "directive"


def _logsumexp(a: np.ndarray) -> float:
    m = float(np.max(a))
    return m + math.log(float(np.sum(np.exp(a - m))))


class LogWeights:
    """Normalized weight vector or matrix stored as logs."""

    __slots__ = ("log",)

    def __init__(self, shape):
        n = int(np.prod(shape))
        if n < 1:
            raise ConfigError("need at least one expert")
        self.log = np.full(shape, -math.log(n))

    @property
    def shape(self):
        return self.log.shape

    def probs(self) -> np.ndarray:
        w = np.exp(self.log - np.max(self.log))
        return w / w.sum()

    def update(self, scaled_estimates: np.ndarray) -> None:
        """Multiply weights by exp(scaled_estimates) and renormalize."""
        self.log += scaled_estimates
        self.log -= _logsumexp(self.log)


def sample_index(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF draw over nonnegative weights using one uniform."""
    c = np.cumsum(weights)
    total = c[-1]
    if total <= 0.0:
        raise NumericGuardError("cannot sample from an all-zero weight vector")
    idx = int(np.searchsorted(c, u * total, side="right"))
    return min(idx, len(c) - 1)


# --- plain EXP4 over an arbitrary expert set ---------------------------------


def exp4_probs(weights: np.ndarray, advice: np.ndarray, n_actions: int) -> np.ndarray:
    """Advice-weighted action distribution p_k = sum_i w_i 1{advice_i = k}."""
    if len(weights) == 0:
        raise ConfigError("need at least one expert")
    return np.bincount(advice, weights=weights, minlength=n_actions).astype(float)


def exp4_act(
    weights: np.ndarray, advice: np.ndarray, n_actions: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Action distribution and one sample from it.

    Sampling draws an expert by inverse CDF and plays its advice, which
    realizes exactly the mixture law and lets two agents sharing a stream
    reproduce each other's draws.
    """
    p = exp4_probs(weights, advice, n_actions)
    expert = sample_index(weights, rng.random())
    return p, int(advice[expert])


def exp4_estimates(p: np.ndarray, action: int, reward: float, gamma: float) -> np.ndarray:
    denom = float(p[action]) + gamma
    if denom <= 0.0:
        raise NumericGuardError(f"estimate denominator {denom} is not positive")
    yhat = np.ones(len(p))
    yhat[action] = 1.0 - (1.0 - reward) / denom
    return yhat

def exp4_update(
    lw: LogWeights,
    advice: np.ndarray,
    action: int,
    p: np.ndarray,
    reward: float,
    eta: float,
    gamma: float = 0.0,
) -> None:
    """Exponential-weights step from one observed (action, reward)."""
    yhat = exp4_estimates(p, action, reward, gamma)
    lw.update(eta * yhat[advice])


# --- the directive-channel algorithm -----------------------------------------


def p2exp4_select_policy(Q: np.ndarray, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Draw the machine policy to direct, from the row marginal of Q."""
    q = Q.sum(axis=1)
    return sample_index(q, rng.random()), q


def p2exp4_action_probs(
    Q: np.ndarray, i: int, human_advice: np.ndarray, n_actions: int
) -> np.ndarray:
    """Action law given directed row i: the row of Q restricted to i,
    pushed through the human advice and renormalized."""
    row = Q[i]
    qi = float(row.sum())
    if qi <= 0.0:
        raise NumericGuardError("directed machine policy has zero probability mass")
    return np.bincount(human_advice, weights=row, minlength=n_actions) / qi


def p2exp4_act(
    Q: np.ndarray,
    i: int,
    human_advice: np.ndarray,
    n_actions: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    p = p2exp4_action_probs(Q, i, human_advice, n_actions)
    return p, sample_index(p, rng.random())


def p2exp4_estimates(
    q_i: float, p: np.ndarray, action: int, reward: float, gamma: float
) -> np.ndarray:
    """Importance weights use the joint probability of (directed row, action)."""
    denom = q_i * float(p[action]) + gamma
    if denom <= 0.0:
        raise NumericGuardError(f"estimate denominator {denom} is not positive")
    yhat = np.ones(len(p))
    yhat[action] = 1.0 - (1.0 - reward) / denom
    return yhat


def p2exp4_update(
    lw: LogWeights,
    i: int,
    human_advice: np.ndarray,
    action: int,
    p: np.ndarray,
    q_i: float,
    reward: float,
    eta: float,
    gamma: float = 0.0,
) -> None:
    """Update the pair weights: undirected rows are credited 1, the
    directed row is credited the estimate of the action its column's
    policy would have taken."""
    yhat = p2exp4_estimates(q_i, p, action, reward, gamma)
    est = np.ones(lw.shape)
    est[i] = yhat[human_advice]
    lw.update(eta * est)


# --- index strategy over policy pairs ----------------------------------------


class MossState:
    """Pull counts and reward sums for the pair-index strategy."""

    __slots__ = ("counts", "sums", "t")

    def __init__(self, n_arms: int):
        if n_arms < 1:
            raise ConfigError("need at least one arm")
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.sums = np.zeros(n_arms)
        self.t = 0

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.t += 1


def moss_index_values(sums: np.ndarray, counts: np.ndarray, horizon: int) -> np.ndarray:
    """Index mean + sqrt(max(ln(T / (N n)), 0) / n); requires all arms pulled."""
    n_arms = len(counts)
    means = sums / counts
    ratio = float(horizon) / (n_arms * counts)
    return means + np.sqrt(np.maximum(np.log(ratio), 0.0) / counts)


def moss_next_arm(state: MossState, horizon: int) -> int:
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    unpulled = np.flatnonzero(state.counts == 0)
    if len(unpulled):
        return int(unpulled[0])
    return int(np.argmax(moss_index_values(state.sums, state.counts, horizon)))


def moss_pair_step(
    state: MossState, n_machine: int, n_human: int, horizon: int
) -> tuple[int, int]:
    """Deterministic next policy pair; arm i decodes as (i // N2, i % N2).

    Both players replay this from the shared pull history, so separate
    replicas always agree without communicating.
    """
    if len(state.counts) != n_machine * n_human:
        raise ValidationError("state size does not match the policy grid")
    arm = moss_next_arm(state, horizon)
    return divmod(arm, n_human)


# --- joint exponential weights under shared contexts --------------------------


@dataclass(frozen=True)
class JointStep:
    """Laws (and optional samples) for one joint exponential-weights round."""

    rec_probs: np.ndarray
    cond_action_probs: np.ndarray
    action_probs: np.ndarray
    expert: Optional[int] = None
    rec: Optional[int] = None
    action: Optional[int] = None


def joint_exp4_step(
    Q: np.ndarray,
    x: int,
    z: int,
    machine_policies: Sequence,
    human_policies: Sequence,
    n_actions: int,
    rec_count: int,
    rng: Optional[np.random.Generator] = None,
) -> JointStep:
    """Two-stage law of the joint expert mixture at one context pair.

    The recommendation law weighs machine rows by their total mass; the
    conditional action law restricts Q to the rows recommending r and
    pushes their columns through the human policies. The action marginal
    equals the plain mixture over joint experts. Sampling, when a
    generator is supplied, draws one joint expert and plays it through
    both stages.
    """
    n2 = len(human_policies)
    machine_advice = [f(x) for f in machine_policies]
    rec_probs = np.zeros(rec_count)
    joint = np.zeros((rec_count, n_actions))
    human_cache: dict = {}
    for i, r in enumerate(machine_advice):
        row = Q[i]
        rec_probs[r] += row.sum()
        adv = human_cache.get(r)
        if adv is None:
            adv = np.array([g(r, z) for g in human_policies])
            human_cache[r] = adv
        joint[r] += np.bincount(adv, weights=row, minlength=n_actions)
    cond = np.zeros_like(joint)
    live = rec_probs > 0.0
    cond[live] = joint[live] / rec_probs[live, None]
    action_probs = joint.sum(axis=0)
    expert = rec = action = None
    if rng is not None:
        expert = sample_index(Q.ravel(), rng.random())
        i, j = divmod(expert, n2)
        rec = machine_advice[i]
        action = int(human_cache[rec][j])
    return JointStep(rec_probs, cond, action_probs, expert, rec, action)


def indep_pair_step(
    machine_weights: np.ndarray,
    human_weights: np.ndarray,
    machine_advice: np.ndarray,
    human_advice_for: Callable[[int], np.ndarray],
    n_actions: int,
    rec_count: int,
    machine_rng: np.random.Generator,
    human_rng: np.random.Generator,
):
    """Acting phase of one round with two independent learners.

    The machine treats recommendations as its own bandit actions; the
    human learns over actions after seeing the realized recommendation.
    Returns (rec law, rec, human advice, action law, action).
    """
    p_rec = exp4_probs(machine_weights, machine_advice, rec_count)
    rec = int(machine_advice[sample_index(machine_weights, machine_rng.random())])
    h_adv = human_advice_for(rec)
    p_act = exp4_probs(human_weights, h_adv, n_actions)
    action = int(h_adv[sample_index(human_weights, human_rng.random())])
    return p_rec, rec, h_adv, p_act, action


# --- engine-facing agent halves ----------------------------------------------


class MachineHalf:
    """Machine-side callbacks; sees only what its view exposes."""

    def begin(self, view, rng: np.random.Generator) -> None:
        pass

    def recommend(self, view) -> int:
        raise NotImplementedError

    def observe(self, view, action: int, reward: float) -> None:
        pass


class HumanHalf:
    """Human-side callbacks; sees only what its view exposes."""

    def begin(self, view, rng: np.random.Generator) -> None:
        pass

    def directive(self, view) -> int:
        raise NotImplementedError

    def act(self, view) -> int:
        raise NotImplementedError

    def observe(self, view, action: int, reward: float) -> None:
        pass


class Algorithm:
    """A matched pair of halves plus measurement hooks.

    play_law reads internal state of both halves to report the current
    distribution over policy pairs. That read belongs to the metrics
    layer, not to the in-protocol information flow the views police.
    """

    algo_id = "?"
    mode = MODE_FULL
    shared_stream = False

    def __init__(self, machine: MachineHalf, human: HumanHalf):
        self.machine = machine
        self.human = human

    def play_law(self) -> np.ndarray:
        raise NotImplementedError

    def play_value(self, values: np.ndarray) -> float:
        return float(np.sum(self.play_law() * values))


class _DirectedMachine(MachineHalf):
    def begin(self, view, rng) -> None:
        self._policies = view.policies

    def recommend(self, view) -> int:
        return self._policies[view.directive](view.x)


class _P2Exp4Human(HumanHalf):
    def __init__(self, eta: float, gamma: float):
        self.eta = eta
        self.gamma = gamma

    def begin(self, view, rng) -> None:
        self._rng = rng
        self._policies = view.policies
        self._k = view.n_actions
        self.lw = LogWeights((view.n_machine_policies, len(view.policies)))

    def directive(self, view) -> int:
        self._Q = self.lw.probs()
        i, q = p2exp4_select_policy(self._Q, self._rng)
        self._i = i
        self._qi = float(q[i])
        return i

    def act(self, view) -> int:
        self._advice = np.array([g(view.r, view.z) for g in self._policies])
        self._p, a = p2exp4_act(self._Q, self._i, self._advice, self._k, self._rng)
        return a

    def observe(self, view, action, reward) -> None:
        p2exp4_update(
            self.lw,
            self._i,
            self._advice,
            action,
            self._p,
            self._qi,
            reward,
            self.eta,
            self.gamma,
        )


class P2Exp4(Algorithm):
    """Directive-channel learner: the human owns the pair weights, directs
    the machine each round, and completes the action with the directed
    row's column mixture."""

    algo_id = "p2exp4"
    mode = MODE_DIRECTIVE

    def __init__(self, eta: float, gamma: float = 0.0):
        super().__init__(_DirectedMachine(), _P2Exp4Human(eta, gamma))

    def play_law(self) -> np.ndarray:
        return self.human.lw.probs()


class _JointReplica:
    """One player's replica of the shared joint-expert mixture.

    Both replicas are seeded from the same stream and draw once per
    round, so they pick the same joint expert without communicating.
    """

    def __init__(self, eta: float, gamma: float):
        self.eta = eta
        self.gamma = gamma

    def begin_shared(self, machine_policies, human_policies, n_actions, rng) -> None:
        self._pi1 = machine_policies
        self._pi2 = human_policies
        self._k = n_actions
        self._rng = rng
        self.lw = LogWeights(len(machine_policies) * len(human_policies))

    def draw(self, x: int, z: int) -> tuple[int, int, int]:
        """Advice table, marginal law, and this round's joint expert."""
        n2 = len(self._pi2)
        advice = np.empty(len(self._pi1) * n2, dtype=np.int64)
        cache: dict = {}
        for i, f in enumerate(self._pi1):
            r = f(x)
            adv = cache.get(r)
            if adv is None:
                adv = np.array([g(r, z) for g in self._pi2])
                cache[r] = adv
            advice[i * n2 : (i + 1) * n2] = adv
        self._advice = advice
        weights = self.lw.probs()
        self._p = exp4_probs(weights, advice, self._k)
        expert = sample_index(weights, self._rng.random())
        i, j = divmod(expert, n2)
        return expert, i, j

    def settle(self, action: int, reward: float) -> None:
        exp4_update(self.lw, self._advice, action, self._p, reward, self.eta, self.gamma)


class _JointMachine(MachineHalf):
    def __init__(self, replica: _JointReplica):
        self._rep = replica

    def begin(self, view, rng) -> None:
        self._rep.begin_shared(view.policies, view.human_policies, view.n_actions, rng)

    def recommend(self, view) -> int:
        _, i, _ = self._rep.draw(view.x, view.z)
        return self._rep._pi1[i](view.x)

    def observe(self, view, action, reward) -> None:
        self._rep.settle(action, reward)


class _JointHuman(HumanHalf):
    def __init__(self, replica: _JointReplica, complete_with_rec: bool):
        self._rep = replica
        self._follow_rec = complete_with_rec

    def begin(self, view, rng) -> None:
        self._rep.begin_shared(view.machine_policies, view.policies, view.n_actions, rng)

    def act(self, view) -> int:
        expert, i, j = self._rep.draw(view.x, view.z)
        if self._follow_rec:
            return self._rep._pi2[j](view.r, view.z)
        return int(self._rep._advice[expert])

    def observe(self, view, action, reward) -> None:
        self._rep.settle(action, reward)


class _JointBase(Algorithm):
    mode = MODE_NO_PRIVACY
    shared_stream = True

    def __init__(self, eta: float, gamma: float, follow_rec: bool):
        self._m_rep = _JointReplica(eta, gamma)
        self._h_rep = _JointReplica(eta, gamma)
        super().__init__(_JointMachine(self._m_rep), _JointHuman(self._h_rep, follow_rec))

    def play_law(self) -> np.ndarray:
        n2 = len(self._h_rep._pi2)
        return self._h_rep.lw.probs().reshape(-1, n2)


class JointExp4(_JointBase):
    """Protocol-respecting joint mixture: the machine recommends from the
    row marginal, the human completes through the recommended policy."""

    algo_id = "joint_exp4"

    def __init__(self, eta: float, gamma: float = 0.0):
        super().__init__(eta, gamma, follow_rec=True)


class PlainExp4(_JointBase):
    """Mixture over joint experts where the human picks the action
    directly and ignores the recommendation content."""

    algo_id = "exp4"

    def __init__(self, eta: float, gamma: float = 0.0):
        super().__init__(eta, gamma, follow_rec=False)


class _MossHalfBase:
    def _setup(self, view) -> None:
        self._n1 = view.n_machine_policies
        self._n2 = view.n_human_policies
        self._t_max = view.horizon
        self.state = MossState(self._n1 * self._n2)

    def _pair(self) -> tuple[int, int]:
        return moss_pair_step(self.state, self._n1, self._n2, self._t_max)


class _MossMachine(_MossHalfBase, MachineHalf):
    def begin(self, view, rng) -> None:
        self._setup(view)
        self._policies = view.policies

    def recommend(self, view) -> int:
        i, j = self._pair()
        self._arm = i * self._n2 + j
        return self._policies[i](view.x)

    def observe(self, view, action, reward) -> None:
        self.state.update(self._arm, reward)


class _MossHuman(_MossHalfBase, HumanHalf):
    def begin(self, view, rng) -> None:
        self._setup(view)
        self._policies = view.policies

    def act(self, view) -> int:
        i, j = self._pair()
        self._arm = i * self._n2 + j
        return self._policies[j](view.r, view.z)

    def observe(self, view, action, reward) -> None:
        self.state.update(self._arm, reward)


class MossPairs(Algorithm):
    """Deterministic index strategy on the grid of policy pairs, replayed
    independently by both players from the shared reward history."""

    algo_id = "moss_pairs"
    mode = MODE_FULL

    def __init__(self):
        super().__init__(_MossMachine(), _MossHuman())

    def _current_pair(self) -> tuple[int, int]:
        return self.machine._pair()

    def play_law(self) -> np.ndarray:
        law = np.zeros((self.machine._n1, self.machine._n2))
        law[self._current_pair()] = 1.0
        return law

    def play_value(self, values: np.ndarray) -> float:
        return float(values[self._current_pair()])


class _IndepMachine(MachineHalf):
    def __init__(self, eta: float, gamma: float):
        self.eta = eta
        self.gamma = gamma

    def begin(self, view, rng) -> None:
        self._rng = rng
        self._policies = view.policies
        self._r_count = view.rec_count
        self.lw = LogWeights(len(view.policies))

    def recommend(self, view) -> int:
        advice = np.array([f(view.x) for f in self._policies])
        weights = self.lw.probs()
        self._advice = advice
        self._p = exp4_probs(weights, advice, self._r_count)
        self._r = int(advice[sample_index(weights, self._rng.random())])
        return self._r

    def observe(self, view, action, reward) -> None:
        # the machine's own bandit action is the recommendation it made
        exp4_update(self.lw, self._advice, self._r, self._p, reward, self.eta, self.gamma)


class _IndepHuman(HumanHalf):
    def __init__(self, eta: float, gamma: float):
        self.eta = eta
        self.gamma = gamma

    def begin(self, view, rng) -> None:
        self._rng = rng
        self._policies = view.policies
        self._k = view.n_actions
        self.lw = LogWeights(len(view.policies))

    def act(self, view) -> int:
        advice = np.array([g(view.r, view.z) for g in self._policies])
        weights = self.lw.probs()
        self._advice = advice
        self._p = exp4_probs(weights, advice, self._k)
        return int(advice[sample_index(weights, self._rng.random())])

    def observe(self, view, action, reward) -> None:
        exp4_update(self.lw, self._advice, action, self._p, reward, self.eta, self.gamma)


class IndepPair(Algorithm):
    """Two oblivious learners: the machine bandits over recommendations,
    the human bandits over actions given the realized recommendation."""

    algo_id = "indep_pair"
    mode = MODE_FULL

    def __init__(self, eta_machine: float, eta_human: float, gamma: float = 0.0):
        super().__init__(_IndepMachine(eta_machine, gamma), _IndepHuman(eta_human, gamma))

    def play_law(self) -> np.ndarray:
        return np.outer(self.machine.lw.probs(), self.human.lw.probs())


ALGORITHM_IDS = ("p2exp4", "joint_exp4", "exp4", "moss_pairs", "indep_pair")

ALGORITHM_MODES = {
    "p2exp4": MODE_DIRECTIVE,
    "joint_exp4": MODE_NO_PRIVACY,
    "exp4": MODE_NO_PRIVACY,
    "moss_pairs": MODE_FULL,
    "indep_pair": MODE_FULL,
}


def default_params(algo_id: str, inst: Instance, horizon: int) -> dict:
    """Learning rates from the matching guarantee, gamma = 0."""
    n1, n2, k = inst.n_machine, inst.n_human, inst.n_actions
    r = inst.recs.count
    t = float(horizon)
    if algo_id == "p2exp4":
        return {"eta": math.sqrt(2.0 * math.log(n1 * n2) / (t * k * n1)), "gamma": 0.0}
    if algo_id in ("joint_exp4", "exp4"):
        return {"eta": math.sqrt(2.0 * math.log(n1 * n2) / (t * k)), "gamma": 0.0}
    if algo_id == "indep_pair":
        return {
            "eta_machine": math.sqrt(2.0 * math.log(n1) / (t * r)),
            "eta_human": math.sqrt(2.0 * math.log(n2) / (t * k)),
            "gamma": 0.0,
        }
    if algo_id == "moss_pairs":
        return {}
    raise ConfigError(f"unknown algorithm {algo_id!r}")


def make_algorithm(
    algo_id: str, inst: Instance, horizon: int, params: Optional[dict] = None
) -> Algorithm:
    """Build a fresh single-episode algorithm with resolved parameters."""
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    resolved = default_params(algo_id, inst, horizon)
    for key, val in (params or {}).items():
        if key not in resolved:
            raise ConfigError(f"algorithm {algo_id!r} takes no parameter {key!r}")
        resolved[key] = float(val)
    for key, val in resolved.items():
        if val < 0.0:
            raise ConfigError(f"parameter {key!r} must be nonnegative")
    if algo_id == "p2exp4":
        return P2Exp4(resolved["eta"], resolved["gamma"])
    if algo_id == "joint_exp4":
        return JointExp4(resolved["eta"], resolved["gamma"])
    if algo_id == "exp4":
        return PlainExp4(resolved["eta"], resolved["gamma"])
    if algo_id == "moss_pairs":
        return MossPairs()
    return IndepPair(resolved["eta_machine"], resolved["eta_human"], resolved["gamma"])
