"""Round-based interaction engine with enforced information barriers.

One round runs: the machine sees its context and recommends; the human
sees the recommendation plus its own context and acts; both observe the
chosen action and payoff. Agent halves only ever touch the engine's view
objects, and a view raises BarrierViolation on any access its mode
forbids. Under "full" barriers each side sees only its own context and
policy menu; "no_privacy_no_opacity" shares contexts and menus (never
learner state); "directive" adds a one-way human-to-machine channel
carrying a machine policy index each round.

Randomness: the environment, the machine agent, and the human agent draw
from separate keyed substreams of the episode seed, so a run is a pure
function of (instance, algorithm, horizon, seed). Algorithms that declare
shared_stream give both halves replicas of one substream, modeling a
jointly agreed random source.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import agents
from .agents import (
    MODE_DIRECTIVE,
    MODE_NO_PRIVACY,
    Algorithm,
    LogWeights,
    make_algorithm,
    p2exp4_action_probs,
    p2exp4_update,
    exp4_estimates,
    sample_index,
)
from .core import (
    BOUND_INDEP,
    BOUND_JOINT,
    BOUND_P2EXP4,
    ConfigError,
    Instance,
    RegretTrace,
    SimulationError,
    ValidationError,
    regret_bound,
    value_matrix,
)
from .rng import ENV_STREAM, HUMAN_STREAM, MACHINE_STREAM, SHARED_STREAM, stream


class BarrierViolation(SimulationError):
    """An agent callback reached for information its side may not see."""


class ModeError(SimulationError):
    """Algorithm and instance (or engine mode) are incompatible."""


class SinkError(SimulationError):
    """An output file could not be written completely."""


class MachineView:
    """What the machine-side callbacks are allowed to see."""

    __slots__ = (
        "_mode",
        "horizon",
        "n_actions",
        "rec_count",
        "n_machine_policies",
        "n_human_policies",
        "history",
        "t",
        "x",
        "_policies",
        "_human_policies",
        "_z",
        "_directive",
    )

    def __init__(self, inst: Instance, mode: str, horizon: int):
        self._mode = mode
        self.horizon = horizon
        self.n_actions = inst.n_actions
        self.rec_count = inst.recs.count
        self.n_machine_policies = inst.n_machine
        self.n_human_policies = inst.n_human
        self.history = []
        self.t = 0
        self.x = None
        self._policies = inst.machine_policies
        self._human_policies = inst.human_policies
        self._z = None
        self._directive = None

    @property
    def policies(self):
        return self._policies

    @property
    def z(self):
        if self._mode == MODE_NO_PRIVACY:
            return self._z
        raise BarrierViolation("machine side may not read the human context")

    @property
    def human_policies(self):
        if self._mode == MODE_NO_PRIVACY:
            return self._human_policies
        raise BarrierViolation("machine side may not inspect the human policy menu")

    @property
    def human_state(self):
        raise BarrierViolation("human learner state is never shared")

    @property
    def directive(self):
        if self._mode != MODE_DIRECTIVE:
            raise ModeError("no directive channel outside directive mode")
        return self._directive


class HumanView:
    """What the human-side callbacks are allowed to see."""

    __slots__ = (
        "_mode",
        "horizon",
        "n_actions",
        "rec_count",
        "n_machine_policies",
        "n_human_policies",
        "history",
        "t",
        "r",
        "z",
        "_policies",
        "_machine_policies",
        "_x",
    )

    def __init__(self, inst: Instance, mode: str, horizon: int):
        self._mode = mode
        self.horizon = horizon
        self.n_actions = inst.n_actions
        self.rec_count = inst.recs.count
        self.n_machine_policies = inst.n_machine
        self.n_human_policies = inst.n_human
        self.history = []
        self.t = 0
        self.r = None
        self.z = None
        self._policies = inst.human_policies
        self._machine_policies = inst.machine_policies
        self._x = None

    @property
    def policies(self):
        return self._policies

    @property
    def x(self):
        if self._mode == MODE_NO_PRIVACY:
            return self._x
        raise BarrierViolation("human side may not read the machine context")

    @property
    def machine_policies(self):
        if self._mode == MODE_NO_PRIVACY:
            return self._machine_policies
        raise BarrierViolation("human side may not inspect the machine policy menu")

    @property
    def machine_state(self):
        raise BarrierViolation("machine learner state is never shared")


class RoundRecord(NamedTuple):
    t: int
    directive: Optional[int]
    x: int
    r: int
    z: int
    a: int
    y: float
    pseudo_regret: float
    cum_pseudo_regret: float


def round_pseudo_regret(
    inst: Instance, play_law: np.ndarray, values: Optional[np.ndarray] = None
) -> float:
    """Expected one-round regret of playing pairs by play_law."""
    law = np.asarray(play_law, dtype=float)
    if law.shape != (inst.n_machine, inst.n_human):
        raise ValidationError("play law must be an (n_machine, n_human) matrix")
    if np.any(law < 0.0) or abs(law.sum() - 1.0) > 1e-9:
        raise ValidationError("play law must be a probability distribution")
    if values is None:
        values = value_matrix(inst)
    return max(float(values.max() - np.sum(law * values)), 0.0)


def _resolve_algorithm(
    inst: Instance, algo, horizon: int, params: Optional[dict]
) -> Algorithm:
    if isinstance(algo, str):
        return make_algorithm(algo, inst, horizon, params)
    if params is not None:
        raise ConfigError("params apply only when the algorithm is given by id")
    return algo


def _check_mode(inst: Instance, algo_obj: Algorithm) -> None:
    if algo_obj.mode == MODE_NO_PRIVACY and not inst.shared_context:
        raise ModeError(
            f"algorithm {algo_obj.algo_id!r} needs a shared-context instance, "
            f"but {inst.name!r} reveals different contexts to the two players"
        )


def _run_rounds(
    inst: Instance,
    algo_obj: Algorithm,
    horizon: int,
    seed: int,
    draws,
    record: bool,
    values: Optional[np.ndarray],
):
    """Shared episode loop; draws() yields one (x, z, payoffs) per call."""
    mode = algo_obj.mode
    _check_mode(inst, algo_obj)
    exact = values is not None
    n1, n2, k = inst.n_machine, inst.n_human, inst.n_actions
    rec_count = inst.recs.count

    if algo_obj.shared_stream:
        machine_rng = stream(seed, SHARED_STREAM)
        human_rng = stream(seed, SHARED_STREAM)
    else:
        machine_rng = stream(seed, MACHINE_STREAM)
        human_rng = stream(seed, HUMAN_STREAM)

    mview = MachineView(inst, mode, horizon)
    hview = HumanView(inst, mode, horizon)
    algo_obj.machine.begin(mview, machine_rng)
    algo_obj.human.begin(hview, human_rng)

    opt = float(values.max()) if exact else 0.0
    per_round = np.empty(horizon)
    rewards = np.empty(horizon)
    records: list = []
    cum = 0.0
    prev_hind = 0.0
    pair_cum = None if exact else np.zeros((n1, n2))
    reward_cum = 0.0
    directive_mode = mode == MODE_DIRECTIVE

    for t in range(1, horizon + 1):
        if exact:
            pr = max(opt - algo_obj.play_value(values), 0.0)
        x, z, payoffs = draws()
        mview.t = t
        hview.t = t
        if directive_mode:
            d = algo_obj.human.directive(hview)
            if not (0 <= d < n1):
                raise ValidationError(f"directive {d} is not a machine policy index")
        else:
            d = None
        mview.x = x
        mview._z = z
        mview._directive = d
        r = algo_obj.machine.recommend(mview)
        if not (0 <= r < rec_count):
            raise ValidationError(f"recommendation {r} outside the menu at round {t}")
        hview.r = r
        hview.z = z
        hview._x = x
        a = algo_obj.human.act(hview)
        if not (0 <= a < k):
            raise ValidationError(f"action {a} outside the action space at round {t}")
        y = float(payoffs[a])
        mview.history.append((x, r, a, y, d))
        hview.history.append((d, r, z, a, y))
        algo_obj.machine.observe(mview, a, y)
        algo_obj.human.observe(hview, a, y)
        rewards[t - 1] = y
        reward_cum += y
        if not exact:
            for i, f in enumerate(inst.machine_policies):
                ri = f(x)
                for j, g in enumerate(inst.human_policies):
                    pair_cum[i, j] += float(payoffs[g(ri, z)])
            hind = float(pair_cum.max()) - reward_cum
            pr = hind - prev_hind
            prev_hind = hind
        cum += pr
        per_round[t - 1] = pr
        if record:
            records.append(RoundRecord(t, d, x, r, z, a, y, pr, cum))

    if exact:
        trace = RegretTrace(per_round, np.cumsum(per_round), rewards, opt, "pseudo")
    else:
        trace = RegretTrace(
            per_round,
            np.cumsum(per_round),
            rewards,
            float(pair_cum.max()) / horizon,
            "hindsight",
        )
    return records, trace


def run_episode(
    inst: Instance,
    algo,
    horizon: int,
    seed: int,
    params: Optional[dict] = None,
    record: bool = True,
    values: Optional[np.ndarray] = None,
):
    """Run one episode; returns (round records, regret trace).

    Regret accounting is exact conditional expected regret whenever the
    instance has an exact value oracle, otherwise hindsight regret
    against the best fixed pair on the realized sequence (flagged on the
    trace). Identical arguments give identical results.
    """
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    algo_obj = _resolve_algorithm(inst, algo, horizon, params)
    if values is None and inst.exact_values:
        values = value_matrix(inst)
    env_rng = stream(seed, ENV_STREAM)
    return _run_rounds(
        inst, algo_obj, horizon, seed, lambda: inst.env.sample(env_rng), record, values
    )


def run_fixed_sequence(
    inst: Instance,
    sequence: Sequence[tuple],
    algo,
    horizon: int,
    seed: int,
    params: Optional[dict] = None,
    record: bool = True,
):
    """Replay an explicit (x, z, payoffs) sequence against an algorithm.

    Regret is measured in hindsight against the best fixed policy pair on
    that sequence. The agent substreams match run_episode, so replaying a
    sequence that was pre-drawn from the same episode seed reproduces the
    episode's actions and rewards exactly.
    """
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    if len(sequence) < horizon:
        raise ConfigError(
            f"sequence has {len(sequence)} rounds but the horizon is {horizon}"
        )
    algo_obj = _resolve_algorithm(inst, algo, horizon, params)
    it = iter(sequence)
    return _run_rounds(inst, algo_obj, horizon, seed, lambda: next(it), record, None)


# --- lifting ------------------------------------------------------------------


@dataclass(frozen=True)
class LiftedInstance:
    """Single-learner reformulation over machine-indexed action blocks.

    Lifted action m encodes (machine policy m // K, action m % K); the
    lifted payoff of m is the base payoff of m % K, and the joint expert
    (i, j) advises i * K + g_j(f_i(x), z).
    """

    base: Instance
    n_actions: int

    @property
    def n_experts(self) -> int:
        return self.base.n_machine * self.base.n_human

    def expert_of_pair(self, i: int, j: int) -> int:
        return i * self.base.n_human + j

    def pair_of_expert(self, e: int) -> tuple[int, int]:
        return divmod(e, self.base.n_human)

    def advice(self, x: int, z: int) -> np.ndarray:
        k = self.base.n_actions
        n2 = self.base.n_human
        out = np.empty(self.n_experts, dtype=np.int64)
        for i, f in enumerate(self.base.machine_policies):
            r = f(x)
            base_idx = i * k
            for j, g in enumerate(self.base.human_policies):
                out[i * n2 + j] = base_idx + g(r, z)
        return out

    def lift_payoffs(self, payoffs: np.ndarray) -> np.ndarray:
        return np.tile(np.asarray(payoffs, dtype=float), self.base.n_machine)


def lift_instance(inst: Instance) -> LiftedInstance:
    return LiftedInstance(inst, inst.n_machine * inst.n_actions)


@dataclass(frozen=True)
class CoupleReport:
    """Round-by-round agreement between the directive-channel learner and
    plain exponential weights on the lifted problem."""

    passed: bool
    max_weight_divergence: float
    max_law_divergence: float
    first_bad_round: Optional[int]
    horizon: int
    seed: int
    tol: float


def couple_check(
    inst: Instance,
    horizon: int,
    seed: int,
    tol: float = 1e-9,
    eta: Optional[float] = None,
    gamma: float = 0.0,
    lifted_eta: Optional[float] = None,
) -> CoupleReport:
    """Executable equivalence proof between the two formulations.

    Each round, before acting, the two weight states are compared and the
    lifted action law is checked against the product of the directive
    marginal and the directed conditional. The directive learner then
    samples; its realized (row, action) outcome is injected into the
    lifted learner's update, so with equal learning rates the two states
    must stay equal up to floating point noise. A deliberately mismatched
    lifted_eta makes the check fail at round 2.
    """
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    n1, n2, k = inst.n_machine, inst.n_human, inst.n_actions
    if eta is None:
        eta = agents.default_params("p2exp4", inst, horizon)["eta"]
    if lifted_eta is None:
        lifted_eta = eta
    lift = lift_instance(inst)
    lw_pair = LogWeights((n1, n2))
    lw_lift = LogWeights(n1 * n2)
    env_rng = stream(seed, ENV_STREAM)
    act_rng = stream(seed, HUMAN_STREAM)
    max_w = 0.0
    max_l = 0.0
    first_bad: Optional[int] = None

    def weight_gap() -> float:
        return float(np.max(np.abs(lw_pair.probs().ravel() - lw_lift.probs())))

    for t in range(1, horizon + 1):
        qp = lw_pair.probs()
        ql = lw_lift.probs()
        wd = float(np.max(np.abs(qp.ravel() - ql)))
        x, z, payoffs = inst.env.sample(env_rng)
        ladv = lift.advice(x, z)
        law_lift = np.bincount(ladv, weights=ql, minlength=n1 * k)
        q = qp.sum(axis=1)
        law_pair = np.zeros(n1 * k)
        row_advice = []
        for i in range(n1):
            adv = ladv[i * n2 : (i + 1) * n2] - i * k
            row_advice.append(adv)
            if q[i] > 0.0:
                p_i = np.bincount(adv, weights=qp[i], minlength=k) / q[i]
                law_pair[i * k : (i + 1) * k] = q[i] * p_i
        ld = float(np.max(np.abs(law_pair - law_lift)))
        max_w = max(max_w, wd)
        max_l = max(max_l, ld)
        if first_bad is None and (wd > tol or ld > tol):
            first_bad = t

        i_t = sample_index(q, act_rng.random())
        adv_t = row_advice[i_t]
        p = p2exp4_action_probs(qp, i_t, adv_t, k)
        a = sample_index(p, act_rng.random())
        y = float(payoffs[a])
        p2exp4_update(lw_pair, i_t, adv_t, a, p, float(q[i_t]), y, eta, gamma)
        lifted_action = i_t * k + a
        yhat = exp4_estimates(law_lift, lifted_action, y, gamma)
        lw_lift.update(lifted_eta * yhat[ladv])

    wd = weight_gap()
    max_w = max(max_w, wd)
    if first_bad is None and wd > tol:
        first_bad = horizon + 1
    return CoupleReport(first_bad is None, max_w, max_l, first_bad, horizon, seed, tol)


# --- batches and sinks --------------------------------------------------------


TRANSCRIPT_FIELDS = (
    "run_id",
    "algo",
    "instance",
    "seed",
    "t",
    "directive",
    "x",
    "r",
    "z",
    "a",
    "y",
    "pseudo_regret",
    "cum_pseudo_regret",
)

BOUND_KIND_FOR = {
    "p2exp4": BOUND_P2EXP4,
    "joint_exp4": BOUND_JOINT,
    "exp4": BOUND_JOINT,
    "indep_pair": BOUND_INDEP,
    "moss_pairs": None,
}


@dataclass(frozen=True)
class RunConfig:
    """One batch: every instance crossed with every algorithm and seed."""

    instances: tuple
    algorithms: tuple  # pairs (algo_id, params dict or None)
    horizon: int
    seeds: tuple
    out_dir: Optional[str] = None
    write_transcripts: bool = False
    write_summary: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.instances:
            raise ConfigError("need at least one instance")
        if not self.algorithms:
            raise ConfigError("need at least one algorithm")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")


def _mark_partial(path: str) -> None:
    try:
        with open(path + ".partial", "w") as fh:
            fh.write("incomplete write\n")
    except OSError:
        pass


def summarize_finals(finals: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(finals))
    if len(finals) < 2:
        return mean, 0.0
    sd = float(np.std(finals, ddof=1))
    return mean, 1.96 * sd / math.sqrt(len(finals))


def run_batch(config: RunConfig) -> list[dict]:
    """Run the batch and return one summary record per (algo, instance).

    Records carry the seed-averaged final regret, its 95% confidence
    halfwidth, the matching theory bound when the algorithm has one, and
    a pass verdict (mean within bound). Transcript and summary sinks are
    written under out_dir; reruns with identical config overwrite with
    identical bytes.
    """
    out_dir = config.out_dir
    csv_fh = None
    csv_writer = None
    csv_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    if config.write_transcripts:
        if out_dir is None:
            raise ConfigError("transcripts need an output directory")
        csv_path = os.path.join(out_dir, "transcripts.csv")
    summaries: list[dict] = []

    def episode(inst, algo_id, params, values, seed):
        records, trace = run_episode(
            inst,
            algo_id,
            config.horizon,
            seed,
            params=dict(params) if params else None,
            record=config.write_transcripts,
            values=values,
        )
        return seed, records, trace

    try:
        if csv_path is not None:
            csv_fh = open(csv_path, "w", newline="")
            csv_writer = csv.writer(csv_fh, lineterminator="\n")
            csv_writer.writerow(TRANSCRIPT_FIELDS)
        for inst in config.instances:
            values = value_matrix(inst) if inst.exact_values else None
            for algo_id, params in config.algorithms:
                finals = []
                accounting = None
                if config.jobs > 1:
                    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                        results = list(
                            pool.map(
                                lambda s: episode(inst, algo_id, params, values, s),
                                config.seeds,
                            )
                        )
                else:
                    results = [
                        episode(inst, algo_id, params, values, s) for s in config.seeds
                    ]
                for seed, records, trace in results:
                    finals.append(trace.final)
                    accounting = trace.accounting
                    if csv_writer is not None:
                        run_id = f"{algo_id}:{inst.name}:{seed}"
                        for rec in records:
                            csv_writer.writerow(
                                (
                                    run_id,
                                    algo_id,
                                    inst.name,
                                    seed,
                                    rec.t,
                                    "" if rec.directive is None else rec.directive,
                                    rec.x,
                                    rec.r,
                                    rec.z,
                                    rec.a,
                                    rec.y,
                                    rec.pseudo_regret,
                                    rec.cum_pseudo_regret,
                                )
                            )
                mean, ci95 = summarize_finals(np.asarray(finals))
                kind = BOUND_KIND_FOR.get(algo_id if isinstance(algo_id, str) else "?")
                bound = (
                    regret_bound(
                        kind,
                        config.horizon,
                        inst.n_actions,
                        inst.recs.count,
                        inst.n_machine,
                        inst.n_human,
                    )
                    if kind
                    else None
                )
                summaries.append(
                    {
                        "algo": algo_id,
                        "instance": inst.name,
                        "horizon": config.horizon,
                        "n_seeds": len(config.seeds),
                        "accounting": accounting,
                        "mean_final_regret": mean,
                        "ci95": ci95,
                        "bound": bound,
                        "bound_kind": kind,
                        "pass": (None if bound is None else bool(mean <= bound)),
                    }
                )
        if csv_fh is not None:
            csv_fh.close()
            csv_fh = None
    except OSError as exc:
        if csv_fh is not None:
            csv_fh.close()
        if csv_path is not None:
            _mark_partial(csv_path)
        raise SinkError(f"transcript sink failed: {exc}") from exc

    if config.write_summary and out_dir is not None:
        summary_path = os.path.join(out_dir, "summary.jsonl")
        try:
            with open(summary_path, "w") as fh:
                for recd in summaries:
                    fh.write(json.dumps(recd) + "\n")
        except OSError as exc:
            _mark_partial(summary_path)
            raise SinkError(f"summary sink failed: {exc}") from exc
    return summaries
