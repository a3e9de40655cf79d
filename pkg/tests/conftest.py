"""Shared helpers: independent value oracles and barrier-probing agents."""

import numpy as np

from duobandit.agents import Algorithm, HumanHalf, MachineHalf, MODE_FULL


def enum_pair_value(inst, i, j):
    """Brute-force expectation over the enumerated environment support.

    Deliberately reimplements the expectation as a plain loop so library
    results are checked against independent arithmetic.
    """
    f = inst.machine_policies[i]
    g = inst.human_policies[j]
    total = 0.0
    for prob, x, z, means in inst.env.support():
        total += prob * float(means[g(f(x), z)])
    return total


def enum_value_matrix(inst):
    out = np.empty((inst.n_machine, inst.n_human))
    for i in range(inst.n_machine):
        for j in range(inst.n_human):
            out[i, j] = enum_pair_value(inst, i, j)
    return out


class FakeRng:
    """Replays a fixed list of uniforms; for coupled-sampling tests."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


class ProbeMachine(MachineHalf):
    """Reads one view attribute inside recommend, then plays 0."""

    def __init__(self, attr=None):
        self.attr = attr

    def recommend(self, view):
        if self.attr is not None:
            getattr(view, self.attr)
        return 0


class ProbeHuman(HumanHalf):
    def __init__(self, attr=None):
        self.attr = attr

    def act(self, view):
        if self.attr is not None:
            getattr(view, self.attr)
        return 0


class ProbePair(Algorithm):
    """Fixed-action pair used to aim forbidden accesses at the views."""

    algo_id = "probe"
    mode = MODE_FULL

    def __init__(self, machine_attr=None, human_attr=None):
        super().__init__(ProbeMachine(machine_attr), ProbeHuman(human_attr))
        self._dims = None

    def play_law(self):
        return np.full(self._dims, 1.0 / (self._dims[0] * self._dims[1]))

    def bind(self, inst):
        self._dims = (inst.n_machine, inst.n_human)
        return self
