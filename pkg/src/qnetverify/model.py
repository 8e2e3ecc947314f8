"""Closed-form success rates of the distributed schemes and their parameter sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .noise import NoiseBudget

SWEEP_COLUMNS = ("n", "p_s1_lo", "p_s1_hi", "p_s1_noreturn_lo", "p_s1_noreturn_hi", "p_s2_lo", "p_s2_hi")


def _check_n(n: int):
    if n < 1:
        raise ValueError(f"n={n} must be at least 1")


def _block(budget: NoiseBudget) -> float:
    return budget.f_transfer * math.exp(-budget.decay_exponent)


def p_s1(n: int, budget: NoiseBudget, return_qubits: bool = True) -> float:
    """Fault-free success rate of the distributed SWAP test.

    Every crossing costs ``f_transfer * exp(-gamma t_block)``; there are 2n of
    them with return and n without.  One gate block per qubit and a single
    ancilla readout.
    """
    _check_n(n)
    crossings = 2 * n if return_qubits else n
    return _block(budget) ** crossings * budget.f_gate**n * budget.f_readout


def p_s2(n: int, budget: NoiseBudget) -> float:
    """Fault-free success rate of the distributed Bell-basis test: one crossing,
    one gate block and one pair readout per qubit."""
    _check_n(n)
    return (_block(budget) * budget.f_gate * budget.f_readout) ** n


def _dominates(lo: NoiseBudget, hi: NoiseBudget) -> bool:
    return (lo.f_transfer >= hi.f_transfer and lo.f_gate >= hi.f_gate
            and lo.f_readout >= hi.f_readout and lo.decay_exponent <= hi.decay_exponent)


@dataclass(frozen=True)
class SweepSpec:
    """Grid and optimistic (``lo``) / pessimistic (``hi``) noise budgets.

    ``budget_lo``/``budget_hi`` carry the S1 gate fidelity; ``f_gate_s2``
    overrides it for S2 as an (optimistic, pessimistic) pair.
    """

    n_range: Sequence[int] = tuple(range(1, 21))
    budget_lo: NoiseBudget = field(default_factory=NoiseBudget)
    budget_hi: NoiseBudget = field(default_factory=NoiseBudget)
    f_gate_s2: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.n_range) == 0 or min(self.n_range) < 1:
            raise ValueError("n_range must be a non-empty grid of positive integers")
        if not _dominates(self.budget_lo, self.budget_hi):
            raise ValueError("budget_lo must dominate budget_hi component-wise")
        if self.f_gate_s2 is not None and self.f_gate_s2[0] < self.f_gate_s2[1]:
            raise ValueError("f_gate_s2 must be ordered (optimistic, pessimistic)")

    def s2_budgets(self) -> tuple[NoiseBudget, NoiseBudget]:
        if self.f_gate_s2 is None:
            return self.budget_lo, self.budget_hi
        return (replace(self.budget_lo, f_gate=self.f_gate_s2[0]),
                replace(self.budget_hi, f_gate=self.f_gate_s2[1]))


def fig4c_spec() -> SweepSpec:
    """Parameter ranges of the success-rate figure: 1 - F_st in [0.75, 1]e-2,
    Gamma T in [2.5, 7.5]e-3, 1 - F_r = 1e-3, 1 - F_g in [2.5, 5]e-2 (S1) and
    [0.5, 1]e-2 (S2)."""
    lo = NoiseBudget(f_transfer=0.9925, gamma=2.5e-3, t_block=1.0, f_gate=0.975, f_readout=0.999)
    hi = NoiseBudget(f_transfer=0.99, gamma=7.5e-3, t_block=1.0, f_gate=0.95, f_readout=0.999)
    return SweepSpec(tuple(range(1, 21)), lo, hi, (0.995, 0.99))


def sweep(spec: SweepSpec) -> np.ndarray:
    """Band table with one row per n and columns :data:`SWEEP_COLUMNS`."""
    s2_lo, s2_hi = spec.s2_budgets()
    rows = []
    for n in spec.n_range:
        rows.append((n,
                     p_s1(n, spec.budget_lo), p_s1(n, spec.budget_hi),
                     p_s1(n, spec.budget_lo, False), p_s1(n, spec.budget_hi, False),
                     p_s2(n, s2_lo), p_s2(n, s2_hi)))
    return np.array(rows, dtype=float)
