"""Experiment recipes: each turns a validated config into a result table.

A recipe returns a :class:`Table`.  Random work is split into jobs; job ``k``
draws only from ``RandomSource(seed, k)``, so results do not depend on the
number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import compcmp as cc
from . import hom
from . import model
from . import netproto as npr
from . import overlap as ov
from . import stats
from .noise import NoiseBudget
from .simcore import Circuit, Gate, RandomSource, StateVector, fidelity, prepare, random_state

THREADS_ENV = "QNET_THREADS"
NAMED_PREPS = {"zero": [], "one": ["X"], "plus": ["H"], "minus": ["X", "H"]}
SCHEMES = ("S1", "S2", "S3", "S4", "swap", "bell")
COMP_METHODS = ("m1", "m2-design", "m2-trace", "m2-fsq", "m2-entangled", "m3")
FIG3_STRATEGIES = ("design", "trace", "fsq")


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    extra: dict[str, "Table | list"] = field(default_factory=dict)
    trace: str | None = None

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row of length {len(row)} for {len(self.columns)} columns")
        self.rows.append(list(row))

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_jobs(jobs: Sequence[Callable[[np.random.Generator], object]], seed: int) -> list:
    """Run ``jobs[k](RandomSource(seed, k).generator())``; results keep job order."""
    gens = [RandomSource(seed, k).generator() for k in range(len(jobs))]
    workers = min(thread_count(), max(1, len(jobs)))
    if workers == 1:
        return [job(g) for job, g in zip(jobs, gens)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda jg: jg[0](jg[1]), zip(jobs, gens)))


# ---- config value builders ----

def grid(spec, default: Sequence[float]) -> np.ndarray:
    """A list of numbers, or ``{"start", "stop", "num"}`` for an inclusive linear grid."""
    if spec is None:
        return np.asarray(default, dtype=float)
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def gate_from_dict(d: dict) -> Gate:
    return Gate(d["name"].upper(), tuple(int(q) for q in d["qubits"]),
                tuple(float(p) for p in d.get("params", ())))


def gate_list(spec) -> list[Gate]:
    return [gate_from_dict(d) for d in spec]


def build_prep(spec, n: int, rng=None) -> StateVector:
    """Preparation from a shorthand name, ``{"random": true}`` or a gate list."""
    if isinstance(spec, str):
        gates = [Gate(name, (q,)) for q in range(n) for name in NAMED_PREPS[spec]]
        return prepare(Circuit(n, gates))
    if isinstance(spec, dict) and spec.get("random"):
        return random_state(n, rng)
    gates = spec["gates"] if isinstance(spec, dict) else spec
    return prepare(Circuit(n, gate_list(gates)))


def build_unitary(spec: dict, rng, base: cc.UnitarySpec | None = None) -> cc.UnitarySpec:
    """``{"n", "gates"}``, ``{"random": "brickwork"|"clifford", "n"}`` or, for U_R,
    ``{"rotated": true, "max_angle"}`` meaning a random rotation layer after U_L."""
    if spec.get("rotated"):
        if base is None:
            raise ValueError("a rotated unitary needs U_L")
        m = cc.random_rotation_layer(base.num_qubits, spec.get("max_angle", math.pi / 4), rng)
        return base.then(m, "M.U_L")
    n = int(spec["n"])
    kind = spec.get("random")
    if kind == "brickwork":
        return cc.random_unitary_circuit(n, spec.get("depth"), rng)
    if kind == "clifford":
        return cc.random_clifford_circuit(n, spec.get("depth"), rng)
    return cc.UnitarySpec.from_gates(n, gate_list(spec["gates"]), spec.get("label", ""))


def noise_budget(spec) -> NoiseBudget | None:
    return None if spec is None else NoiseBudget.from_dict(spec)


def plan_from(spec: dict | None) -> cc.SamplingPlan:
    return cc.SamplingPlan(**(spec or {}))


# ---- state comparison ----

def run_pair(scheme: str, a: StateVector, b: StateVector, n: int, shots: int, cfg: dict, g):
    budget = noise_budget(cfg.get("noise"))
    if scheme == "swap":
        return ov.run_swap_test(a, b, shots, budget, g)
    if scheme == "bell":
        return ov.run_bell_test(a, b, shots, budget, g)
    if scheme == "S4":
        return hom.run_s4(a, b, n, shots, cfg.get("visibility", 1.0), budget, g)
    if scheme == "S1":
        return npr.run_s1(a, b, n, shots, budget, g, return_qubits=cfg.get("return_qubits", True))
    return npr.RUNNERS[scheme](a, b, n, shots, budget, g)


def state_compare(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    ns = cfg.get("n", 1)
    ns = [ns] if isinstance(ns, int) else list(ns)
    scheme, shots, alpha = cfg.get("scheme", "S1"), cfg.get("shots", 10000), cfg.get("alpha", 0.05)

    def job(n):
        def fn(g):
            a = build_prep(cfg.get("prep_a", "plus"), n, g)
            b = build_prep(cfg.get("prep_b", "plus"), n, g)
            return n, run_pair(scheme, a, b, n, shots, cfg, g), fidelity(a, b)
        return fn

    table = Table(["scheme", "n", "shots", "passes", "pass_rate", "fidelity", "stderr",
                   "ci_lower", "ci_upper", "fidelity_exact", "success_rate", "channel_uses"])
    traces = []
    for n, batch, f_exact in run_jobs([job(n) for n in ns], seed):
        ci = stats.fidelity_interval(batch, alpha, "clopper_pearson")
        p = batch.pass_rate()
        table.add(scheme, n, shots, batch.pass_count, p, 2 * p - 1, 2 * math.sqrt(p * (1 - p) / shots),
                  ci.lower, ci.upper, f_exact, float(batch.success.mean()), batch.channel_uses)
        if want_trace:
            traces.append(batch.to_jsonl())
    if want_trace:
        table.trace = "".join(traces)
    return table


def fig5(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    """|+> against cos(theta)|0> + e^{i phi} sin(theta)|1>, on a theta cut and a phi cut."""
    scheme, shots = cfg.get("scheme", "swap"), cfg.get("shots", 65536)
    thetas = grid(cfg.get("theta_grid"), np.linspace(0, math.pi, 16))
    phis = grid(cfg.get("phi_grid"), np.linspace(0, 2 * math.pi, 16))
    points = [("theta", float(t), 0.0) for t in thetas] + [("phi", math.pi / 4, float(p)) for p in phis]
    plus = build_prep("plus", 1)

    def job(theta, phi):
        def fn(g):
            tilde = prepare(Circuit(1, [Gate("RY", (0,), (2 * theta,)), Gate("P", (0,), (phi,))]))
            return run_pair(scheme, plus, tilde, 1, shots, cfg, g), fidelity(plus, tilde)
        return fn

    table = Table(["panel", "theta", "phi", "pass_rate", "fidelity", "stderr", "fidelity_exact"])
    results = run_jobs([job(t, p) for _, t, p in points], seed)
    for (panel, t, p), (batch, f_exact) in zip(points, results):
        r = batch.pass_rate()
        table.add(panel, t, p, r, 2 * r - 1, 2 * math.sqrt(r * (1 - r) / shots), f_exact)
    return table


# ---- computation comparison ----

def comp_estimate(method: str, u_l, u_r, cfg: dict, g) -> cc.Estimate:
    budget = noise_budget(cfg.get("noise"))
    test, shots = cfg.get("test", "swap"), cfg.get("shots", 1024)
    plan = plan_from(cfg.get("plan"))
    if method == "m1":
        return cc.m1_choi_compare(u_l, u_r, test, shots, budget, g)
    if method == "m2-design":
        return cc.m2_two_design(u_l, u_r, plan, test, budget, g)
    if method == "m2-trace":
        return cc.m2_trace_sampling(u_l, u_r, plan, budget, g)
    if method == "m2-fsq":
        return cc.m2_fsq(u_l, u_r, plan, test, budget, g)
    if method == "m2-entangled":
        return cc.m2_entangled_hadamard(u_l, u_r, shots, budget, g)
    return cc.m3_chsh(u_l, u_r, shots, budget, g)


def dense_target(method: str, u_l, u_r) -> complex:
    """The quantity each method estimates, from dense matrices."""
    ml, mr = u_l.unitary(), u_r.unitary()
    if method == "m2-trace":
        return cc.normalized_trace(ml, mr)
    if method == "m2-entangled":
        return complex(np.trace(ml.conj() @ mr) / ml.shape[0])
    if method == "m2-fsq":
        return cc.fsq_oracle(ml, mr)
    if method == "m3":
        return cc.chsh_exact(u_l, u_r)
    return cc.process_fidelity(ml, mr)


def comp_compare(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    method = cfg.get("method", "m1")
    reps = cfg.get("repetitions", 1)

    def fn(g):
        u_l = build_unitary(cfg["u_l"], g)
        u_r = build_unitary(cfg["u_r"], g, base=u_l)
        return comp_estimate(method, u_l, u_r, cfg, g), dense_target(method, u_l, u_r)

    table = Table(["method", "repetition", "estimate_re", "estimate_im", "stderr",
                   "oracle_re", "oracle_im", "target_re", "target_im"])
    for rep, (est, target) in enumerate(run_jobs([fn] * reps, seed)):
        v, o, t = complex(est.value), complex(est.oracle), complex(target)
        table.add(method, rep, v.real, v.imag, est.stderr, o.real, o.imag, t.real, t.imag)
    return table


def fig2d_unitaries(phi: float) -> tuple[cc.UnitarySpec, cc.UnitarySpec]:
    u_l = cc.UnitarySpec.from_gates(1, [Gate("H", (0,))], "H")
    u_r = cc.UnitarySpec.from_gates(1, [Gate("H", (0,)), Gate("P", (0,), (phi,))], "P.H")
    return u_l, u_r


def fig2d_estimate(method: str, phi: float, shots: int, g) -> tuple[cc.Estimate, float]:
    """One method at one phase with a total budget of ``shots``; returns the
    estimate and the analytic curve value."""
    u_l, u_r = fig2d_unitaries(phi)
    curve = (1 + math.cos(phi)) / 2
    if method == "m1":
        return cc.m1_choi_compare(u_l, u_r, "swap", shots, None, g), curve
    if method == "m2-design":
        plan = cc.SamplingPlan(m_b=24, m_s=shots // 24, exhaustive=True)
        return cc.m2_two_design(u_l, u_r, plan, "swap", None, g), curve
    if method == "m2-fsq":
        plan = cc.SamplingPlan(m_b=2, m_s=shots // 2, exhaustive=True)
        return cc.m2_fsq(u_l, u_r, plan, "swap", None, g), curve
    if method == "m3":
        return cc.m3_chsh(u_l, u_r, shots // 4, None, g), 2 * math.sqrt(2) * curve
    raise ValueError(f"method {method!r} is not part of this figure")


def fig2d(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    methods = cfg.get("methods", ["m1", "m2-design", "m2-fsq", "m3"])
    phis = grid(cfg.get("phi_grid"), np.linspace(0, 2 * math.pi, 16))
    shots = cfg.get("shots", 16384)
    points = [(m, float(p)) for m in methods for p in phis]

    def job(m, p):
        return lambda g: fig2d_estimate(m, p, shots, g)

    table = Table(["method", "phi", "estimate", "stderr", "exact", "exact_stderr"])
    for (m, p), (est, curve) in zip(points, run_jobs([job(m, p) for m, p in points], seed)):
        table.add(m, p, float(est.value), est.stderr, curve, est.exact_stderr)
    return table


def fig3_errors(strategy: str, u_l, u_r, m_b: int, m_s: int, trials: int, g) -> np.ndarray:
    """Absolute errors of ``trials`` independent estimates against the dense oracle."""
    ml, mr = u_l.unitary(), u_r.unitary()
    plan = cc.SamplingPlan(m_b=m_b, m_s=m_s)
    out = []
    for _ in range(trials):
        if strategy == "design":
            out.append(abs(cc.m2_two_design(u_l, u_r, plan, "swap", None, g).value - cc.process_fidelity(ml, mr)))
        elif strategy == "trace":
            out.append(abs(cc.m2_trace_sampling(u_l, u_r, plan, None, g).value - cc.normalized_trace(ml, mr)))
        else:
            out.append(abs(cc.m2_fsq(u_l, u_r, plan, "swap", None, g).value - cc.fsq_oracle(ml, mr)))
    return np.array(out)


def fig3(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    n = cfg.get("n", 5)
    reps = cfg.get("repetitions", 10)
    m_bs = [int(x) for x in cfg.get("m_b", [4, 8, 12, 16, 20, 24, 28, 32])]
    m_s, trials = cfg.get("m_s", 100), cfg.get("trials", 5)
    strategies = cfg.get("strategies", list(FIG3_STRATEGIES))
    resamples = cfg.get("bootstrap_resamples", 1000)
    max_angle = cfg.get("max_angle", math.pi / 4)

    def job(g):
        u_l = cc.random_unitary_circuit(n, rng=g)
        u_r = u_l.then(cc.random_rotation_layer(n, max_angle, g), "M.U_L")
        rows = []
        for s in strategies:
            for m_b in m_bs:
                err = fig3_errors(s, u_l, u_r, m_b, m_s, trials, g)
                se = stats.bootstrap_stderr(err, resamples, g) if len(err) > 1 else 0.0
                rows.append((s, m_b, float(err.mean()), se))
        return rows

    table = Table(["strategy", "repetition", "m_b", "m", "mean_abs_error", "stderr"])
    for rep, rows in enumerate(run_jobs([job] * reps, seed)):
        for s, m_b, err, se in rows:
            table.add(s, rep, m_b, m_b * m_s, err, se)
    return table


# ---- analytic model ----

def sweep_spec(cfg: dict) -> model.SweepSpec:
    base = model.fig4c_spec()
    lo = NoiseBudget.from_dict(cfg["budget_lo"]) if "budget_lo" in cfg else base.budget_lo
    hi = NoiseBudget.from_dict(cfg["budget_hi"]) if "budget_hi" in cfg else base.budget_hi
    s2 = cfg.get("f_gate_s2", base.f_gate_s2)
    n_range = tuple(int(x) for x in cfg.get("n_range", base.n_range))
    return model.SweepSpec(n_range, lo, hi, None if s2 is None else tuple(s2))


def mc_success(scheme: str, n: int, budget: NoiseBudget, shots: int, g) -> tuple[float, float]:
    """Fault-free pass rate of a scheme on identical |1>^n registers."""
    one = build_prep("one", n)
    batch = npr.RUNNERS[scheme](one, one, n, shots, budget, g)
    p = float(batch.success.mean())
    return p, math.sqrt(p * (1 - p) / shots)


def model_sweep(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    spec = sweep_spec(cfg)
    cols = list(model.SWEEP_COLUMNS)
    mc = cfg.get("monte_carlo")
    mc_cols = ["mc_s1_lo", "mc_s1_lo_se", "mc_s1_hi", "mc_s1_hi_se",
               "mc_s2_lo", "mc_s2_lo_se", "mc_s2_hi", "mc_s2_hi_se"]
    table = Table(cols + ["stderr"] + (mc_cols if mc else []))
    values = model.sweep(spec)
    mc_vals = {}
    if mc:
        decay = mc.get("decay", "transit")
        s2_lo, s2_hi = spec.s2_budgets()
        budgets = {"S1": (spec.budget_lo, spec.budget_hi), "S2": (s2_lo, s2_hi)}
        keys = [(n, s, k) for n in spec.n_range if n <= mc.get("n_max", 6)
                for s in ("S1", "S2") for k in (0, 1)]

        def job(n, s, k):
            b = NoiseBudget.from_dict({**budgets[s][k].to_dict(), "decay": decay})
            return lambda g: mc_success(s, n, b, mc.get("shots", 10000), g)

        for key, res in zip(keys, run_jobs([job(*k) for k in keys], seed)):
            mc_vals[key] = res
    for row in values:
        n = int(row[0])
        out = [n] + [float(x) for x in row[1:]] + [0.0]
        if mc:
            for s in ("S1", "S2"):
                for k in (0, 1):
                    out += list(mc_vals.get((n, s, k), ("", "")))
        table.add(*out)
    return table


# ---- statistics ----

def stats_table(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    p = cfg.get("p_succ", (1 + math.cos(math.pi / 4)) / 2)
    alphas = cfg.get("alphas", [0.1, 0.05, 0.01])
    ms = [int(m) for m in cfg.get("m_grid", [100, 1000, 10000, 100000, 1000000])]
    target = cfg.get("eps_target", 0.01)
    cov = cfg.get("coverage")
    cov_ms = set(cov.get("m", [100, 1000, 10000])) if cov else set()
    points = [(a, m) for a in alphas for m in ms]

    def job(a, m):
        def fn(g):
            res = [stats.hoeffding_epsilon(m, a), stats.expected_cp_width(m, p, a),
                   stats.expected_wald_width(m, p, a)]
            if m in cov_ms:
                res += list(stats.cp_coverage(p, m, a, cov.get("experiments", 2000), g))
            else:
                res += ["", 0.0]
            return res
        return fn

    table = Table(["p_succ", "alpha", "m", "hoeffding_eps", "cp_expected_width", "wald_expected_width",
                   "eps_target", "cp_coverage", "stderr"])
    for (a, m), res in zip(points, run_jobs([job(a, m) for a, m in points], seed)):
        table.add(p, a, m, *res[:3], target, *res[3:])
    return table


# ---- two-photon interference ----

def hom_curves(cfg: dict, seed: int, want_trace: bool = False) -> Table:
    shapes = cfg.get("shapes", ["gaussian", "lorentzian", "sech", "timebin"])
    width = cfg.get("width", 1.0)
    deltas = grid(cfg.get("deltas"), np.linspace(0.0, 6.0, 50))
    method = cfg.get("method", "quad")
    table = Table(["shape", "delta", "p_c", "p_c_closed", "abs_diff", "stderr"])
    for s in shapes:
        for d in deltas:
            a, b = hom.mode_pair(s, width, float(d))
            pc = hom.coincidence_probability(a, b, method)
            closed = hom.coincidence_probability(a, b, "closed")
            table.add(s, float(d), pc, closed, abs(pc - closed), 0.0)
    if cfg.get("report", True):
        rows = hom.comparison_report(width, deltas)
        rep = Table(list(rows[0].keys()))
        for r in rows:
            rep.add(*["" if v is None else v for v in r.values()])
        table.extra["report"] = rep
    return table


RECIPES: dict[str, Callable[..., Table]] = {
    "state-compare": state_compare,
    "comp-compare": comp_compare,
    "hom": hom_curves,
    "model-sweep": model_sweep,
    "stats": stats_table,
    "fig2d": fig2d,
    "fig3": fig3,
    "fig4c": model_sweep,
    "fig5": fig5,
    "fig6-supp": hom_curves,
    "fig7": stats_table,
}

# experiments that draw random numbers and therefore need a seed
SAMPLED = {"state-compare", "comp-compare", "fig2d", "fig3", "fig5"}
