"""Photonic overlap test: temporal mode functions, two-photon interference
and the time-bin distributed comparison (scheme S4)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from . import noise as nz
from .netproto import ChannelLedger, NodePair, cross, initial_state, run_chunked
from .overlap import TrialBatch
from .simcore import MAX_QUBITS, Gate, apply_gate, as_generator, measure

SHAPES = ("gaussian", "lorentzian", "sech", "timebin")
QUAD_TOL = 1e-8
NORM_TOL = 1e-8
# tails beyond this many characteristic widths are dropped
TRUNCATION = 12.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class ModeFunction:
    """Single-photon temporal mode.

    ``width`` is the shape parameter: sigma for ``gaussian``, the decay rate
    Gamma for ``lorentzian`` and ``sech``, and the bin width for ``timebin``.
    ``delay`` shifts the whole mode in time; ``bin_index`` picks the early (0)
    or late (1) time bin.
    """

    shape: str
    width: float
    delay: float = 0.0
    bin_index: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown mode shape {self.shape!r}")
        if not self.width > 0:
            raise ValueError("mode width must be positive")
        if self.bin_index not in (0, 1):
            raise ValueError("bin_index must be 0 or 1")
        norm = _quad(lambda t: self(t) ** 2, *self.support(), self.breakpoints())
        if abs(norm - 1) > NORM_TOL:
            raise ValueError(f"mode is not normalized: integral |psi|^2 = {norm}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float) - self.delay
        w = self.width
        if self.shape == "gaussian":
            return (np.pi * w**2) ** -0.25 * np.exp(-(t**2) / (2 * w**2))
        if self.shape == "lorentzian":
            return np.where(t >= 0, np.sqrt(2 * w) * np.exp(-w * np.maximum(t, 0)), 0.0)
        if self.shape == "sech":
            return np.sqrt(w) / 2 / np.cosh(w * t / 2)
        lo = self.bin_index * w
        return np.where((t >= lo) & (t < lo + w), 1 / np.sqrt(w), 0.0)

    @property
    def scale(self) -> float:
        """Characteristic time scale of the mode."""
        if self.shape in ("gaussian", "timebin"):
            return self.width
        return 2 / self.width

    def support(self) -> tuple[float, float]:
        if self.shape == "timebin":
            lo = self.delay + self.bin_index * self.width
            return lo, lo + self.width
        span = TRUNCATION * self.scale
        if self.shape == "lorentzian":
            return self.delay, self.delay + span
        return self.delay - span, self.delay + span

    def breakpoints(self) -> list[float]:
        lo, hi = self.support()
        if self.shape == "timebin":
            return [lo, hi]
        if self.shape == "lorentzian":
            return [lo]
        return [self.delay]


def mode_pair(shape: str, width: float, delta: float) -> tuple[ModeFunction, ModeFunction]:
    """Two otherwise identical modes whose arrival times differ by ``delta``."""
    return ModeFunction(shape, width, -delta / 2), ModeFunction(shape, width, delta / 2)


def _quad(f, lo, hi, points=()) -> float:
    pts = sorted({p for p in points if lo < p < hi})
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, a, b, epsabs=QUAD_TOL * 1e-3, epsrel=1e-12, limit=400)
        if not np.isfinite(val) or err > QUAD_TOL:
            raise QuadratureError(f"quadrature on [{a}, {b}] reported error {err}")
        total += val
    return total


def quadrature_overlap(psi1: ModeFunction, psi2: ModeFunction) -> complex:
    """<psi1|psi2> by adaptive quadrature over the intersection of supports."""
    lo = max(psi1.support()[0], psi2.support()[0])
    hi = min(psi1.support()[1], psi2.support()[1])
    if hi <= lo:
        return 0j
    pts = psi1.breakpoints() + psi2.breakpoints()
    # real mode functions, so the imaginary part vanishes
    return complex(_quad(lambda t: psi1(t) * psi2(t), lo, hi, pts))


def closed_form_overlap(psi1: ModeFunction, psi2: ModeFunction) -> complex | None:
    """Analytic overlap for two modes of the same shape and width, else ``None``."""
    if psi1.shape != psi2.shape or psi1.width != psi2.width:
        return None
    d = psi2.delay - psi1.delay
    w = psi1.width
    if psi1.shape == "gaussian":
        return complex(np.exp(-(d**2) / (4 * w**2)))
    if psi1.shape == "lorentzian":
        return complex(np.exp(-w * abs(d)))
    if psi1.shape == "sech":
        a = w * abs(d) / 2
        return complex(1.0 if a == 0 else a / np.sinh(a))
    shift = abs(d + (psi2.bin_index - psi1.bin_index) * w)
    return complex(max(0.0, w - shift) / w)


def mode_overlap(psi1: ModeFunction, psi2: ModeFunction, method: str = "auto") -> complex:
    """<psi1|psi2>; ``method`` is ``"auto"`` (closed form when available), ``"quad"`` or ``"closed"``."""
    if method not in ("auto", "quad", "closed"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quad":
        c = closed_form_overlap(psi1, psi2)
        if c is not None:
            return c
        if method == "closed":
            raise ValueError(f"no closed form for {psi1.shape} vs {psi2.shape}")
    return quadrature_overlap(psi1, psi2)


def visibility(psi1: ModeFunction, psi2: ModeFunction, method: str = "auto") -> float:
    return float(min(1.0, abs(mode_overlap(psi1, psi2, method)) ** 2))


def coincidence_probability(psi1: ModeFunction, psi2: ModeFunction, method: str = "auto") -> float:
    """Probability that the two photons leave through different ports."""
    return (1 - visibility(psi1, psi2, method)) / 2


def coincidence_curve(shape: str, width: float, deltas: Sequence[float], method: str = "auto") -> np.ndarray:
    return np.array([coincidence_probability(*mode_pair(shape, width, d), method) for d in deltas])


def printed_coincidence(shape: str, width: float, delta) -> np.ndarray:
    """The closed forms as commonly printed, reproduced verbatim.

    They disagree with the identical-photon limit (the Gaussian and
    Lorentzian forms give 1 at zero delay) and the sech form is negative at
    small delay; kept only for side-by-side comparison.
    """
    d = np.asarray(delta, dtype=float)
    if shape == "gaussian":
        return 0.5 * (1 + np.exp(-(d**2) / (2 * width**2)))
    if shape == "lorentzian":
        return 0.5 * (1 + np.exp(-2 * width * d))
    if shape == "sech":
        a = width * d / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return width * d / 4 * (1 - 1 / np.sinh(a))
    raise ValueError(f"no printed formula for {shape!r}")


def comparison_report(width: float = 1.0, deltas: Sequence[float] | None = None) -> list[dict]:
    """Rows of (shape, delta, p_c from the overlap law, printed formula, difference)."""
    if deltas is None:
        deltas = np.linspace(0.0, 6.0, 25)
    rows = []
    for shape in ("gaussian", "lorentzian", "sech"):
        printed = printed_coincidence(shape, width, deltas)
        for d, pr in zip(deltas, printed):
            pc = coincidence_probability(*mode_pair(shape, width, float(d)), method="quad")
            pr = float(pr)
            rows.append({
                "shape": shape,
                "delta": float(d),
                "p_c_overlap_law": pc,
                "p_c_printed": pr if np.isfinite(pr) else None,
                "difference": pr - pc if np.isfinite(pr) else None,
                "printed_in_range": bool(np.isfinite(pr) and 0 <= pr <= 0.5),
            })
    return rows


@dataclass(frozen=True)
class HomOutcome:
    same_port: bool

    @property
    def coincidence(self) -> bool:
        return not self.same_port

    @property
    def passed(self) -> bool:
        return self.same_port


def hom_shot(psi1: ModeFunction, psi2: ModeFunction, rng=None) -> HomOutcome:
    """Sample one two-photon interference event."""
    g = as_generator(rng)
    return HomOutcome(bool(g.random() >= coincidence_probability(psi1, psi2)))


def _pair_visibilities(visibility_params, n: int) -> np.ndarray:
    if visibility_params is None:
        return np.ones(n)
    if np.isscalar(visibility_params):
        return np.full(n, float(visibility_params))
    vals = []
    for v in visibility_params:
        if isinstance(v, (tuple, list)) and len(v) == 2 and all(isinstance(m, ModeFunction) for m in v):
            vals.append(visibility(*v))
        else:
            vals.append(float(v))
    if len(vals) != n:
        raise ValueError(f"got {len(vals)} visibility entries for {n} qubit pairs")
    vals = np.array(vals)
    if np.any((vals < 0) | (vals > 1)):
        raise ValueError("visibilities must lie in [0, 1]")
    return vals


def run_s4(prep_a, prep_b, n: int, shots: int, visibility_params=None,
           noise: nz.NoiseBudget | None = None, rng=None, max_qubits: int = MAX_QUBITS) -> TrialBatch:
    """Time-bin photonic comparison: each pair of photons meets on a beamsplitter.

    A coincidence on pair k is the antisymmetric (singlet) outcome of the
    pair; the run passes iff the number of coincidences is even.  With
    probability ``1 - V_k`` the photons are distinguishable, the detection
    carries no interference and the coincidence flag is a fair coin.  Both
    ``bitstrings`` entries of a record hold the per-pair coincidence flags.
    """
    pair = NodePair(n, "S4")
    init = initial_state(prep_a, prep_b, n, "S4", max_qubits)
    vis = _pair_visibilities(visibility_params, n)
    budget = None if noise is None or noise.is_ideal else noise

    def shot_chunk(m, g):
        ledger = ChannelLedger()
        state = init.expand(m)
        coinc = np.zeros((m, n), dtype=np.int8)
        flips = np.zeros(m, dtype=np.int64)
        live = list(range(2 * n))
        for k in range(n):
            qa, qb = pair.a(k), pair.b(k)
            state = cross(state, qa, ledger, budget, g, f"photon {k}")
            # the singlet is the only Bell state that maps to |11> here
            state = apply_gate(state, Gate("CNOT", (qb, qa)))
            state = apply_gate(state, Gate("H", (qb,)))
            raw, state = measure(state, [qa, qb], g)
            flag = (raw[:, 0] & raw[:, 1]).astype(np.int8)
            coin = (g.random(m) < 0.5).astype(np.int8)
            flag = np.where(g.random(m) < vis[k], flag, coin)
            if budget is not None:
                read = nz.flip_readout(flag, budget.f_readout, g)
                flips += read != flag
                flag = read
            coinc[:, k] = flag
            live = [q for q in live if q not in (qa, qb)]
            if budget is not None:
                state = nz.idle_decay(state, live, budget, g)
        return TrialBatch.from_bell(coinc, coinc, state.faults + flips, ledger.uses)

    return run_chunked(shots, 2**pair.num_qubits, shot_chunk, rng)
