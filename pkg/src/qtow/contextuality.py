"""KCBS pentagram witness and the probe-disturbance diagnostic.

The five KCBS vectors are

    v_i = (sin a cos phi_i, sin a sin phi_i, cos a),  phi_i = 4 pi i / 5,  i = 1..5

with cos^2 a = 5^(-1/2), so cyclically adjacent vectors are orthogonal. For
any noncontextual 0/1 assignment the projector sum is at most 2 (the
independence number of the 5-cycle); the state (0, 0, 1) reaches sqrt(5).

Probe diagnostic: an unrecorded binary probe P(beta) = |v><v| with
v = cos(beta)|A> + sin(beta)|perp> dephases rho into
P rho P + (I-P) rho (I-P) before the decision. Starting from |perp> the
probability of deciding A becomes 2 sin^2(beta) cos^2(beta), against 0
without the probe.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import quantum_core as qc
from .rng import STREAM_CONTEXT, STREAM_DECISION, STREAM_PROBE, derive_seed, uniform_block

CLASSICAL_BOUND = 2.0
QUANTUM_MAX = math.sqrt(5.0)
VIOLATION_TOL = 1e-9
ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class KcbsSet:
    vectors: np.ndarray  # (5, 3) real
    projectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.shape != (5, 3):
            raise ValueError(f"KCBS set needs five 3-vectors, got shape {v.shape}")
        norms = np.linalg.norm(v, axis=1)
        if np.max(np.abs(norms - 1.0)) > ORTHO_TOL:
            raise ValueError("KCBS vectors must be unit norm")
        for i in range(5):
            d = abs(float(v[i] @ v[(i + 1) % 5]))
            if d > ORTHO_TOL:
                raise ValueError(f"vectors {i} and {(i + 1) % 5} are not orthogonal (|<.,.>| = {d:.3g})")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "projectors", np.array([qc.projector(x) for x in v]))

    def exclusivity_edges(self, tol: float = ORTHO_TOL) -> list[tuple[int, int]]:
        return [(i, j) for i, j in itertools.combinations(range(5), 2)
                if abs(float(self.vectors[i] @ self.vectors[j])) <= tol]

    def context(self, i: int) -> np.ndarray:
        """Effects {P_i, P_i+1, I - P_i - P_i+1} of the i-th adjacent pair."""
        p, q = self.projectors[i], self.projectors[(i + 1) % 5]
        return np.array([p, q, qc.IDENTITY - p - q])


@dataclass(frozen=True)
class WitnessResult:
    expectations: tuple
    sum: float
    classical_bound: float = CLASSICAL_BOUND
    quantum_max: float = QUANTUM_MAX
    violated: bool = False

    def as_dict(self) -> dict:
        return {"expectations": list(self.expectations), "sum": self.sum,
                "classical_bound": self.classical_bound, "quantum_max": self.quantum_max,
                "violated": self.violated}


@dataclass(frozen=True)
class ProbeComparison:
    beta: float
    p_no_probe: float
    p_with_probe: float
    n_samples: Optional[int] = None
    sigma_no_probe: Optional[float] = None
    sigma_with_probe: Optional[float] = None


@dataclass(frozen=True)
class SampledWitness:
    """Sampled KCBS estimate. ``left[i]``/``right[i]`` estimate P_i from contexts i-1 and i."""

    n_per_context: int
    counts: np.ndarray  # (5, 3) outcome counts per context
    left: np.ndarray
    right: np.ndarray
    expectations: np.ndarray
    sum: float
    sum_sigma: float
    analytic_sum: float
    z_score: float
    discrepancy: np.ndarray
    discrepancy_z: np.ndarray


def kcbs_angle() -> float:
    return math.acos(5.0 ** -0.25)


def build_kcbs() -> KcbsSet:
    a = kcbs_angle()
    phis = 4.0 * math.pi * np.arange(1, 6) / 5.0
    vecs = np.column_stack([math.sin(a) * np.cos(phis), math.sin(a) * np.sin(phis),
                            np.full(5, math.cos(a))])
    return KcbsSet(vecs)


def kcbs_witness(state_or_rho, kset: Optional[KcbsSet] = None) -> WitnessResult:
    kset = build_kcbs() if kset is None else kset
    ex = tuple(qc.expectation(state_or_rho, p) for p in kset.projectors)
    total = math.fsum(ex)
    return WitnessResult(ex, total, violated=total > CLASSICAL_BOUND + VIOLATION_TOL)


def is_admissible(bits: Sequence[int], edges: Optional[Sequence[tuple[int, int]]] = None) -> bool:
    if edges is None:
        edges = [(i, (i + 1) % 5) for i in range(5)]
    return all(not (bits[i] and bits[j]) for i, j in edges)


def noncontextual_max(kset: Optional[KcbsSet] = None, edges=None):
    """Brute force over all 2**5 deterministic assignments.

    Exclusivity comes from ``edges`` if given, else from the orthogonal pairs
    of ``kset`` (the 5-cycle for a KCBS set). Returns ``(max_sum, argmax)``.
    """
    if edges is None:
        edges = (build_kcbs() if kset is None else kset).exclusivity_edges()
    best, arg = -1, []
    for bits in itertools.product((0, 1), repeat=5):
        if not is_admissible(bits, edges):
            continue
        s = sum(bits)
        if s > best:
            best, arg = s, [bits]
        elif s == best:
            arg.append(bits)
    return best, arg


# -- probe diagnostic ---------------------------------------------------------

def probe_projector(beta: float) -> np.ndarray:
    return qc.projector([math.cos(beta), 0.0, math.sin(beta)])


def _as_density(state_or_rho) -> np.ndarray:
    x = np.asarray(state_or_rho, dtype=np.complex128)
    return qc.density(x) if x.ndim == 1 else qc.check_density(x)


def lemma_a1_analytic(state_or_rho, beta: float) -> ProbeComparison:
    """Decide-only vs probe-then-decide probability of A, via the dephasing channel."""
    rho = _as_density(state_or_rho)
    p0 = qc.expectation(rho, qc.M_A)
    p1 = qc.expectation(qc.dephase_probe(rho, probe_projector(beta)), qc.M_A)
    return ProbeComparison(beta, min(1.0, max(0.0, p0)), min(1.0, max(0.0, p1)))


def _binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def lemma_a1_sampled(psi, beta: float, n_samples: int, seed: int) -> ProbeComparison:
    """Trajectory sampling: draw the probe outcome, collapse, forget it, then decide.

    Works on pure states only; uses Lueders collapse per branch, never the
    dephased density matrix.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    psi = qc.check_state(psi)
    probe = probe_projector(beta)
    branches = []
    for proj in (probe, qc.IDENTITY - probe):
        p = qc.born_probability(psi, proj)
        if p < qc.TOL_ZERO_BRANCH:
            branches.append((0.0, 0.0))
            continue
        post, p = qc.lueders_collapse(psi, proj)
        branches.append((p, qc.born_probability(post, qc.M_A)))
    p_yes, a_yes = branches[0]
    _, a_no = branches[1]

    u_probe = uniform_block(derive_seed(seed, STREAM_PROBE), 0, n_samples)
    u_dec = uniform_block(derive_seed(seed, STREAM_DECISION), 0, n_samples)
    u_plain = uniform_block(derive_seed(seed, STREAM_DECISION, 1), 0, n_samples)
    p_a_branch = np.where(u_probe < p_yes, a_yes, a_no)
    f_probe = float(np.count_nonzero(u_dec < p_a_branch)) / n_samples
    f_plain = float(np.count_nonzero(u_plain < qc.born_probability(psi, qc.M_A))) / n_samples
    return ProbeComparison(beta, f_plain, f_probe, n_samples,
                           _binomial_sigma(f_plain, n_samples), _binomial_sigma(f_probe, n_samples))


def kcbs_sampled_contexts(state_or_rho, kset: Optional[KcbsSet] = None,
                          n_per_context: int = 100_000, seed: int = 0) -> SampledWitness:
    """Measure each adjacent-pair context on fresh copies of the state."""
    if n_per_context < 1:
        raise ValueError("n_per_context must be >= 1")
    kset = build_kcbs() if kset is None else kset
    analytic = kcbs_witness(state_or_rho, kset)
    n = n_per_context
    counts = np.zeros((5, 3), dtype=np.int64)
    for i in range(5):
        effects = kset.context(i)
        probs = np.array([qc.expectation(state_or_rho, e) for e in effects])
        cut = np.cumsum(np.clip(probs, 0.0, None))
        cut /= cut[-1]
        u = uniform_block(derive_seed(seed, STREAM_CONTEXT, i), 0, n)
        outcome = np.searchsorted(cut, u, side="right")
        counts[i] = np.bincount(outcome, minlength=3)[:3]
    freq = counts / n
    right = freq[:, 0].copy()  # P_i measured with P_i+1
    left = np.roll(freq[:, 1], 1)  # P_i measured with P_i-1
    expectations = 0.5 * (left + right)
    pair = freq[:, 0] + freq[:, 1]  # binomial per context
    total = 0.5 * float(pair.sum())
    pair_true = np.array([analytic.expectations[i] + analytic.expectations[(i + 1) % 5] for i in range(5)])
    sum_sigma = 0.5 * math.sqrt(float(np.sum(pair_true * (1.0 - pair_true))) / n)
    z = (total - analytic.sum) / sum_sigma if sum_sigma > 0 else (0.0 if total == analytic.sum else math.inf)
    disc = left - right
    pooled = 0.5 * (left + right)
    dsig = np.sqrt(2.0 * pooled * (1.0 - pooled) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        dz = np.where(dsig > 0, disc / np.where(dsig > 0, dsig, 1.0), np.where(disc == 0, 0.0, np.inf))
    return SampledWitness(n, counts, left, right, expectations, total, sum_sigma, analytic.sum,
                          float(z), disc, dz)
