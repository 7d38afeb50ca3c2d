"""Two-copy structure learning: Bell sampling of the cancelled evolution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .pauli import PauliString, SparseHamiltonian
from .sim import (NO_SPAM, EvolutionOracle, SpamModel, apply_pauli, bell_probabilities,
                  evolve_trotter_cancel, index_to_pauli, prepare_bell_pairs, sample_prep_errors)


@dataclass(frozen=True)
class StructureConfig:
    mu_m: float
    M_est: int
    shots: int = 2000
    C: float = 4.0
    r1: int | None = None

    def __post_init__(self):
        if not 0 < self.mu_m <= 1:
            raise ValueError(f"mu_m must lie in (0, 1], got {self.mu_m}")
        if self.M_est < 1 or self.shots < 1 or self.C < 2 or (self.r1 is not None and self.r1 < 1):
            raise ValueError("invalid structure-learning configuration")


@dataclass
class SupportSet:
    counts: dict[PauliString, int] = field(default_factory=dict)
    shots: int = 0

    def __post_init__(self):
        for p, c in self.counts.items():
            if p.is_identity or c < 1:
                raise ValueError("support sets hold non-identity strings with positive counts")

    @property
    def candidates(self) -> set[PauliString]:
        return set(self.counts)

    def __len__(self) -> int:
        return len(self.counts)

    def sorted(self) -> list[PauliString]:
        return sorted(self.counts)

    def to_dict(self) -> dict:
        return {"shots": self.shots, "counts": {p.label: c for p, c in sorted(self.counts.items())}}


def choose_tau_r1(cfg: StructureConfig) -> tuple[float, int]:
    tau = 1.0 / (cfg.C * cfg.M_est * cfg.mu_m)
    r1 = cfg.r1 if cfg.r1 is not None else math.ceil(cfg.C * cfg.M_est ** 2 / cfg.mu_m ** 2)
    return tau, r1


def quantize_structure_time(oracle: EvolutionOracle, tau: float, r1: int) -> tuple[float, int]:
    """Round (tau, r1) onto a fixed-step oracle's grid: one step per Trotter slice."""
    if oracle.step is None:
        return tau, r1
    steps = max(1, round(tau / oracle.step))
    return steps * oracle.step, steps


def theoretical_shots(M: int, delta: float, C: float = 4.0) -> int:
    """Shot count C^2 M^2 log(M/delta) from the detection-probability analysis."""
    return math.ceil(C * C * M * M * math.log(max(M, 2) / delta))


def _bell_counts(oracle, hat_H, tau, r1, shots, spam, rng) -> dict[PauliString, int]:
    n = oracle.n
    base = prepare_bell_pairs(n)
    px, pz = sample_prep_errors(spam, 2 * n, shots, rng)
    # shots that received the same preparation error share one exact distribution
    patterns, group_sizes = np.unique(np.stack([px, pz], axis=1), axis=0, return_counts=True)
    q = spam.meas_rate(2 * n)
    counts: dict[int, int] = {}
    for (x, z), size in zip(patterns, group_sizes):
        state = base if x == 0 and z == 0 else apply_pauli(base, PauliString(int(x), int(z), 2 * n))
        state = evolve_trotter_cancel(state, oracle, hat_H, tau, r1, experiments=int(size))
        probs = bell_probabilities(state)
        drawn = rng.multinomial(int(size), probs)
        idx = np.nonzero(drawn)[0]
        if q > 0:
            outcomes = np.repeat(idx, drawn[idx])
            x_bits, z_bits = outcomes >> n, outcomes & ((1 << n) - 1)
            # readout flips act on the 2n measured bits: system bits carry x, ancilla bits carry z
            fx = (rng.random((outcomes.size, n)) < q).astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))
            fz = (rng.random((outcomes.size, n)) < q).astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))
            outcomes = ((x_bits ^ fx) << n) | (z_bits ^ fz)
            idx, cnt = np.unique(outcomes, return_counts=True)
        else:
            cnt = drawn[idx]
        for i, c in zip(idx, cnt):
            counts[int(i)] = counts.get(int(i), 0) + int(c)
    return counts


def structure_learn_two_copy(oracle: EvolutionOracle, hat_H: SparseHamiltonian, cfg: StructureConfig,
                             spam: SpamModel = NO_SPAM, rng: np.random.Generator | None = None,
                             tau: float | None = None) -> SupportSet:
    """Bell-sample exp(-i(H - hatH) tau) and return every non-identity outcome with its count.

    `tau` overrides the evolution time from `choose_tau_r1`, with r1 scaled
    so the Trotter step stays the same length.
    """
    if cfg.shots < 1:
        raise ValueError("shot budget must be positive")
    if hat_H.n != oracle.n:
        raise DimensionError("cancellation Hamiltonian and oracle disagree on qubit count")
    rng = rng if rng is not None else np.random.default_rng()
    t, r1 = choose_tau_r1(cfg)
    if tau is not None:
        r1 = max(1, math.ceil(r1 * tau / t))
        t = tau
    t, r1 = quantize_structure_time(oracle, t, r1)
    raw = _bell_counts(oracle, hat_H, t, r1, cfg.shots, spam, rng)
    counts = {index_to_pauli(i, oracle.n): c for i, c in raw.items() if i != 0}
    return SupportSet(counts, cfg.shots)
