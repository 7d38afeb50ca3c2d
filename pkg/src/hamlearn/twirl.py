"""Single-copy structure learning through Pauli twirling and population recovery.

Each sample prepares a random single-qubit stabilizer state on every qubit
(six states), runs the twirled channel and measures every qubit along a
random axis.  A qubit whose preparation and measurement axes agree reveals
whether the error letter commutes with that axis; the others carry no
information.  Products of per-qubit unbiased indicator estimators give
unbiased estimates of the error mass on any letter prefix, which drives a
branch-and-prune search for the heavy error strings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, DimensionError, InsufficientSamplesError
from .pauli import PauliString, SparseHamiltonian
from .sim import (NO_SPAM, EvolutionOracle, QuantumState, SpamModel, apply_pauli, apply_spam,
                  evolve_trotter_cancel, propagator, sample_prep_errors, trotter_cancel_generator)
from .structure import StructureConfig, SupportSet, choose_tau_r1, quantize_structure_time

AXES = "xyz"
STATE_LABELS = {(0, 0): "+", (0, 1): "-", (1, 0): "+i", (1, 1): "-i", (2, 0): "0", (2, 1): "1"}
_LABEL_CODES = {v: k for k, v in STATE_LABELS.items()}
RATES_MAX_QUBITS = 6
# commutation sign between letter e (I, X, Y, Z) and the Pauli of axis a (x, y, z)
_CHI = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
VARIANCE_BASE = 17 / 8    # per-qubit second-moment bound of the indicator estimator
MAX_SAMPLES = 50_000_000


@dataclass(frozen=True)
class TwirlSample:
    input_bases: tuple[str, ...]
    meas_bases: tuple[str, ...]
    outcomes: tuple[int, ...]

    def __post_init__(self):
        if not len(self.input_bases) == len(self.meas_bases) == len(self.outcomes):
            raise ValueError("twirl sample fields must have equal length")


@dataclass
class TwirlBatch:
    """Columnar store of twirl samples; rows are shots, columns qubits."""

    in_axis: np.ndarray      # 0, 1, 2 for x, y, z
    in_bit: np.ndarray       # 0 for the +1 eigenstate, 1 for -1
    meas_axis: np.ndarray
    outcome: np.ndarray      # 0 for eigenvalue +1

    @property
    def m(self) -> int:
        return self.in_axis.shape[0]

    @property
    def n(self) -> int:
        return self.in_axis.shape[1]

    def records(self) -> list[TwirlSample]:
        out = []
        for i in range(self.m):
            out.append(TwirlSample(
                tuple(STATE_LABELS[(int(a), int(b))] for a, b in zip(self.in_axis[i], self.in_bit[i])),
                tuple(AXES[int(a)] for a in self.meas_axis[i]),
                tuple(int(o) for o in self.outcome[i])))
        return out

    @classmethod
    def from_records(cls, samples) -> "TwirlBatch":
        samples = list(samples)
        codes = np.array([[_LABEL_CODES[s] for s in smp.input_bases] for smp in samples], dtype=np.int8)
        return cls(codes[..., 0].copy(), codes[..., 1].copy(),
                   np.array([[AXES.index(a) for a in s.meas_bases] for s in samples], dtype=np.int8),
                   np.array([s.outcomes for s in samples], dtype=np.int8))

    @classmethod
    def concat(cls, parts) -> "TwirlBatch":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("in_axis", "in_bit", "meas_axis", "outcome")))


@dataclass
class PauliRateVector:
    rates: dict[PauliString, float]
    n: int

    def get(self, p: PauliString) -> float:
        return self.rates.get(p, 0.0)

    def total(self) -> float:
        return float(sum(self.rates.values()))

    def linf_distance(self, other: "PauliRateVector") -> float:
        keys = set(self.rates) | set(other.rates)
        return max((abs(self.get(k) - other.get(k)) for k in keys), default=0.0)

    def to_dict(self) -> dict:
        return {p.label: r for p, r in sorted(self.rates.items())}


# ------------------------------------------------------------ exact rates

def pauli_rates_of_unitary(U: np.ndarray) -> np.ndarray:
    """|Tr(P U)/d|^2 for every Pauli, as an array indexed [x_bits, z_bits]."""
    d = U.shape[0]
    m = np.arange(d)
    # Tr(P_{x,z} U) = i^{|x&z|} sum_m (-1)^{|z&m|} U[m, m^x]: a Walsh-Hadamard transform per x
    G = U[m[None, :], m[None, :] ^ m[:, None]]
    F = G @ sla.hadamard(d).astype(float)
    return np.abs(F) ** 2 / (d * d)


def pauli_error_rates_exact(H: SparseHamiltonian, t: float) -> PauliRateVector:
    if H.n > RATES_MAX_QUBITS:
        raise DimensionError(f"exact Pauli rates limited to {RATES_MAX_QUBITS} qubits")
    R = pauli_rates_of_unitary(propagator(H).unitary(t))
    return _rates_from_array(R, H.n)


def _rates_from_array(R: np.ndarray, n: int, floor: float = 0.0) -> PauliRateVector:
    xs, zs = np.nonzero(R > floor)
    return PauliRateVector({PauliString(int(x), int(z), n): float(R[x, z]) for x, z in zip(xs, zs)}, n)


# ---------------------------------------------------------------- sampling

def _draw_settings(rng, m, n):
    return (rng.integers(0, 3, (m, n), dtype=np.int8), rng.integers(0, 2, (m, n), dtype=np.int8),
            rng.integers(0, 3, (m, n), dtype=np.int8))


def sample_from_errors(ex: np.ndarray, ez: np.ndarray, n: int, rng: np.random.Generator,
                       spam: SpamModel = NO_SPAM) -> TwirlBatch:
    """Classical sampling of the prepare/measure process for given per-shot Pauli errors."""
    m = ex.shape[0]
    in_axis, in_bit, meas_axis = _draw_settings(rng, m, n)
    px, pz = sample_prep_errors(spam, n, m, rng)
    ex, ez = ex ^ px, ez ^ pz
    shifts = np.arange(n - 1, -1, -1)
    xb = ((ex[:, None] >> shifts) & 1).astype(np.int8)
    zb = ((ez[:, None] >> shifts) & 1).astype(np.int8)
    anti = np.where(in_axis == 0, zb, np.where(in_axis == 2, xb, xb ^ zb))
    same = in_axis == meas_axis
    out = np.where(same, in_bit ^ anti, rng.integers(0, 2, (m, n), dtype=np.int8)).astype(np.int8)
    q = spam.meas_rate(n)
    if q > 0:
        out ^= (rng.random((m, n)) < q).astype(np.int8)
    return TwirlBatch(in_axis, in_bit, meas_axis, out)


def sample_pauli_channel(rates: PauliRateVector, m: int, rng: np.random.Generator,
                         spam: SpamModel = NO_SPAM, chunk: int = 1 << 20) -> TwirlBatch:
    """Twirl samples of a Pauli channel given directly by its error rates."""
    keys = sorted(rates.rates)
    p = np.array([rates.rates[k] for k in keys])
    p = p / p.sum()
    xs = np.array([k.x_bits for k in keys], dtype=np.int64)
    zs = np.array([k.z_bits for k in keys], dtype=np.int64)
    parts = []
    for start in range(0, m, chunk):
        size = min(chunk, m - start)
        idx = rng.choice(len(keys), size=size, p=p)
        parts.append(sample_from_errors(xs[idx], zs[idx], rates.n, rng, spam))
    return TwirlBatch.concat(parts)


_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_ROT = {0: _H, 1: _H @ np.diag([1, -1j]), 2: np.eye(2, dtype=complex)}
_EIG = {(0, 0): [1, 1], (0, 1): [1, -1], (1, 0): [1, 1j], (1, 1): [1, -1j], (2, 0): [1, 0], (2, 1): [0, 1]}


def _statevector_shot(oracle, tau, hat_H, r1, rng, spam, in_axis, in_bit, meas_axis):
    n = oracle.n
    vec = np.ones(1, dtype=complex)
    for a, b in zip(in_axis, in_bit):
        v = np.array(_EIG[(int(a), int(b))], dtype=complex)
        vec = np.kron(vec, v / np.linalg.norm(v))
    st = apply_spam(spam, "prep", QuantumState(vec, n), rng)
    sigma = PauliString(int(rng.integers(0, 1 << n)), int(rng.integers(0, 1 << n)), n)
    st = apply_pauli(st, sigma)
    st = evolve_trotter_cancel(st, oracle, hat_H, tau, r1)
    st = apply_pauli(st, sigma)
    rot = np.ones((1, 1), dtype=complex)
    for a in meas_axis:
        rot = np.kron(rot, _ROT[int(a)])
    probs = np.abs(rot @ st.amplitudes) ** 2
    idx = int(rng.choice(probs.size, p=probs / probs.sum()))
    bits = np.array([(idx >> (n - 1 - q)) & 1 for q in range(n)], dtype=np.int8)
    return apply_spam(spam, "meas", bits, rng).astype(np.int8)


def twirled_channel_sample(oracle: EvolutionOracle, tau: float, hat_H: SparseHamiltonian, r1: int,
                           rng: np.random.Generator, shots: int = 1, spam: SpamModel = NO_SPAM,
                           method: str = "exact", chunk: int = 1 << 20) -> TwirlBatch:
    """Samples of the Pauli-twirled, Trotter-cancelled evolution.

    method="statevector" simulates each shot literally: random Pauli, random
    six-state input, evolution, the same Pauli again, random-axis readout.
    method="exact" samples the error string from the twirled channel's Pauli
    rates, which is the exact per-shot law once the random Pauli is averaged.
    """
    if tau < 0:
        raise ContractError("tau must be non-negative")
    n = oracle.n
    if method == "statevector":
        in_axis, in_bit, meas_axis = _draw_settings(rng, shots, n)
        out = np.stack([_statevector_shot(oracle, tau, hat_H, r1, rng, spam, in_axis[i], in_bit[i], meas_axis[i])
                        for i in range(shots)])
        return TwirlBatch(in_axis, in_bit, meas_axis, out)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    oracle.check_duration(tau / r1)
    oracle.charge(tau / r1, queries=r1, experiments=shots)
    U = np.eye(1 << n) + trotter_cancel_generator(oracle, hat_H, tau, r1)
    R = pauli_rates_of_unitary(U).reshape(-1)
    R = R / R.sum()
    parts = []
    for start in range(0, shots, chunk):
        size = min(chunk, shots - start)
        idx = rng.choice(R.size, size=size, p=R)
        parts.append(sample_from_errors(idx >> n, idx & ((1 << n) - 1), n, rng, spam))
    return TwirlBatch.concat(parts)


# ------------------------------------------------------- population recovery

def required_samples(n: int, eps1: float, delta: float, c: float = 2.0) -> int:
    """Sample count c * (17/8)^n / eps1^2 * log(n / (eps1 delta)).

    The (17/8)^n factor is the second-moment growth of the product estimator.
    """
    return math.ceil(c * VARIANCE_BASE ** n / eps1 ** 2 * math.log(max(n, 2) / (eps1 * delta)))


def _estimator_table() -> np.ndarray:
    # code 0: axes differ (estimator 1/4 for every letter); code 1 + 2a + s: axis a, observed sign s
    T = np.full((7, 4), 0.25)
    for a in range(3):
        for s in range(2):
            T[1 + 2 * a + s] = 0.25 * (1 + 9 * _CHI[:, a] * (1 - 2 * s))
    return T


def _compress_codes(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct per-sample code rows with their multiplicities, via base-7 keys."""
    n = codes.shape[1]
    key = codes @ (7 ** np.arange(n - 1, -1, -1, dtype=np.int64))
    if 7 ** n <= 1 << 22:
        counts = np.bincount(key, minlength=7 ** n)
        uniq = np.nonzero(counts)[0]
        counts = counts[uniq]
    else:
        uniq, counts = np.unique(key, return_counts=True)
    rows = (uniq[:, None] // (7 ** np.arange(n - 1, -1, -1, dtype=np.int64))) % 7
    return rows, counts


def population_recover(samples, eps1: float, delta: float, c: float = 2.0,
                       check_budget: bool = True) -> PauliRateVector:
    """Sparse estimate of the Pauli error rates with at most 4/eps1 entries."""
    batch = samples if isinstance(samples, TwirlBatch) else TwirlBatch.from_records(samples)
    m, n = batch.m, batch.n
    need = required_samples(n, eps1, delta, c)
    if check_budget and m < need:
        raise InsufficientSamplesError(m, need)
    same = batch.in_axis == batch.meas_axis
    flip = batch.in_bit ^ batch.outcome
    codes = np.where(same, 1 + 2 * batch.in_axis + flip, 0).astype(np.int64)
    rows, weight = _compress_codes(codes)
    weight = weight / m
    T = _estimator_table()
    cap = int(math.floor(4 / eps1))
    prefixes = [((), np.ones(len(rows)))]
    for q in range(n):
        col = T[rows[:, q]]
        grown = []
        for letters, prod in prefixes:
            for e in range(4):
                v = prod * col[:, e]
                est = float(weight @ v)
                if est >= eps1 / 2:
                    grown.append((est, letters + (e,), v))
        grown.sort(key=lambda g: (-g[0], g[1]))
        prefixes = [(g[1], g[2]) for g in grown[:cap]]
        ests = [g[0] for g in grown[:cap]]
    rates = {}
    for (letters, _), est in zip(prefixes, ests if n else []):
        x = z = 0
        for e in letters:
            x = (x << 1) | (e in (1, 2))
            z = (z << 1) | (e in (2, 3))
        rates[PauliString(x, z, n)] = est
    return PauliRateVector(rates, n)


# ----------------------------------------------------- structure learning

def detection_floor(C: float, M: int, r1: int, eps_spam: float = 0.0) -> float:
    """Lower bound on the Bell/twirl probability of a term at the level threshold.

    Leading term 1/(C M)^2 for a coefficient equal to mu_m at time
    1/(C M mu_m), minus Taylor, Trotter and SPAM corrections.
    """
    return 1 / (C * M) ** 2 - 1 / (C ** 3 * M ** 2) - 1 / (C ** 2 * r1) - eps_spam


def structure_learn_single_copy(oracle: EvolutionOracle, hat_H: SparseHamiltonian, cfg: StructureConfig,
                                spam: SpamModel = NO_SPAM, rng: np.random.Generator | None = None,
                                delta: float = 0.05, c: float = 2.0, samples: int | None = None,
                                tau: float | None = None, max_samples: int = MAX_SAMPLES) -> SupportSet:
    if hat_H.n != oracle.n:
        raise DimensionError("cancellation Hamiltonian and oracle disagree on qubit count")
    rng = rng if rng is not None else np.random.default_rng()
    t, r1 = choose_tau_r1(cfg)
    if tau is not None:
        r1 = max(1, math.ceil(r1 * tau / t))
        t = tau
    t, r1 = quantize_structure_time(oracle, t, r1)
    gamma = detection_floor(cfg.C, cfg.M_est, r1, spam.eps_spam)
    if gamma <= 0:
        raise ContractError(f"detection floor {gamma:.3g} is not positive; raise C or lower eps_spam")
    eps1 = gamma / 2
    m = samples if samples is not None else required_samples(oracle.n, eps1, delta, c)
    if m > max_samples:
        raise ContractError(f"single-copy route needs {m} samples (n={oracle.n}, threshold {eps1:.3g}); "
                            f"limit is {max_samples}, use the two-copy route")
    batch = twirled_channel_sample(oracle, t, hat_H, r1, rng, shots=m, spam=spam)
    rates = population_recover(batch, eps1, delta, c, check_budget=samples is None)
    counts = {p: max(1, round(r * m)) for p, r in rates.rates.items() if not p.is_identity and r > eps1}
    return SupportSet(counts, m)
