"""Dense statevector simulation, the black-box evolution oracle and its time ledger.

Index convention: qubit 0 is the most significant bit of a basis index.  A
system Hamiltonian on n qubits acting on a k-qubit state touches the first n
qubits, so Bell-pair states use the blocked layout [system | ancilla] and
the pairing (system qubit i, ancilla qubit i).
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import expm_multiply

from .errors import DimensionError, ForwardOnlyError, GranularityError, InvalidTargetError
from .pauli import PauliString, SparseHamiltonian, pauli_mul, pauli_to_bell_outcome

DENSE_LIMIT = 10      # largest system size evolved through a cached eigendecomposition
STEP_TOL = 1e-12      # fixed-step granularity tolerance
NORM_TOL = 1e-10


# ------------------------------------------------------------ Pauli action

def _pauli_index_terms(p: PauliString, k: int | None = None):
    """Index map and phases so that (P psi)[i] = phase[i] * psi[src[i]]."""
    k = p.n if k is None else k
    shift = k - p.n
    x, z = p.x_bits << shift, p.z_bits << shift
    idx = np.arange(1 << k, dtype=np.int64)
    src = idx ^ x
    sign = 1 - 2 * (np.bitwise_count(src & z).astype(np.int64) & 1)
    phase = (1j ** (p.x_bits & p.z_bits).bit_count()) * sign
    return src, phase


def pauli_apply(amps: np.ndarray, p: PauliString, k: int | None = None) -> np.ndarray:
    src, phase = _pauli_index_terms(p, k)
    return phase * amps[src]


def pauli_matrix(p: PauliString) -> np.ndarray:
    d = 1 << p.n
    src, phase = _pauli_index_terms(p)
    m = np.zeros((d, d), dtype=complex)
    m[np.arange(d), src] = phase
    return m


def hamiltonian_matrix(H: SparseHamiltonian) -> np.ndarray:
    d = 1 << H.n
    m = np.zeros((d, d), dtype=complex)
    rows = np.arange(d)
    for p, c in H.items():
        src, phase = _pauli_index_terms(p)
        m[rows, src] += c * phase
    return m


def hamiltonian_sparse(H: SparseHamiltonian) -> csr_matrix:
    d = 1 << H.n
    rows, cols, vals = [], [], []
    for p, c in H.items():
        src, phase = _pauli_index_terms(p)
        rows.append(np.arange(d))
        cols.append(src)
        vals.append(c * phase)
    if not rows:
        return csr_matrix((d, d), dtype=complex)
    return csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d))


# ------------------------------------------------------------- propagators

def _expm1_imag(phi: np.ndarray) -> np.ndarray:
    """exp(-i phi) - 1 without cancellation for small phi."""
    s = np.sin(0.5 * phi)
    return -2.0 * s * s - 1j * np.sin(phi)


class Propagator:
    """Eigendecomposition of a dense Hamiltonian, giving exp(-iHt) for any t."""

    def __init__(self, H: SparseHamiltonian):
        self.n = H.n
        if len(H) == 0:
            self.w = np.zeros(1 << H.n)
            self.v = None
        else:
            self.w, self.v = np.linalg.eigh(hamiltonian_matrix(H))

    def unitary(self, t: float) -> np.ndarray:
        if self.v is None:
            return np.eye(1 << self.n, dtype=complex)
        return (self.v * np.exp(-1j * self.w * t)) @ self.v.conj().T

    def minus_identity(self, t: float) -> np.ndarray:
        """exp(-iHt) - I, accurate when t is tiny."""
        if self.v is None:
            return np.zeros((1 << self.n, 1 << self.n), dtype=complex)
        return (self.v * _expm1_imag(self.w * t)) @ self.v.conj().T


_PROP_CACHE: dict[tuple, Propagator] = {}


def propagator(H: SparseHamiltonian) -> Propagator:
    if H.n > DENSE_LIMIT:
        raise DimensionError(f"dense propagator limited to {DENSE_LIMIT} qubits")
    key = H.key()
    prop = _PROP_CACHE.get(key)
    if prop is None:
        if len(_PROP_CACHE) > 256:
            _PROP_CACHE.clear()
        prop = _PROP_CACHE[key] = Propagator(H)
    return prop


def power_near_identity(D: np.ndarray, r: int) -> np.ndarray:
    """E with (I + D)^r = I + E, by binary powering that never forms I + D."""
    if r < 0:
        raise ValueError("negative power")
    result = None
    base = D
    while r:
        if r & 1:
            result = base.copy() if result is None else result + base + result @ base
        r >>= 1
        if r:
            base = 2.0 * base + base @ base
    return np.zeros_like(D) if result is None else result


# ------------------------------------------------------------------- states

@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (1 << self.k,):
            raise DimensionError(f"expected {1 << self.k} amplitudes, got {a.shape}")
        nrm = np.linalg.norm(a)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {nrm!r})")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def basis(cls, k: int, index: int = 0) -> "QuantumState":
        a = np.zeros(1 << k, dtype=complex)
        a[index] = 1.0
        return cls(a, k)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation(self, p: PauliString) -> float:
        return float(np.vdot(self.amplitudes, pauli_apply(self.amplitudes, p, self.k)).real)


def _renorm(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a)


def apply_pauli(state: QuantumState, p: PauliString) -> QuantumState:
    if p.n > state.k:
        raise DimensionError("Pauli string longer than the state")
    return QuantumState(pauli_apply(state.amplitudes, p, state.k), state.k)


def evolve_exact(state: QuantumState, H: SparseHamiltonian, t: float) -> QuantumState:
    """Apply exp(-iHt) on the first H.n qubits of the state."""
    if t < 0:
        raise ForwardOnlyError(f"evolution time must be non-negative, got {t}")
    n, k = H.n, state.k
    if n > k:
        raise DimensionError(f"Hamiltonian on {n} qubits cannot act on a {k}-qubit state")
    if t == 0 or len(H) == 0:
        return state
    psi = state.amplitudes.reshape(1 << n, 1 << (k - n))
    if n <= DENSE_LIMIT:
        out = propagator(H).unitary(t) @ psi
    else:
        out = expm_multiply(-1j * t * hamiltonian_sparse(H), psi)
    return QuantumState(_renorm(out.reshape(-1)), k)


# ------------------------------------------------------------------- ledger

@dataclass(frozen=True)
class CallRecord:
    """A run of identical oracle queries: `experiments` x `queries` calls of `step`."""

    phase: str
    step: float
    queries: int = 1
    experiments: int = 1

    @property
    def time(self) -> Fraction:
        return Fraction(self.step) * self.queries * self.experiments

    def to_dict(self) -> dict:
        return {"phase": self.phase, "step": self.step, "queries": self.queries, "experiments": self.experiments}


class TimeLedger:
    """Exact accounting of evolution time spent in oracle queries.

    Durations are floats but the running total is kept as a rational number,
    so shards merge associatively and a replay of the log matches bit for bit.
    """

    def __init__(self):
        self.records: list[CallRecord] = []
        self._total = Fraction(0)
        self._phases: dict[str, list] = {}

    def charge(self, phase: str, step: float, queries: int = 1, experiments: int = 1) -> None:
        if step < 0 or queries < 0 or experiments < 0:
            raise ForwardOnlyError("ledger charges must be non-negative")
        rec = CallRecord(phase, float(step), int(queries), int(experiments))
        self.records.append(rec)
        dt = rec.time
        self._total += dt
        entry = self._phases.setdefault(phase, [0, Fraction(0)])
        entry[0] += rec.experiments
        entry[1] += dt

    def merge(self, other: "TimeLedger") -> None:
        for rec in other.records:
            self.charge(rec.phase, rec.step, rec.queries, rec.experiments)

    @property
    def exact_total(self) -> Fraction:
        return self._total

    @property
    def total_evolution_time(self) -> float:
        return float(self._total)

    @property
    def per_phase(self) -> dict[str, tuple[int, float]]:
        return {k: (v[0], float(v[1])) for k, v in self._phases.items()}

    def phase_time(self, phase: str) -> Fraction:
        return self._phases.get(phase, [0, Fraction(0)])[1]

    @staticmethod
    def replay(records) -> Fraction:
        total = Fraction(0)
        for rec in records:
            if isinstance(rec, dict):
                rec = CallRecord(rec["phase"], rec["step"], rec["queries"], rec["experiments"])
            total += Fraction(rec.step) * rec.queries * rec.experiments
        return total

    def to_dict(self) -> dict:
        return {
            "total_evolution_time": self.total_evolution_time,
            "per_phase": {k: {"experiments": e, "time": t} for k, (e, t) in sorted(self.per_phase.items())},
            "calls": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TimeLedger":
        led = cls()
        for r in data.get("calls", []):
            led.charge(r["phase"], r["step"], r["queries"], r["experiments"])
        return led


# ------------------------------------------------------------------- oracle

class EvolutionOracle:
    """Black-box forward evolution under a hidden Hamiltonian.

    Learners only call `query` (or the composite evolutions in this module);
    the hidden Hamiltonian is read by simulator-side code alone.
    `step` switches on fixed-step mode, where only integer multiples of the
    step are realizable.
    """

    def __init__(self, hidden: SparseHamiltonian, ledger: TimeLedger | None = None,
                 step: float | None = None, phase: str = "default"):
        self._hidden = hidden
        self.n = hidden.n
        self.step = None if step is None else float(step)
        self.ledger = ledger if ledger is not None else TimeLedger()
        self.phase = phase
        self._cache: dict = {}

    @property
    def mode(self) -> str:
        return "continuous" if self.step is None else f"fixed-step({self.step})"

    def check_duration(self, t: float) -> None:
        if t < 0:
            raise ForwardOnlyError(f"oracle runs forward only; got t={t}")
        if self.step is not None:
            m = round(t / self.step)
            if abs(t - m * self.step) > STEP_TOL:
                raise GranularityError(f"t={t!r} is not a multiple of the oracle step {self.step!r}")

    def charge(self, step: float, queries: int = 1, experiments: int = 1) -> None:
        self.ledger.charge(self.phase, step, queries, experiments)

    def query(self, state: QuantumState, t: float) -> QuantumState:
        self.check_duration(t)
        self.charge(t)
        if self.step is not None:
            return QuantumState(_renorm((self._fixed_power(round(t / self.step))
                                         @ state.amplitudes.reshape(1 << self.n, -1)).reshape(-1)), state.k)
        return evolve_exact(state, self._hidden, t)

    @contextmanager
    def in_phase(self, label: str):
        old = self.phase
        self.phase = label
        try:
            yield self
        finally:
            self.phase = old

    def fork(self) -> "EvolutionOracle":
        """Clone sharing the hidden Hamiltonian but charging a fresh ledger shard."""
        clone = EvolutionOracle(self._hidden, TimeLedger(), self.step, self.phase)
        clone._cache = self._cache
        return clone

    def absorb(self, shard: "EvolutionOracle") -> None:
        self.ledger.merge(shard.ledger)

    # simulator-side helpers below; they never touch the ledger
    def _fixed_power(self, m: int) -> np.ndarray:
        key = ("pow", m)
        if key not in self._cache:
            self._cache[key] = propagator(self._hidden).unitary(m * self.step)
        return self._cache[key]

    def _minus_identity(self, t: float) -> np.ndarray:
        return propagator(self._hidden).minus_identity(t)


# ---------------------------------------------------- composite evolutions

def trotter_cancel_generator(oracle: EvolutionOracle, hat_H: SparseHamiltonian, t: float, r: int) -> np.ndarray:
    """E with (exp(-iH t/r) exp(+i hatH t/r))^r = I + E (simulator side, uncharged)."""
    key = ("trotter", hat_H.key(), float(t), int(r))
    E = oracle._cache.get(key)
    if E is None:
        dt = t / r
        D = oracle._minus_identity(dt)
        if len(hat_H):
            D2 = propagator(hat_H).minus_identity(-dt)
            D = D + D2 + D @ D2
        E = power_near_identity(D, r)
        if len(oracle._cache) > 512:
            oracle._cache.clear()
        oracle._cache[key] = E
    return E


def evolve_trotter_cancel(state: QuantumState, oracle: EvolutionOracle, hat_H: SparseHamiltonian,
                          t: float, r: int, experiments: int = 1) -> QuantumState:
    """Apply (exp(-iH t/r) exp(+i hatH t/r))^r; each oracle factor is charged t/r.

    `experiments` charges that many identical repetitions of the whole
    sequence, for callers that simulate a batch of shots sharing one state.
    """
    if r < 1:
        raise ValueError("Trotter step count must be at least 1")
    if hat_H.n != oracle.n:
        raise DimensionError("cancellation Hamiltonian and oracle disagree on qubit count")
    oracle.check_duration(t / r)
    oracle.charge(t / r, queries=r, experiments=experiments)
    if t == 0:
        return state
    n, k = oracle.n, state.k
    psi = state.amplitudes.reshape(1 << n, 1 << (k - n))
    if n <= DENSE_LIMIT:
        E = trotter_cancel_generator(oracle, hat_H, t, r)
        out = psi + E @ psi
    else:
        out = psi
        Hs = hamiltonian_sparse(oracle._hidden)
        Hh = hamiltonian_sparse(hat_H)
        for _ in range(r):
            out = expm_multiply(1j * (t / r) * Hh, out)
            out = expm_multiply(-1j * (t / r) * Hs, out)
    return QuantumState(_renorm(out.reshape(-1)), k)


# --------------------------------------------------------------- Bell pairs

def prepare_bell_pairs(n: int) -> QuantumState:
    d = 1 << n
    a = np.zeros(d * d, dtype=complex)
    j = np.arange(d)
    a[j * d + j] = 1.0 / math.sqrt(d)
    return QuantumState(a, 2 * n)


def bell_probabilities(state: QuantumState) -> np.ndarray:
    """Bell-basis outcome distribution, indexed by x_bits * 2^n + z_bits.

    Realized as the transversal basis change CNOT(ancilla_i -> system_i)
    followed by a Hadamard on every ancilla, then Born probabilities.
    """
    if state.k % 2:
        raise DimensionError("Bell measurement needs an even number of qubits")
    n = state.k // 2
    d = 1 << n
    M = state.amplitudes.reshape(d, d)
    s = np.arange(d)[:, None]
    a = np.arange(d)[None, :]
    M = M[s ^ a, a]
    M = (M @ sla.hadamard(d).astype(float)) / math.sqrt(d)
    p = (np.abs(M) ** 2).reshape(-1)
    return p / p.sum()


def index_to_pauli(index: int, n: int) -> PauliString:
    return PauliString(int(index) >> n, int(index) & ((1 << n) - 1), n)


def measure_bell_basis(state: QuantumState, rng: np.random.Generator) -> tuple[int, ...]:
    p = bell_probabilities(state)
    idx = int(rng.choice(p.size, p=p))
    return pauli_to_bell_outcome(index_to_pauli(idx, state.k // 2))


# ------------------------------------------------ product-eigenstate setup

_PLUS_STATES = {
    "I": np.array([1, 0], dtype=complex),
    "Z": np.array([1, 0], dtype=complex),
    "X": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "Y": np.array([1, 1j], dtype=complex) / math.sqrt(2),
}
# (|+1,b> + |-1,b>)/sqrt2 for each letter b
_SUPERPOSED = {
    "Z": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "X": np.array([1, 0], dtype=complex),
    "Y": np.array([1, 0], dtype=complex),
}
# single-qubit flips: Q+ swaps |+1,b> and |-1,b>; Q- sends |+1,b> -> i|-1,b>, |-1,b> -> -i|+1,b>
FLIPS = {
    "Z": {"plus": (1, "X"), "minus": (1, "Y")},
    "X": {"plus": (1, "Z"), "minus": (-1, "Y")},
    "Y": {"plus": (1, "Z"), "minus": (1, "X")},
}
_BLOCH = {  # Bloch vectors (x, y, z) of the single-qubit inputs above
    "Z*": (1.0, 0.0, 0.0), "X*": (0.0, 0.0, 1.0), "Y*": (0.0, 0.0, 1.0),
    "I": (0.0, 0.0, 1.0), "Z": (0.0, 0.0, 1.0), "X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0),
}
_AXIS = {"X": 0, "Y": 1, "Z": 2}


def _check_site(P_s: PauliString, jstar: int) -> None:
    if P_s.is_identity:
        raise InvalidTargetError("target string is the identity")
    if not 0 <= jstar < P_s.n or P_s.letter(jstar) == "I":
        raise InvalidTargetError(f"site {jstar} is not in the support of {P_s}")


def prepare_product_eigenstate(P_s: PauliString, jstar: int) -> QuantumState:
    _check_site(P_s, jstar)
    vec = np.ones(1, dtype=complex)
    for q in range(P_s.n):
        b = P_s.letter(q)
        vec = np.kron(vec, _SUPERPOSED[b] if q == jstar else _PLUS_STATES[b])
    return QuantumState(vec, P_s.n)


def pm_observable(P_s: PauliString, jstar: int, which: str) -> tuple[int, PauliString]:
    """(sign, string) of the observable whose mean is cos(2 mu t) (plus) or sin(2 mu t) (minus)."""
    _check_site(P_s, jstar)
    sign, letter = FLIPS[P_s.letter(jstar)][which]
    return sign, P_s.with_letter(jstar, letter)


def _input_expectation(B: PauliString, P_s: PauliString, jstar: int) -> float:
    """Tr[B rho0] for the product input state of (P_s, jstar)."""
    val = 1.0
    for q in range(B.n):
        lb = B.letter(q)
        if lb == "I":
            continue
        key = P_s.letter(q) + "*" if q == jstar else P_s.letter(q)
        val *= _BLOCH[key][_AXIS[lb]]
        if val == 0.0:
            return 0.0
    return val


def measure_pm_observable(state: QuantumState, P_s: PauliString, jstar: int, which: str,
                          rng: np.random.Generator) -> int:
    sign, O = pm_observable(P_s, jstar, which)
    ev = sign * state.expectation(O)
    p_plus = min(1.0, max(0.0, 0.5 * (1.0 + ev)))
    return 1 if rng.random() < p_plus else -1


# --------------------------------------------------------------------- SPAM

@dataclass(frozen=True)
class SpamModel:
    """Per-qubit depolarizing preparation noise plus independent readout flips.

    Unless given explicitly, rates come from the budget: eps_spam/2 per
    phase, split evenly over the k qubits (or bits) of the experiment.
    """

    eps_spam: float = 0.0
    prep_flip: float | None = None
    meas_flip: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.eps_spam <= 1.0:
            raise ValueError("eps_spam must lie in [0, 1]")

    @property
    def active(self) -> bool:
        return self.eps_spam > 0 or bool(self.prep_flip) or bool(self.meas_flip)

    def prep_rate(self, k: int) -> float:
        return self.prep_flip if self.prep_flip is not None else self.eps_spam / (2 * k)

    def meas_rate(self, k: int) -> float:
        return self.meas_flip if self.meas_flip is not None else self.eps_spam / (2 * k)

    def prep_pauli_probabilities(self, k: int) -> dict[str, float]:
        p = self.prep_rate(k)
        return {"I": 1 - 0.75 * p, "X": 0.25 * p, "Y": 0.25 * p, "Z": 0.25 * p}


NO_SPAM = SpamModel()


def sample_prep_errors(model: SpamModel, k: int, shots: int, rng: np.random.Generator):
    """Per-shot (x, z) masks of the Pauli inserted by depolarizing preparation noise."""
    p = model.prep_rate(k)
    if p <= 0:
        return np.zeros(shots, dtype=np.int64), np.zeros(shots, dtype=np.int64)
    hit = rng.random((shots, k)) < p
    letter = np.where(hit, rng.integers(0, 4, size=(shots, k)), 0)
    weights = (1 << np.arange(k - 1, -1, -1)).astype(np.int64)
    x = ((letter == 1) | (letter == 2)).astype(np.int64) @ weights
    z = ((letter == 2) | (letter == 3)).astype(np.int64) @ weights
    return x, z


def apply_spam(model: SpamModel, phase: str, obj, rng: np.random.Generator):
    if phase == "prep":
        if not isinstance(obj, QuantumState):
            raise TypeError("prep noise acts on a QuantumState")
        x, z = sample_prep_errors(model, obj.k, 1, rng)
        if x[0] == 0 and z[0] == 0:
            return obj
        return apply_pauli(obj, PauliString(int(x[0]), int(z[0]), obj.k))
    if phase == "meas":
        bits = np.asarray(obj, dtype=np.int64)
        q = model.meas_rate(bits.shape[-1])
        if q <= 0:
            return bits
        return bits ^ (rng.random(bits.shape) < q)
    raise ValueError(f"unknown SPAM phase {phase!r}")


# --------------------------------------- exact reshaped-experiment engine

def _twirl_block(D: np.ndarray, A: PauliString, B: PauliString) -> np.ndarray:
    """2x2 block G with R - I restricted to span{A, B} for the step channel U = I + D."""
    mats = [pauli_matrix(A), pauli_matrix(B)]
    d = D.shape[0]
    G = np.empty((2, 2))
    for j, Pb in enumerate(mats):
        DPb = D @ Pb
        delta = DPb + Pb @ D.conj().T + DPb @ D.conj().T
        for i, Pa in enumerate(mats):
            G[i, j] = np.real(np.trace(Pa @ delta)) / d
    return G


def reshaped_pm_expectation(oracle: EvolutionOracle, P_s: PauliString, jstar: int, which: str,
                            t: float, r2: int, hat_H: SparseHamiltonian | None = None,
                            spam: SpamModel = NO_SPAM) -> float:
    """Exact single-shot mean of the plus/minus observable after reshaped evolution.

    Every shot draws fresh commutant elements, so its outcome law is set by
    the commutant-averaged step channel.  That average is block diagonal in
    the Pauli-transfer basis with 2x2 blocks pairing A with A*P_s, so only
    the block holding the measured observable is needed.  Simulator side.
    """
    n = oracle.n
    sign, O = pm_observable(P_s, jstar, which)
    _, Op = pauli_mul(O, P_s)
    basis = (O, Op)
    p_prep = spam.prep_rate(n)
    c = np.array([_input_expectation(B, P_s, jstar) * (1 - p_prep) ** B.weight for B in basis])
    if t > 0 and r2 > 0:
        dt = t / r2
        if oracle.step is not None:
            D = oracle._fixed_power(round(dt / oracle.step)) - np.eye(1 << n)
        else:
            D = oracle._minus_identity(dt)
        if hat_H is not None and len(hat_H):
            D2 = propagator(hat_H).minus_identity(-dt)
            D = D + D2 + D @ D2
        G = _twirl_block(D, *basis)
        E = power_near_identity(G, r2)
        out = c[0] + E[0] @ c
    else:
        out = c[0]
    ev = sign * out * (1 - 2 * spam.meas_rate(n)) ** O.weight
    return float(min(1.0, max(-1.0, ev)))


def sample_reshaped_pm(oracle: EvolutionOracle, P_s: PauliString, jstar: int, which: str,
                       t: float, r2: int, shots: int, rng: np.random.Generator,
                       hat_H: SparseHamiltonian | None = None, spam: SpamModel = NO_SPAM) -> np.ndarray:
    """Draw `shots` independent +-1 outcomes of the reshaped experiment, charging the ledger."""
    if r2 < 1:
        raise ValueError("r2 must be at least 1")
    oracle.check_duration(t / r2)
    ev = reshaped_pm_expectation(oracle, P_s, jstar, which, t, r2, hat_H, spam)
    oracle.charge(t / r2, queries=r2, experiments=shots)
    plus = rng.random(shots) < 0.5 * (1 + ev)
    return np.where(plus, 1, -1)
