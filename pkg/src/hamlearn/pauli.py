"""Symplectic Pauli strings, sparse Pauli Hamiltonians and commutant sampling.

A Pauli string on n qubits is stored as two n-bit masks.  Qubit 0 is the
leftmost letter of the text form and the most significant bit of each mask,
which is also the most significant bit of a computational-basis index.  That
way `x_bits` is exactly the bit-flip pattern the string applies to a basis
state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import DimensionError, FormatError, InvalidTargetError

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTERS.items()}


def popcount(v: int) -> int:
    return int(v).bit_count()


@dataclass(frozen=True, order=True)
class PauliPhase:
    """A phase i**power_of_i."""

    power_of_i: int = 0

    def __post_init__(self):
        object.__setattr__(self, "power_of_i", self.power_of_i % 4)

    def __mul__(self, other: "PauliPhase") -> "PauliPhase":
        return PauliPhase(self.power_of_i + other.power_of_i)

    @property
    def value(self) -> complex:
        return (1, 1j, -1, -1j)[self.power_of_i]


@dataclass(frozen=True)
class PauliString:
    x_bits: int
    z_bits: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("a Pauli string needs at least one qubit")
        full = (1 << self.n) - 1
        if self.x_bits & ~full or self.z_bits & ~full or self.x_bits < 0 or self.z_bits < 0:
            raise DimensionError(f"bit masks do not fit in {self.n} qubits")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        label = label.strip().upper()
        if not label:
            raise FormatError("empty Pauli label")
        x = z = 0
        for ch in label:
            if ch not in _BITS:
                raise FormatError(f"bad Pauli letter {ch!r} in {label!r}")
            bx, bz = _BITS[ch]
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(x, z, len(label))

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(0, 0, n)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        bx, bz = _BITS[letter]
        shift = n - 1 - qubit
        return cls(bx << shift, bz << shift, n)

    def _bit(self, qubit: int) -> int:
        return 1 << (self.n - 1 - qubit)

    def letter(self, qubit: int) -> str:
        b = self._bit(qubit)
        return _LETTERS[(int(bool(self.x_bits & b)), int(bool(self.z_bits & b)))]

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in range(self.n))

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"

    def __lt__(self, other: "PauliString") -> bool:
        return (self.n, self.label) < (other.n, other.label)

    @property
    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0

    @property
    def support_mask(self) -> int:
        return self.x_bits | self.z_bits

    @property
    def weight(self) -> int:
        return popcount(self.support_mask)

    def support(self) -> list[int]:
        return [q for q in range(self.n) if self.support_mask & self._bit(q)]

    def first_site(self) -> int:
        """Leftmost qubit on which the string acts non-trivially."""
        if self.is_identity:
            raise InvalidTargetError("identity string has no non-trivial site")
        return self.n - self.support_mask.bit_length()

    def with_letter(self, qubit: int, letter: str) -> "PauliString":
        b = self._bit(qubit)
        bx, bz = _BITS[letter]
        x = (self.x_bits & ~b) | (b if bx else 0)
        z = (self.z_bits & ~b) | (b if bz else 0)
        return PauliString(x, z, self.n)


def _check_n(p: PauliString, q: PauliString) -> None:
    if p.n != q.n:
        raise DimensionError(f"qubit counts differ: {p.n} vs {q.n}")


def pauli_mul(p: PauliString, q: PauliString) -> tuple[PauliPhase, PauliString]:
    """Return (phase, r) with p @ q == phase * r as matrices."""
    _check_n(p, q)
    x, z = p.x_bits ^ q.x_bits, p.z_bits ^ q.z_bits
    # each string is i^{|x&z|} X^x Z^z; moving Z^{z1} past X^{x2} costs (-1)^{|z1&x2|}
    power = (popcount(p.x_bits & p.z_bits) + popcount(q.x_bits & q.z_bits)
             + 2 * popcount(p.z_bits & q.x_bits) - popcount(x & z))
    return PauliPhase(power), PauliString(x, z, p.n)


def symplectic_product(p: PauliString, q: PauliString) -> int:
    _check_n(p, q)
    return (popcount(p.x_bits & q.z_bits) + popcount(p.z_bits & q.x_bits)) & 1


def commutes(p: PauliString, q: PauliString) -> bool:
    return symplectic_product(p, q) == 0


def bell_outcome_to_pauli(bits) -> PauliString:
    """Decode (system, ancilla) bit pairs: (0,0)->I, (1,0)->X, (1,1)->Y, (0,1)->Z."""
    bits = [int(b) for b in bits]
    if len(bits) == 0 or len(bits) % 2:
        raise FormatError(f"Bell outcome needs an even, non-zero number of bits, got {len(bits)}")
    x = z = 0
    for i in range(0, len(bits), 2):
        x = (x << 1) | (bits[i] & 1)
        z = (z << 1) | (bits[i + 1] & 1)
    return PauliString(x, z, len(bits) // 2)


def pauli_to_bell_outcome(p: PauliString) -> tuple[int, ...]:
    out = []
    for q in range(p.n):
        b = p._bit(q)
        out += [int(bool(p.x_bits & b)), int(bool(p.z_bits & b))]
    return tuple(out)


def all_paulis(n: int) -> Iterator[PauliString]:
    for x in range(1 << n):
        for z in range(1 << n):
            yield PauliString(x, z, n)


# ---------------------------------------------------------------- commutant

@dataclass(frozen=True)
class CommutantSampler:
    """Uniform sampler over the Pauli strings that commute with `target`."""

    target: PauliString

    def __post_init__(self):
        if self.target.is_identity:
            raise InvalidTargetError("commutant of the identity is the whole group; reshaping is undefined")

    @property
    def n(self) -> int:
        return self.target.n

    def _fix_masks(self) -> tuple[int, int]:
        # flipping this coordinate toggles the symplectic product with the target
        b = self.target._bit(self.target.first_site())
        if self.target.x_bits & b:
            return 0, b
        return b, 0

    def sample_bits(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        x = rng.integers(0, 1 << n, size=size, dtype=np.int64)
        z = rng.integers(0, 1 << n, size=size, dtype=np.int64)
        odd = (np.bitwise_count(x & self.target.z_bits) + np.bitwise_count(z & self.target.x_bits)) & 1
        fx, fz = self._fix_masks()
        odd = odd.astype(bool)
        x = np.where(odd, x ^ fx, x)
        z = np.where(odd, z ^ fz, z)
        return x, z

    def sample(self, rng: np.random.Generator) -> PauliString:
        x, z = self.sample_bits(rng, 1)
        return PauliString(int(x[0]), int(z[0]), self.n)


def sample_commutant(sampler: CommutantSampler, rng: np.random.Generator) -> PauliString:
    return sampler.sample(rng)


def enumerate_commutant(target: PauliString) -> list[PauliString]:
    return [q for q in all_paulis(target.n) if commutes(q, target)]


def commutant_average(p: PauliString, target: PauliString) -> float:
    """Scalar c with mean over Q in the commutant of Q p Q equal to c * p."""
    ks = enumerate_commutant(target)
    return sum(1 if commutes(q, p) else -1 for q in ks) / len(ks)


# ------------------------------------------------------------- Hamiltonians

class SparseHamiltonian:
    """Real linear combination of non-identity Pauli strings."""

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[PauliString, float] | None = None):
        self.n = int(n)
        clean: dict[PauliString, float] = {}
        for p, c in (terms or {}).items():
            if p.n != self.n:
                raise DimensionError(f"term {p} has {p.n} qubits, Hamiltonian has {self.n}")
            if p.is_identity:
                raise FormatError("identity terms are not allowed")
            c = float(c)
            if c != 0.0:
                clean[p] = clean.get(p, 0.0) + c
        self._terms = {p: c for p, c in sorted(clean.items()) if c != 0.0}

    @classmethod
    def from_labels(cls, terms: Mapping[str, float], n: int | None = None) -> "SparseHamiltonian":
        parsed = {PauliString.from_label(k): v for k, v in terms.items()}
        if n is None:
            if not parsed:
                raise DimensionError("cannot infer qubit count of an empty Hamiltonian")
            n = next(iter(parsed)).n
        return cls(n, parsed)

    @classmethod
    def zero(cls, n: int) -> "SparseHamiltonian":
        return cls(n)

    @property
    def terms(self) -> dict[PauliString, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def paulis(self) -> list[PauliString]:
        return list(self._terms)

    def coeff(self, p: PauliString) -> float:
        return self._terms.get(p, 0.0)

    def __contains__(self, p) -> bool:
        return p in self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, SparseHamiltonian) and self.n == other.n and self._terms == other._terms

    def __repr__(self) -> str:
        body = ", ".join(f"{p.label}: {c:.6g}" for p, c in self._terms.items())
        return f"SparseHamiltonian(n={self.n}, {{{body}}})"

    def scaled(self, s: float) -> "SparseHamiltonian":
        return SparseHamiltonian(self.n, {p: s * c for p, c in self._terms.items()})

    def with_term(self, p: PauliString, c: float) -> "SparseHamiltonian":
        t = dict(self._terms)
        t[p] = c
        return SparseHamiltonian(self.n, t)

    def max_abs(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def l1(self) -> float:
        return sum(abs(c) for c in self._terms.values())

    def key(self) -> tuple:
        """Hashable fingerprint, used for caching derived matrices."""
        return (self.n, tuple((p.x_bits, p.z_bits, c) for p, c in self._terms.items()))

    def conjugated(self, q: PauliString) -> "SparseHamiltonian":
        """Q H Q: flips the sign of every term anticommuting with q."""
        return SparseHamiltonian(self.n, {p: (c if commutes(p, q) else -c) for p, c in self._terms.items()})

    def to_records(self) -> list[dict]:
        return [{"pauli": p.label, "coeff": c} for p, c in self._terms.items()]

    @classmethod
    def from_records(cls, records: Iterable[Mapping], n: int) -> "SparseHamiltonian":
        return cls(n, {PauliString.from_label(r["pauli"]): float(r["coeff"]) for r in records})


def ham_combine(a: SparseHamiltonian, b: SparseHamiltonian, scale_b: float = 1.0) -> SparseHamiltonian:
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
    terms = dict(a.terms)
    for p, c in b.items():
        terms[p] = terms.get(p, 0.0) + scale_b * c
    return SparseHamiltonian(a.n, {p: c for p, c in terms.items() if c != 0.0})


def commutant_average_hamiltonian(H: SparseHamiltonian, target: PauliString) -> SparseHamiltonian:
    """Exact mean of Q H Q over the full commutant of `target`."""
    ks = enumerate_commutant(target)
    acc: dict[PauliString, float] = {}
    for q in ks:
        for p, c in H.conjugated(q).items():
            acc[p] = acc.get(p, 0.0) + c
    return SparseHamiltonian(H.n, {p: c / len(ks) for p, c in acc.items() if abs(c) > 1e-15 * len(ks)})
