"""Hamiltonian builders for the benchmark models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliString, SparseHamiltonian
from .sim import EvolutionOracle

# level -> (structure evolution time in us, coefficient accuracy in rad/us)
RYDBERG_SCHEDULE = {
    1: (0.08, 0.005),
    2: (0.2, 0.005),
    3: (6.0, 0.001),
    4: (60.0, 0.0001),
    5: (1200.0, 0.00001),
}


@dataclass(frozen=True)
class RydbergParams:
    """Equally spaced chain.  Omega and Delta are angular (rad/us); c6 is in MHz um^6."""

    atom_count: int = 5
    spacing: float = 10.0
    c6: float = 862690.0
    omega: float = 1.5
    delta: float = -4.0
    scale: float | None = None     # None: normalize by the largest |coefficient|

    def __post_init__(self):
        if self.atom_count < 1 or self.spacing <= 0 or self.c6 <= 0:
            raise ValueError("invalid Rydberg chain parameters")

    def interaction(self, j: int, l: int) -> float:
        """Van der Waals shift 2 pi c6 / r^6 in rad/us."""
        r = abs(j - l) * self.spacing
        return 2 * math.pi * self.c6 / r ** 6


def rydberg_physical(p: RydbergParams) -> SparseHamiltonian:
    """Pauli expansion in rad/us: X = Omega/2, ZZ = V/4, Z = -Delta/2 - sum_l V/4."""
    n = p.atom_count
    terms = {}
    for j in range(n):
        terms[PauliString.single(n, j, "X")] = p.omega / 2
        zc = -p.delta / 2
        for l in range(n):
            if l != j:
                zc -= p.interaction(j, l) / 4
        terms[PauliString.single(n, j, "Z")] = zc
        for l in range(j + 1, n):
            zz = PauliString(0, (1 << (n - 1 - j)) | (1 << (n - 1 - l)), n)
            terms[zz] = p.interaction(j, l) / 4
    return SparseHamiltonian(n, terms)


def rydberg_scale(p: RydbergParams) -> float:
    return p.scale if p.scale is not None else rydberg_physical(p).max_abs()


def build_rydberg_chain(p: RydbergParams) -> SparseHamiltonian:
    """Normalized chain Hamiltonian (max |coefficient| <= 1); multiply by rydberg_scale for rad/us."""
    return rydberg_physical(p).scaled(1.0 / rydberg_scale(p))


@dataclass(frozen=True)
class CrosstalkSpec:
    pairs: tuple = ((0, 3, 0.55),)     # (i, j, coefficient) for XX + YY on a distant pair
    all_to_all: float = 0.7            # coefficient of the weight-n Z string

    def __post_init__(self):
        for i, j, c in self.pairs:
            if i == j or abs(c) > 1:
                raise ValueError(f"bad crosstalk pair {(i, j, c)}")
        if abs(self.all_to_all) > 1:
            raise ValueError("all-to-all coefficient must satisfy |c| <= 1")


def _pair(n: int, i: int, j: int, letter: str) -> PauliString:
    return PauliString.single(n, i, letter).with_letter(j, letter)


def build_disordered_xy(n: int, seed: int, crosstalk: CrosstalkSpec | None = CrosstalkSpec(),
                        j_range: tuple[float, float] = (0.2, 1.0)) -> SparseHamiltonian:
    """Nearest-neighbour J_i (X_i X_{i+1} + Y_i Y_{i+1}) with J_i uniform in j_range.

    `crosstalk` adds distant XX + YY pairs and one all-to-all Z...Z term;
    None gives the bare chain.
    """
    if n < 3:
        raise ValueError("the XY chain needs at least 3 sites")
    rng = np.random.default_rng(seed)
    J = rng.uniform(*j_range, size=n - 1)
    terms = {}
    for i in range(n - 1):
        for letter in "XY":
            terms[_pair(n, i, i + 1, letter)] = float(J[i])
    if crosstalk is not None:
        for i, j, c in crosstalk.pairs:
            if max(i, j) >= n:
                continue
            for letter in "XY":
                terms[_pair(n, i, j, letter)] = float(c)
        if crosstalk.all_to_all:
            terms[PauliString.from_label("Z" * n)] = float(crosstalk.all_to_all)
    return SparseHamiltonian(n, terms)


def zxz_hamiltonian(n: int, perturbation: float = 0.0, seed: int | None = None) -> SparseHamiltonian:
    """Sum of Z X Z on consecutive triples plus seeded single-site X, Z and neighbouring ZZ corrections."""
    if n < 3:
        raise ValueError("the ZXZ chain needs at least 3 sites")
    terms = {}
    for i in range(n - 2):
        p = PauliString.single(n, i, "Z").with_letter(i + 1, "X").with_letter(i + 2, "Z")
        terms[p] = 1.0
    if perturbation:
        rng = np.random.default_rng(seed)
        extra = [PauliString.single(n, i, a) for i in range(n) for a in "XZ"]
        extra += [_pair(n, i, i + 1, "Z") for i in range(n - 1)]
        for p in extra:
            terms[p] = terms.get(p, 0.0) + float(perturbation * rng.uniform(-1, 1))
    return SparseHamiltonian(n, terms)


def build_zxz_blackbox(n: int, theta: float = 0.1, seed: int | None = None,
                       perturbation: float = 0.0) -> EvolutionOracle:
    """Fixed-step oracle exposing only powers of exp(-i theta H_eff)."""
    return EvolutionOracle(zxz_hamiltonian(n, perturbation, seed), step=theta)


@dataclass
class PlantedModel:
    terms: dict[str, float] = field(default_factory=dict)

    def hamiltonian(self) -> SparseHamiltonian:
        return SparseHamiltonian.from_labels(self.terms)


def random_planted(n: int, M: int, eps: float, rng: np.random.Generator) -> SparseHamiltonian:
    """M distinct random strings with log-uniform magnitudes in [eps, 1] and random signs."""
    terms = {}
    while len(terms) < M:
        x, z = int(rng.integers(0, 1 << n)), int(rng.integers(0, 1 << n))
        if x == 0 and z == 0:
            continue
        p = PauliString(x, z, n)
        if p in terms:
            continue
        mag = math.exp(rng.uniform(math.log(eps), 0.0))
        terms[p] = mag * (1 if rng.random() < 0.5 else -1)
    return SparseHamiltonian(n, terms)
