"""Independent reference routes: explicit kron products, scipy expm, enumeration.

Nothing here imports the package's simulator; only plain labels and dicts
cross the boundary.
"""
from functools import reduce
from itertools import product

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
LETTER = {"I": I2, "X": X2, "Y": Y2, "Z": Z2}


def dense(label: str) -> np.ndarray:
    return reduce(np.kron, [LETTER[c] for c in label])


def dense_ham(terms: dict) -> np.ndarray:
    n = len(next(iter(terms)))
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for lab, c in terms.items():
        H += c * dense(lab)
    return H


def labels(n: int):
    return ["".join(t) for t in product("IXYZ", repeat=n)]


def unitary(terms: dict, t: float, n: int | None = None) -> np.ndarray:
    if not terms:
        return np.eye(2 ** n, dtype=complex)
    return expm(-1j * t * dense_ham(terms))


def bell_distribution(U: np.ndarray) -> dict:
    """P(outcome P) = |Tr(P U)/d|^2 for U applied to half of maximally entangled pairs."""
    d = U.shape[0]
    n = d.bit_length() - 1
    return {lab: abs(np.trace(dense(lab) @ U) / d) ** 2 for lab in labels(n)}


def ptm_rates(U: np.ndarray) -> dict:
    """Pauli error rates from the diagonal of the Pauli transfer matrix (inverse character transform)."""
    d = U.shape[0]
    n = d.bit_length() - 1
    labs = labels(n)
    fid = {a: np.real(np.trace(dense(a) @ U @ dense(a) @ U.conj().T)) / d for a in labs}

    def chi(a, b):
        A, B = dense(a), dense(b)
        return 1 if np.allclose(A @ B, B @ A) else -1

    return {k: sum(chi(k, a) * fid[a] for a in labs) / d ** 2 for k in labs}


def product_state(vectors) -> np.ndarray:
    return reduce(np.kron, [np.asarray(v, dtype=complex) for v in vectors])


def tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def random_terms(rng, n: int, M: int, lo: float = -1.0, hi: float = 1.0) -> dict:
    labs = [l for l in labels(n) if set(l) != {"I"}]
    pick = rng.choice(len(labs), size=M, replace=False)
    return {labs[i]: float(rng.uniform(lo, hi)) for i in pick}
