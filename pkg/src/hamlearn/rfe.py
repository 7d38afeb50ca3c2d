"""Coefficient learning: Hamiltonian reshaping plus robust frequency estimation.

The frequency being estimated is theta = 2 mu, read off the signals
cos(theta t) and sin(theta t) of the plus/minus observables.  Each round
samples at t = pi / (b - a) and keeps either the lower or the upper two
thirds of the current interval.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidTargetError
from .pauli import CommutantSampler, PauliString, SparseHamiltonian
from .sim import (NO_SPAM, EvolutionOracle, QuantumState, SpamModel, apply_pauli, apply_spam,
                  measure_pm_observable, prepare_product_eigenstate, propagator, sample_reshaped_pm)

A_RANGE = 2.0          # theta = 2 mu lies in [-A, A] for |mu| <= 1
BATCH = 54             # shots per batch mean; Chebyshev gives error < 1/sqrt2 w.p. >= 2/3


@dataclass(frozen=True)
class ReshapeConfig:
    M_est: int
    c: float = 48.0
    r2_fixed: int | None = None

    def r2(self, t: float) -> int:
        if self.r2_fixed is not None:
            return self.r2_fixed
        return max(1, math.ceil(self.c * self.M_est ** 2 * t * t))

    def error_bound(self, t: float) -> float:
        """Diamond-norm bound 4 M^2 t^2 / r2 on the reshaped channel."""
        return 4 * self.M_est ** 2 * t * t / self.r2(t)


@dataclass
class RfeState:
    a: float = -A_RANGE
    b: float = A_RANGE
    round: int = 0
    m_med: int = 1
    history: list = field(default_factory=list)

    def width(self) -> float:
        return self.b - self.a

    def next_time(self) -> float:
        return math.pi / (self.b - self.a)

    def update(self, t: float, S: complex) -> None:
        """Keep the lower or upper two thirds, depending on which side theta falls."""
        centre = 0.5 * (self.a + self.b)
        side = (np.exp(-1j * centre * t) * S).imag
        if side <= 0:
            self.b = (self.a + 2 * self.b) / 3
        else:
            self.a = (2 * self.a + self.b) / 3
        self.round += 1
        self.history.append((t, complex(S)))

    def estimate(self) -> float:
        """Midpoint of the theta interval, returned in units of mu."""
        return 0.25 * (self.a + self.b)


@dataclass
class CoefficientEstimate:
    pauli: PauliString
    mu_hat: float
    eps_target: float
    evolution_time_spent: float
    accepted: bool = True
    stderr: float = 0.0
    residual: float | None = None
    rounds: int = 0

    def to_dict(self) -> dict:
        return {
            "pauli": self.pauli.label, "mu_hat": self.mu_hat, "eps_target": self.eps_target,
            "evolution_time_spent": self.evolution_time_spent, "accepted": self.accepted,
            "stderr": self.stderr, "residual": self.residual, "rounds": self.rounds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientEstimate":
        return cls(PauliString.from_label(d["pauli"]), d["mu_hat"], d["eps_target"], d["evolution_time_spent"],
                   d["accepted"], d["stderr"], d["residual"], d["rounds"])


def rounds_needed(eps: float, A: float = A_RANGE) -> int:
    lam = 2.0 * eps / 3.0
    return max(1, math.ceil(math.log(A / lam) / math.log(1.5)))


def median_batches(q: float, rounds: int, c3: float = 0.25) -> int:
    """Odd number of batch means per signal so all rounds succeed w.p. about 1 - q."""
    m = max(1, math.ceil(c3 * math.log(rounds / q)))
    return m if m % 2 else m + 1


def refine_frequency(signal: Callable[[float], complex], eps: float, A: float = A_RANGE,
                     time_grid: Callable[[float], float] | None = None) -> RfeState:
    """Run the interval refinement against an arbitrary signal source S(t) ~ exp(i theta t)."""
    st = RfeState(-A, A)
    for _ in range(rounds_needed(eps, A)):
        t = st.next_time()
        if time_grid is not None:
            t = time_grid(t)
        st.update(t, signal(t))
    return st


# ------------------------------------------------------------- reshaping

def reshaped_evolve(state: QuantumState, oracle: EvolutionOracle, P_s: PauliString, t: float,
                    cfg: ReshapeConfig, rng: np.random.Generator,
                    hat_H: SparseHamiltonian | None = None) -> QuantumState:
    """One trajectory of r2 segments Q_k exp(-iH tau) Q_k with Q_k from the commutant of P_s."""
    if P_s.is_identity:
        raise InvalidTargetError("cannot reshape onto the identity")
    r2 = _steps_for(oracle, cfg, t)
    tau = t / r2
    oracle.check_duration(tau)
    sampler = CommutantSampler(P_s)
    qx, qz = sampler.sample_bits(rng, r2)
    back = None
    if hat_H is not None and len(hat_H):
        back = propagator(hat_H).unitary(-tau)
    n = oracle.n
    for x, z in zip(qx, qz):
        Q = PauliString(int(x), int(z), n)
        state = apply_pauli(state, Q)
        if back is not None:
            state = QuantumState(_apply_system(back, state), state.k)
        state = oracle.query(state, tau)
        state = apply_pauli(state, Q)
    return state


def _apply_system(U: np.ndarray, state: QuantumState) -> np.ndarray:
    d = U.shape[0]
    out = (U @ state.amplitudes.reshape(d, -1)).reshape(-1)
    return out / np.linalg.norm(out)


def _steps_for(oracle: EvolutionOracle, cfg: ReshapeConfig, t: float) -> int:
    if oracle.step is not None:
        return max(1, round(t / oracle.step))
    return cfg.r2(t)


def _grid(oracle: EvolutionOracle) -> Callable[[float], float] | None:
    if oracle.step is None:
        return None
    step = oracle.step
    return lambda t: max(1, math.ceil(t / step - 1e-9)) * step


# ----------------------------------------------------------------- signals

def rfe_signal(oracle: EvolutionOracle, P_s: PauliString, jstar: int, t: float, which: str, m_med: int,
               cfg: ReshapeConfig, spam: SpamModel = NO_SPAM, rng: np.random.Generator | None = None,
               batch: int = BATCH, hat_H: SparseHamiltonian | None = None,
               method: str = "exact") -> float:
    """Median of `m_med` batch means of the plus or minus observable.

    method="exact" draws each shot from the commutant-averaged channel
    (the law of a single shot with fresh random conjugations);
    method="trajectory" simulates every shot's random sequence explicitly.
    """
    if m_med < 1 or m_med % 2 == 0:
        raise ValueError("m_med must be a positive odd integer")
    rng = rng if rng is not None else np.random.default_rng()
    shots = m_med * batch
    if method == "exact":
        r2 = _steps_for(oracle, cfg, t)
        out = sample_reshaped_pm(oracle, P_s, jstar, which, t, r2, shots, rng, hat_H, spam)
    elif method == "trajectory":
        out = np.empty(shots)
        for i in range(shots):
            st = prepare_product_eigenstate(P_s, jstar)
            st = apply_spam(spam, "prep", st, rng)
            st = reshaped_evolve(st, oracle, P_s, t, cfg, rng, hat_H)
            v = measure_pm_observable(st, P_s, jstar, which, rng)
            # readout flips on the measured qubits multiply into the product outcome
            flips = rng.random(P_s.weight) < spam.meas_rate(oracle.n)
            v *= (-1) ** int(flips.sum())
            out[i] = v
    else:
        raise ValueError(f"unknown method {method!r}")
    means = out.reshape(m_med, batch).mean(axis=1)
    return float(np.median(means))


def robust_frequency_estimate(oracle: EvolutionOracle, P_s: PauliString, eps: float, cfg: ReshapeConfig,
                              spam: SpamModel = NO_SPAM, rng: np.random.Generator | None = None, *,
                              q: float = 0.01, batch: int = BATCH, m_med: int | None = None,
                              shots_budget: int | None = None, hat_H: SparseHamiltonian | None = None,
                              method: str = "exact", mu_m: float = 0.0) -> CoefficientEstimate:
    """Estimate the coefficient of P_s in H - hatH to accuracy eps.

    With `shots_budget` the shots are split evenly over rounds and the two
    observables (one batch per signal); otherwise each signal takes the
    median of `m_med` batches of `batch` shots, with m_med derived from q.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if P_s.is_identity:
        raise InvalidTargetError("cannot estimate the identity coefficient")
    rng = rng if rng is not None else np.random.default_rng()
    jstar = P_s.first_site()
    L = rounds_needed(eps)
    if shots_budget is not None:
        m_med, batch = 1, max(1, shots_budget // (2 * L))
    elif m_med is None:
        m_med = median_batches(q, L)
    start = oracle.ledger.exact_total

    def signal(t: float) -> complex:
        X = rfe_signal(oracle, P_s, jstar, t, "plus", m_med, cfg, spam, rng, batch, hat_H, method)
        Y = rfe_signal(oracle, P_s, jstar, t, "minus", m_med, cfg, spam, rng, batch, hat_H, method)
        return complex(X, Y)

    st = refine_frequency(signal, eps, time_grid=_grid(oracle))
    mu = st.estimate()
    spent = float(oracle.ledger.exact_total - start)
    return CoefficientEstimate(P_s, mu, eps, spent, abs(mu) >= mu_m / 2, 0.25 * st.width(), None, st.round)


def learn_coefficients(oracle: EvolutionOracle, candidates, eps: float, mu_m: float, cfg: ReshapeConfig,
                       spam: SpamModel = NO_SPAM, rng: np.random.Generator | None = None, *,
                       hat_H: SparseHamiltonian | None = None, shots_budget: int | None = None,
                       workers: int = 1, **kw) -> list[CoefficientEstimate]:
    """Run RFE on every candidate; strings already in hatH get their residual measured and added.

    New strings with |mu_hat| < mu_m/2 are marked as rejected false positives.
    Candidates run on forked oracles with pre-split random streams, and the
    ledger shards are merged in candidate order, so results do not depend on
    the number of workers.
    """
    cands: Sequence[PauliString] = sorted(getattr(candidates, "candidates", candidates))
    if not cands:
        return []
    rng = rng if rng is not None else np.random.default_rng()
    streams = rng.spawn(len(cands))
    shards = [oracle.fork() for _ in cands]

    def run(i: int) -> CoefficientEstimate:
        p = cands[i]
        est = robust_frequency_estimate(shards[i], p, eps, cfg, spam, streams[i],
                                        shots_budget=shots_budget, hat_H=hat_H, mu_m=mu_m, **kw)
        prior = hat_H.coeff(p) if hat_H is not None else 0.0
        if prior != 0.0:
            est.residual = est.mu_hat
            est.mu_hat = prior + est.mu_hat
            est.accepted = True
        return est

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run, range(len(cands))))
    else:
        out = [run(i) for i in range(len(cands))]
    for shard in shards:
        oracle.absorb(shard)
    return out
