"""Level-by-level learning driver, reports, ledger breakdown and scaling fit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DegenerateFitError, DimensionError
from .pauli import PauliString, SparseHamiltonian
from .rfe import CoefficientEstimate, ReshapeConfig, learn_coefficients
from .sim import NO_SPAM, EvolutionOracle, SpamModel, TimeLedger
from .structure import StructureConfig, structure_learn_two_copy
from .twirl import structure_learn_single_copy

ROUTES = ("two-copy", "single-copy")


@dataclass
class HierarchyConfig:
    """Learner settings.  All times and accuracies are in the oracle's units.

    `overrides` maps a 1-based level number to (structure time, coefficient
    accuracy); such a level uses the given time directly and sets its
    threshold to the smallest coefficient that time resolves.
    """

    eps: float
    M_est: int
    structure_route: str = "two-copy"
    shots_structure: int = 2000
    shots_coeff: int | None = 1000
    spam: SpamModel = NO_SPAM
    seed: int = 0
    levels: int | None = None
    overrides: dict[int, tuple[float, float]] = field(default_factory=dict)
    C: float = 4.0
    delta: float = 0.05
    reshape_c: float = 48.0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if self.structure_route not in ROUTES:
            raise ConfigError(f"unknown structure route {self.structure_route!r}")
        if self.M_est < 1 or self.shots_structure < 1 or (self.shots_coeff is not None and self.shots_coeff < 2):
            raise ConfigError("M_est and shot counts must be positive")
        if self.levels is not None and self.levels < 1:
            raise ConfigError("levels must be at least 1")
        for lvl, (T, e) in self.overrides.items():
            if lvl < 1 or T <= 0 or e <= 0:
                raise ConfigError(f"invalid override for level {lvl}")

    @property
    def n_levels(self) -> int:
        if self.levels is not None:
            return self.levels
        return max(1, math.ceil(math.log2(1 / self.eps) - 1e-12))

    def level_settings(self, j: int) -> tuple[float, float | None, float]:
        """(mu_m, structure time or None, coefficient accuracy) for 0-based level j."""
        ov = self.overrides.get(j + 1)
        if ov is None:
            return 2.0 ** -(j + 1), None, self.eps
        T, eps_j = ov
        return min(1.0, 1.0 / (self.C * self.M_est * T)), T, eps_j


@dataclass
class LevelRecord:
    level: int
    mu_m: float
    candidates: dict[str, int]
    estimates: list[CoefficientEstimate]
    structure_time: float
    coeff_time: float
    structure_shots: int

    def to_dict(self) -> dict:
        return {"level": self.level, "mu_m": self.mu_m, "candidates": dict(sorted(self.candidates.items())),
                "estimates": [e.to_dict() for e in self.estimates], "structure_time": self.structure_time,
                "coeff_time": self.coeff_time, "structure_shots": self.structure_shots}

    @classmethod
    def from_dict(cls, d: dict) -> "LevelRecord":
        return cls(d["level"], d["mu_m"], dict(d["candidates"]),
                   [CoefficientEstimate.from_dict(e) for e in d["estimates"]],
                   d["structure_time"], d["coeff_time"], d["structure_shots"])


@dataclass
class LearnReport:
    learned: SparseHamiltonian
    per_level: list[LevelRecord]
    ledger: TimeLedger
    seed: int
    scale: float = 1.0      # physical value = learned coefficient * scale

    def physical(self) -> dict[str, float]:
        return {p.label: c * self.scale for p, c in self.learned.items()}

    def level_set(self, level: int) -> dict[str, float]:
        """Accepted estimates of one level in physical units (residuals for re-detected strings)."""
        rec = self.per_level[level - 1]
        out = {}
        for e in rec.estimates:
            if e.accepted:
                out[e.pauli.label] = (e.residual if e.residual is not None else e.mu_hat) * self.scale
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.learned.n, "seed": self.seed, "scale": self.scale,
            "learned": self.learned.to_records(),
            "levels": [r.to_dict() for r in self.per_level],
            "ledger": self.ledger.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnReport":
        return cls(SparseHamiltonian.from_records(d["learned"], d["n"]),
                   [LevelRecord.from_dict(r) for r in d["levels"]],
                   TimeLedger.from_dict(d["ledger"]), d["seed"], d["scale"])


def hierarchical_learn(oracle: EvolutionOracle, cfg: HierarchyConfig, rng: np.random.Generator | None = None,
                       n: int | None = None, scale: float = 1.0) -> LearnReport:
    """Learn every term level by level, cancelling what is already known.

    Level j looks for coefficients above 2^-(j+1) with structure time
    growing as 2^j; accepted estimates are folded into the cancellation
    Hamiltonian before the next level starts.
    """
    if n is not None and n != oracle.n:
        raise DimensionError(f"oracle acts on {oracle.n} qubits, expected {n}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    hat = SparseHamiltonian.zero(oracle.n)
    reshape = ReshapeConfig(cfg.M_est, cfg.reshape_c)
    records = []
    for j in range(cfg.n_levels):
        mu_m, T, eps_j = cfg.level_settings(j)
        s_rng, c_rng = rng.spawn(2)
        scfg = StructureConfig(mu_m, cfg.M_est, cfg.shots_structure, cfg.C)
        s_phase, c_phase = f"structure/{j}", f"coeff/{j}"
        with oracle.in_phase(s_phase):
            if cfg.structure_route == "two-copy":
                support = structure_learn_two_copy(oracle, hat, scfg, cfg.spam, s_rng, tau=T)
            else:
                support = structure_learn_single_copy(oracle, hat, scfg, cfg.spam, s_rng,
                                                      delta=cfg.delta / cfg.n_levels, tau=T)
        with oracle.in_phase(c_phase):
            ests = learn_coefficients(oracle, support, eps_j, mu_m, reshape, cfg.spam, c_rng, hat_H=hat,
                                      shots_budget=cfg.shots_coeff, workers=cfg.workers)
        for e in ests:
            if e.accepted:
                hat = hat.with_term(e.pauli, e.mu_hat)
        records.append(LevelRecord(j + 1, mu_m, {p.label: c for p, c in support.counts.items()}, ests,
                                   float(oracle.ledger.phase_time(s_phase)),
                                   float(oracle.ledger.phase_time(c_phase)), support.shots))
    return LearnReport(hat, records, oracle.ledger, cfg.seed, scale)


def ledger_breakdown(report: LearnReport) -> dict:
    """Per-level structure time T1, coefficient time T2 and shot count, plus totals.

    Sums are exact rationals over the call log, so the grand total equals the
    ledger total exactly when every call belongs to a level phase.
    """
    rows = []
    grand = Fraction(0)
    for rec in report.per_level:
        j = rec.level - 1
        t1 = report.ledger.phase_time(f"structure/{j}")
        t2 = report.ledger.phase_time(f"coeff/{j}")
        grand += t1 + t2
        rows.append({"level": rec.level, "T1": float(t1), "T2": float(t2), "shots": rec.structure_shots})
    return {"rows": rows, "total": float(grand), "exact_total": grand,
            "ledger_total": report.ledger.exact_total, "replay_total": TimeLedger.replay(report.ledger.records)}


def heisenberg_fit(points) -> float:
    """Least-squares slope of log T against log eps."""
    pts = [(float(e), float(t)) for e, t in points]
    if len(pts) < 4:
        raise DegenerateFitError("need at least 4 (eps, time) points")
    eps = np.array([p[0] for p in pts])
    T = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(T <= 0):
        raise DegenerateFitError("eps and times must be positive")
    if math.log10(eps.max() / eps.min()) < 2 - 1e-9:
        raise DegenerateFitError("eps values must span at least two decades")
    slope, _ = np.polyfit(np.log(eps), np.log(T), 1)
    return float(slope)


def learned_error(learned: SparseHamiltonian, truth: SparseHamiltonian) -> float:
    keys = set(learned.paulis()) | set(truth.paulis())
    return max((abs(learned.coeff(p) - truth.coeff(p)) for p in keys), default=0.0)


def accepted_support(report: LearnReport) -> set[PauliString]:
    return set(report.learned.paulis())
