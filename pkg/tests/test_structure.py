import math

import numpy as np
import pytest

from hamlearn.errors import DimensionError
from hamlearn.pauli import PauliString, SparseHamiltonian
from hamlearn.sim import EvolutionOracle, SpamModel
from hamlearn.structure import (StructureConfig, SupportSet, choose_tau_r1, quantize_structure_time,
                                structure_learn_two_copy, theoretical_shots)

from oracles import random_terms

P = PauliString.from_label
H_ = SparseHamiltonian.from_labels


def test_choose_tau_r1_examples():
    assert choose_tau_r1(StructureConfig(0.5, 8, C=4)) == (1 / 16, 1024)
    assert choose_tau_r1(StructureConfig(1.0, 1, C=4)) == (0.25, 4)
    assert choose_tau_r1(StructureConfig(0.5, 8, r1=7))[1] == 7


def test_config_validation():
    for bad in (dict(mu_m=0.0, M_est=1), dict(mu_m=1.5, M_est=1), dict(mu_m=0.5, M_est=0),
                dict(mu_m=0.5, M_est=2, shots=0), dict(mu_m=0.5, M_est=2, C=1.0)):
        with pytest.raises(ValueError):
            StructureConfig(**bad)


def test_support_set_rejects_identity():
    with pytest.raises(ValueError):
        SupportSet({P("II"): 3})
    with pytest.raises(ValueError):
        SupportSet({P("XI"): 0})


def test_theoretical_shots():
    assert theoretical_shots(4, 0.05) == math.ceil(16 * 16 * math.log(80))


def test_quantize_to_grid():
    o = EvolutionOracle(H_({"Z": 1.0}), step=0.1)
    t, r = quantize_structure_time(o, 0.26, 500)
    assert t == pytest.approx(0.3) and r == 3
    assert quantize_structure_time(EvolutionOracle(H_({"Z": 1.0})), 0.26, 5) == (0.26, 5)


def test_exact_cancellation_gives_empty_support():
    H = H_({"XZI": 0.8, "IYY": -0.6, "ZZZ": 0.3})
    o = EvolutionOracle(H)
    s = structure_learn_two_copy(o, H, StructureConfig(0.25, 3, 2000), rng=np.random.default_rng(0))
    assert len(s) == 0 and s.shots == 2000
    tau, _ = choose_tau_r1(StructureConfig(0.25, 3))
    assert o.ledger.total_evolution_time == pytest.approx(2000 * tau)


def test_single_term_count_rate():
    # P(X outcome) = sin^2(0.8 * 0.1)
    p = math.sin(0.08) ** 2
    assert 2000 * p == pytest.approx(12.78, abs=0.01)
    counts = []
    for seed in range(60):
        s = structure_learn_two_copy(EvolutionOracle(H_({"X": 0.8})), SparseHamiltonian.zero(1),
                                     StructureConfig(1.0, 1, 2000), rng=np.random.default_rng(seed), tau=0.1)
        assert set(s.counts) <= {P("X")}
        counts.append(s.counts.get(P("X"), 0))
    sigma = math.sqrt(2000 * p * (1 - p) / 60)
    assert abs(np.mean(counts) - 2000 * p) < 4 * sigma


def test_detection_power_planted():
    mu_m, M = 0.5, 4
    for seed in range(20):
        rng = np.random.default_rng(seed)
        terms = random_terms(rng, 3, M, lo=mu_m, hi=1.0)
        signs = rng.choice([-1, 1], size=M)
        terms = {k: s * v for (k, v), s in zip(terms.items(), signs)}
        s = structure_learn_two_copy(EvolutionOracle(H_(terms)), SparseHamiltonian.zero(3),
                                     StructureConfig(mu_m, M, 2000), rng=rng)
        assert {P(k) for k in terms} <= s.candidates, seed


def test_partial_cancellation_leaves_residual_terms():
    H = H_({"XX": 0.9, "ZI": 0.6})
    hat = H_({"XX": 0.9})
    s = structure_learn_two_copy(EvolutionOracle(H), hat, StructureConfig(0.5, 2, 3000),
                                 rng=np.random.default_rng(3))
    assert P("ZI") in s.candidates
    assert s.counts.get(P("XX"), 0) <= 3


def test_spam_still_detects():
    H = H_({"XZ": 0.7, "YI": -0.5})
    s = structure_learn_two_copy(EvolutionOracle(H), SparseHamiltonian.zero(2), StructureConfig(0.5, 2, 4000),
                                 SpamModel(0.05), np.random.default_rng(4))
    assert {P("XZ"), P("YI")} <= s.candidates


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        structure_learn_two_copy(EvolutionOracle(H_({"XX": 1.0})), SparseHamiltonian.zero(3),
                                 StructureConfig(0.5, 1))


def test_fixed_step_oracle_respects_grid():
    o = EvolutionOracle(H_({"ZX": 0.6}), step=0.05)
    structure_learn_two_copy(o, SparseHamiltonian.zero(2), StructureConfig(0.5, 1, 100),
                             rng=np.random.default_rng(0))
    for rec in o.ledger.records:
        k = rec.step / 0.05
        assert abs(k - round(k)) < 1e-9
