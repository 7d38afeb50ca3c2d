import math

import numpy as np
import pytest

from hamlearn.errors import ContractError, DimensionError, InsufficientSamplesError
from hamlearn.pauli import PauliString, SparseHamiltonian
from hamlearn.sim import EvolutionOracle, SpamModel
from hamlearn.structure import StructureConfig
from hamlearn.twirl import (PauliRateVector, TwirlBatch, TwirlSample, detection_floor, pauli_error_rates_exact,
                            population_recover, required_samples, sample_pauli_channel,
                            structure_learn_single_copy, twirled_channel_sample)

from oracles import bell_distribution, ptm_rates, random_terms, unitary

P = PauliString.from_label
H_ = SparseHamiltonian.from_labels


def rates_of(d: dict) -> PauliRateVector:
    n = len(next(iter(d)))
    return PauliRateVector({P(k): v for k, v in d.items()}, n)


def flip_freq(batch: TwirlBatch, qubit: int, axis: int) -> tuple[float, int]:
    sel = (batch.in_axis[:, qubit] == axis) & (batch.meas_axis[:, qubit] == axis)
    flips = batch.in_bit[sel, qubit] ^ batch.outcome[sel, qubit]
    return float(flips.mean()), int(sel.sum())


# ------------------------------------------------------------- exact rates

def test_exact_rates_single_x():
    r = pauli_error_rates_exact(H_({"X": 0.3}), 1.0)
    assert r.get(P("X")) == pytest.approx(math.sin(0.3) ** 2, abs=1e-14)
    assert r.get(P("I")) == pytest.approx(math.cos(0.3) ** 2, abs=1e-14)
    assert r.get(P("Z")) == pytest.approx(0.0, abs=1e-14)


def test_exact_rates_zero_time():
    r = pauli_error_rates_exact(H_({"XY": 0.4, "ZI": 0.2}), 0.0)
    assert r.get(P("II")) == pytest.approx(1.0) and r.total() == pytest.approx(1.0)


def test_exact_rates_match_oracles_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        terms = random_terms(rng, n, int(rng.integers(1, 4)))
        t = float(rng.uniform(0, 2))
        got = pauli_error_rates_exact(H_(terms), t)
        assert got.total() == pytest.approx(1.0, abs=1e-12)
        U = unitary(terms, t)
        ref = ptm_rates(U) if n < 3 else bell_distribution(U)
        for lab, v in ref.items():
            assert got.get(P(lab)) == pytest.approx(v, abs=1e-10)


def test_ptm_and_bell_oracles_agree_n3():
    U = unitary({"XYZ": 0.5, "ZZI": -0.3, "IXX": 0.2}, 0.9)
    a, b = ptm_rates(U), bell_distribution(U)
    assert max(abs(a[k] - b[k]) for k in a) < 1e-12


def test_exact_rates_size_limit():
    with pytest.raises(DimensionError):
        pauli_error_rates_exact(H_({"X" * 7: 1.0}), 0.1)


# ---------------------------------------------------------------- sampling

def test_twirled_sample_identity_channel():
    H = H_({"XZ": 0.6, "YY": -0.3})
    b = twirled_channel_sample(EvolutionOracle(H), 0.5, H, 10, np.random.default_rng(1), shots=20_000)
    same = b.in_axis == b.meas_axis
    assert np.all(b.outcome[same] == b.in_bit[same])
    # mismatched axes give unbiased coins
    assert abs(b.outcome[~same].mean() - 0.5) < 0.01


def test_twirled_sample_z_flip_rates():
    theta, tau = 0.7, 0.5
    o = EvolutionOracle(H_({"Z": theta}))
    b = twirled_channel_sample(o, tau, SparseHamiltonian.zero(1), 4, np.random.default_rng(2), shots=200_000)
    p = math.sin(theta * tau) ** 2
    for axis, expect in ((0, p), (1, p), (2, 0.0)):
        f, k = flip_freq(b, 0, axis)
        assert abs(f - expect) < 4 * math.sqrt(max(p * (1 - p), 1e-12) / k) + 1e-12
    assert o.ledger.total_evolution_time == pytest.approx(tau * 200_000)


def test_statevector_and_exact_methods_agree():
    H = H_({"XI": 0.5, "ZZ": 0.3, "IY": -0.4})
    hat = SparseHamiltonian.zero(2)
    shots = 6000
    ex = twirled_channel_sample(EvolutionOracle(H), 0.6, hat, 2, np.random.default_rng(3), shots=shots)
    sv = twirled_channel_sample(EvolutionOracle(H), 0.6, hat, 2, np.random.default_rng(4), shots=shots,
                                method="statevector")
    for q in range(2):
        for axis in range(3):
            (f1, k1), (f2, k2) = flip_freq(ex, q, axis), flip_freq(sv, q, axis)
            f = 0.5 * (f1 + f2)
            sd = math.sqrt(max(f * (1 - f), 1e-4) * (1 / k1 + 1 / k2))
            assert abs(f1 - f2) < 4.5 * sd


def test_negative_tau_rejected():
    with pytest.raises(ContractError):
        twirled_channel_sample(EvolutionOracle(H_({"X": 1.0})), -0.1, SparseHamiltonian.zero(1), 1,
                               np.random.default_rng(0))


def test_records_roundtrip():
    b = sample_pauli_channel(rates_of({"II": 0.8, "XZ": 0.2}), 50, np.random.default_rng(5))
    recs = b.records()
    assert all(isinstance(r, TwirlSample) and len(r.outcomes) == 2 for r in recs)
    back = TwirlBatch.from_records(recs)
    for f in ("in_axis", "in_bit", "meas_axis", "outcome"):
        assert np.array_equal(getattr(back, f), getattr(b, f))
    with pytest.raises(ValueError):
        TwirlSample(("+",), ("x", "z"), (0,))


# ------------------------------------------------------------------ recovery

def test_required_samples_formula():
    assert required_samples(3, 0.05, 0.1) == math.ceil(2 * (17 / 8) ** 3 / 0.0025 * math.log(3 / 0.005))


def test_recover_identity_channel():
    b = sample_pauli_channel(rates_of({"II": 1.0}), required_samples(2, 0.05, 0.05), np.random.default_rng(6))
    r = population_recover(b, 0.05, 0.05)
    assert set(r.rates) == {P("II")} and r.get(P("II")) == pytest.approx(1.0, abs=0.025)


def test_recover_single_qubit_rate():
    p = math.sin(0.3) ** 2
    assert p == pytest.approx(0.0873322, abs=1e-6)
    eps1 = 0.02
    b = sample_pauli_channel(rates_of({"I": 1 - p, "X": p}), required_samples(1, eps1, 0.05),
                             np.random.default_rng(7))
    r = population_recover(b, eps1, 0.05)
    assert abs(r.get(P("X")) - p) < 0.005
    assert r.get(P("Y")) < eps1 and r.get(P("Z")) < eps1


def test_recover_sparse_four_qubit_channel():
    truth = {"IIII": 0.7, "XZIY": 0.15, "ZZZZ": 0.1, "IYXI": 0.05}
    eps1 = 0.04
    delta = 0.05
    m = required_samples(4, eps1, delta)
    failures = 0
    for seed in range(20):
        b = sample_pauli_channel(rates_of(truth), m, np.random.default_rng(100 + seed))
        r = population_recover(b, eps1, delta)
        ok = all(abs(r.get(P(lab)) - v) <= eps1 / 2 for lab, v in truth.items() if v >= eps1)
        ok = ok and all(v < eps1 for p, v in r.rates.items() if p.label not in truth)
        # every planted error is always listed
        assert {P(k) for k in truth} <= set(r.rates), seed
        failures += not ok
    # each run may fail with probability delta; P(Binomial(20, 0.05) > 3) < 0.02
    assert failures <= 3


def test_recovered_list_is_capped():
    rng = np.random.default_rng(8)
    labs = [PauliString(int(x), int(z), 3) for x in range(8) for z in range(8)]
    w = rng.dirichlet(np.ones(64))
    rv = PauliRateVector({p: float(v) for p, v in zip(labs, w)}, 3)
    eps1 = 0.1
    r = population_recover(sample_pauli_channel(rv, 20_000, rng), eps1, 0.05, check_budget=False)
    assert len(r.rates) <= math.floor(4 / eps1)


def test_insufficient_samples():
    b = sample_pauli_channel(rates_of({"I": 1.0}), 100, np.random.default_rng(9))
    with pytest.raises(InsufficientSamplesError):
        population_recover(b, 0.05, 0.05)


def test_recovery_under_spam_shrinks_only_slightly():
    p = 0.2
    b = sample_pauli_channel(rates_of({"I": 1 - p, "Z": p}), 200_000, np.random.default_rng(10),
                             spam=SpamModel(0.02))
    r = population_recover(b, 0.05, 0.05, check_budget=False)
    assert abs(r.get(P("Z")) - p) < 0.03


# --------------------------------------------------------- structure route

def test_detection_floor_formula():
    assert detection_floor(4, 2, 100) == pytest.approx(1 / 64 - 1 / 256 - 1 / 1600)
    assert detection_floor(4, 2, 100, 0.02) < 0


def test_single_copy_empty_when_cancelled():
    H = H_({"XZI": 0.8, "IYY": -0.6})
    s = structure_learn_single_copy(EvolutionOracle(H), H, StructureConfig(0.5, 2), rng=np.random.default_rng(11))
    assert len(s) == 0


def test_single_copy_finds_terms():
    H = H_({"XZI": 0.8, "IYY": -0.6})
    s = structure_learn_single_copy(EvolutionOracle(H), SparseHamiltonian.zero(3), StructureConfig(0.5, 2),
                                    rng=np.random.default_rng(12))
    assert {P("XZI"), P("IYY")} <= s.candidates


def test_single_copy_sample_cap():
    with pytest.raises(ContractError):
        structure_learn_single_copy(EvolutionOracle(H_({"XXXXX": 0.5})), SparseHamiltonian.zero(5),
                                    StructureConfig(0.5, 12), rng=np.random.default_rng(0))
