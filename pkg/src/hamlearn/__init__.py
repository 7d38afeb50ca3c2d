"""Ansatz-free learning of sparse Pauli Hamiltonians from black-box forward evolution."""
from .errors import (ConfigError, ContractError, DegenerateFitError, DimensionError, FormatError, ForwardOnlyError,
                     GranularityError, HamlearnError, InsufficientSamplesError, InvalidTargetError)
from .pauli import (CommutantSampler, PauliString, SparseHamiltonian, commutant_average, commutes, pauli_mul,
                    symplectic_product)
from .sim import EvolutionOracle, QuantumState, SpamModel, TimeLedger, evolve_exact, evolve_trotter_cancel
from .structure import StructureConfig, SupportSet, structure_learn_two_copy
from .rfe import CoefficientEstimate, ReshapeConfig, learn_coefficients, robust_frequency_estimate
from .twirl import PauliRateVector, TwirlSample, pauli_error_rates_exact, population_recover, structure_learn_single_copy
from .hierarchy import HierarchyConfig, LearnReport, heisenberg_fit, hierarchical_learn, ledger_breakdown

__version__ = "0.1.0"
