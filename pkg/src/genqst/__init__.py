"""Generative-model quantum state tomography on simulated Pauli POVM data."""
__version__ = "0.1.0"

from .errors import (
    CorrectionError,
    NotInvertibleError,
    NotPSDError,
    NumericError,
    SizeError,
    StageError,
    TomographyError,
    TrainingError,
    ValidationError,
)
from .generative import RnnParams, TrainingConfig, exact_distribution, sample_sequences, train
from .metrics import all_correlations, classical_fidelity, pauli_correlation, quantum_fidelity
from .mle import MleConfig, PhysicalFit, mle_project
from .povm import (
    OutcomeDataset,
    PovmSet,
    ProbDist,
    empirical_distribution,
    make_povm,
    povm_distribution,
    reconstruct_linear_inversion,
    sample_dataset,
)
from .quantum_sim import Circuit, NoiseModel, build_ghz, densify, random_state

__all__ = [
    "Circuit",
    "CorrectionError",
    "MleConfig",
    "NoiseModel",
    "NotInvertibleError",
    "NotPSDError",
    "NumericError",
    "OutcomeDataset",
    "PhysicalFit",
    "PovmSet",
    "ProbDist",
    "RnnParams",
    "SizeError",
    "StageError",
    "TomographyError",
    "TrainingConfig",
    "TrainingError",
    "ValidationError",
    "all_correlations",
    "build_ghz",
    "classical_fidelity",
    "densify",
    "empirical_distribution",
    "exact_distribution",
    "make_povm",
    "mle_project",
    "pauli_correlation",
    "povm_distribution",
    "quantum_fidelity",
    "random_state",
    "reconstruct_linear_inversion",
    "sample_dataset",
    "sample_sequences",
    "train",
]
