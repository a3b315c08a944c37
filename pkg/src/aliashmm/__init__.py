"""Detection, identifiability analysis and moment-based learning for HMMs with two aliased states."""

__version__ = "0.1.0"

from .baselines import BwConfig, BwResult, baum_welch, mixture_weights_em
from .decomp import AliasDecomposition, decompose, merge, reconstruct
from .errors import (
    AliasHmmError,
    DegenerateMomentError,
    ErgodicityError,
    NonMinimalError,
    NotAliasedError,
    NumericalError,
    SequenceTooShortError,
    ValidationError,
)
from .hmm import EmissionParam, Hmm, ValidationReport, density, simulate, stationary, validate
from .learner import (
    DetectionResult,
    LearnReport,
    assemble,
    detect,
    estimate_gamma_beta,
    estimate_kappa,
    identify_component,
    learn,
    learn_from_moments,
    project_stochastic,
)
from .moments import Kernel, MomentSet, empirical_moments, kernel, population_moments
from .structure import (
    DiagramSet,
    FeasibleRegion,
    MinimalityVerdict,
    analyze,
    effective_region,
    feasible_region,
    is_minimal,
    similarity_transform,
)
from .synth import four_state_model, merged_model, random_aliased_model

__all__ = [
    "AliasDecomposition", "AliasHmmError", "BwConfig", "BwResult", "DegenerateMomentError",
    "DetectionResult", "DiagramSet", "EmissionParam", "ErgodicityError", "FeasibleRegion", "Hmm",
    "Kernel", "LearnReport", "MinimalityVerdict", "MomentSet", "NonMinimalError", "NotAliasedError",
    "NumericalError", "SequenceTooShortError", "ValidationError", "ValidationReport", "analyze",
    "assemble", "baum_welch", "decompose", "density", "detect", "effective_region",
    "empirical_moments", "estimate_gamma_beta", "estimate_kappa", "feasible_region",
    "identify_component", "is_minimal", "kernel", "learn", "learn_from_moments", "merge",
    "mixture_weights_em", "population_moments", "project_stochastic", "reconstruct",
    "similarity_transform", "simulate", "stationary", "validate",
]
