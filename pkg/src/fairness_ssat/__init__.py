"""SSAT-based verification of group fairness for trained binary classifiers."""

from fairness_ssat.errors import (
    ContractViolation,
    EmptyGroupError,
    FairnessSsatError,
    InputValidationError,
    ParseError,
    StructuralError,
)
from fairness_ssat.ssat_core import (
    CnfFormula,
    Quantifier,
    SolveResult,
    SsatFormula,
    condition,
    evaluate,
    evaluate_reference,
    negate_tseitin,
    solve_ur,
    weighted_model_count,
)
from fairness_ssat.verifier import (
    FairnessVerifier,
    disparate_impact,
    equalized_odds,
    required_sample_size,
    statistical_parity,
    verify_enum,
    verify_learn,
)

__version__ = "0.1.0"

__all__ = [
    "CnfFormula",
    "ContractViolation",
    "EmptyGroupError",
    "FairnessSsatError",
    "FairnessVerifier",
    "InputValidationError",
    "ParseError",
    "Quantifier",
    "SolveResult",
    "SsatFormula",
    "StructuralError",
    "condition",
    "disparate_impact",
    "equalized_odds",
    "evaluate",
    "evaluate_reference",
    "negate_tseitin",
    "required_sample_size",
    "solve_ur",
    "statistical_parity",
    "verify_enum",
    "verify_learn",
    "weighted_model_count",
]
