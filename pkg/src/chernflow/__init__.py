"""Chern-Ricci flow of almost Hermitian metrics: invariant data on Lie
algebras and a finite-difference Monge-Ampere solver on flat tori."""

__version__ = "0.1.0"

from .fiber import (  # noqa: E402
    LieAlgebraModel,
    ModelValidationError,
    build_complex_frame,
    extract_structure_coefficients,
    nijenhuis,
    validate_model,
)
from .grid import ConstantBackend, GridBackend, TorusGrid  # noqa: E402

__all__ = [
    "ConstantBackend",
    "GridBackend",
    "LieAlgebraModel",
    "ModelValidationError",
    "TorusGrid",
    "build_complex_frame",
    "extract_structure_coefficients",
    "nijenhuis",
    "validate_model",
]
