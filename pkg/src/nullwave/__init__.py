"""Null forms and small-data simulation for 2D quasilinear wave equations."""

from . import algebra
from .algebra import (
    CoefficientTensor,
    Decomposition,
    ParameterVector,
    SemilinearTensor,
    TrigPoly,
    basis_tensor,
    check_clm_null,
    check_null,
    check_strong_null,
    classify,
    preset,
    synthesize,
)

__version__ = "0.1.0"
