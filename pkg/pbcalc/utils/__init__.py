# pbcalc/utils/__init__.py
# Shared error handling utilities

from pbcalc.utils.errors import (
    ANFFuelExhausted,
    ANormalForm,
    DimensionMismatch,
    ErrorCode,
    FuelExhausted,
    HigherOrderResult,
    LoweringError,
    ParseError,
    PbCalcError,
    RegistryError,
    StuckPremise,
    TermShapeError,
    TypeCheckError,
    TypeErrorKind,
)

__all__ = [
    "ANFFuelExhausted",
    "ANormalForm",
    "DimensionMismatch",
    "ErrorCode",
    "FuelExhausted",
    "HigherOrderResult",
    "LoweringError",
    "ParseError",
    "PbCalcError",
    "RegistryError",
    "StuckPremise",
    "TermShapeError",
    "TypeCheckError",
    "TypeErrorKind",
]
