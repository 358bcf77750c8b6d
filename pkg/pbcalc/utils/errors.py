# pbcalc/utils/errors.py
# Error codes and the exception hierarchy shared by parser, typechecker, normalizer and engine
# Every library failure is a PbCalcError so the CLI can map it to an exit code and a structured record
# RELEVANT FILES: pbcalc/cli.py, pbcalc/services/*.py, pbcalc/syntax/*.py

from enum import Enum
from typing import Any, Dict, List, Optional


class ErrorCode(str, Enum):
    """Standardized error codes"""

    # Syntax and term shape
    PARSE_FAILED = "SYN_001"
    BAD_TERM_SHAPE = "SYN_002"

    # Typing (one code per TypeError kind)
    TYPE_MISMATCH = "TYP_001"
    UNBOUND_VARIABLE = "TYP_002"
    NOT_LINEAR = "TYP_003"
    NOT_A_FUNCTION = "TYP_004"
    BAD_DIMENSION = "TYP_005"
    UNANNOTATED = "TYP_006"

    # Primitive registry
    DUPLICATE_PRIMITIVE = "PRM_001"
    ZERO_DIMENSION = "PRM_002"
    DIMENSION_MISMATCH = "PRM_003"
    UNKNOWN_PRIMITIVE = "PRM_004"
    SELF_TEST_FAILED = "PRM_005"
    REGISTRY_FROZEN = "PRM_006"

    # Administrative reduction
    A_NORMAL = "ANF_001"
    ANF_FUEL_EXHAUSTED = "ANF_002"

    # Engine
    FUEL_EXHAUSTED = "ENG_001"
    STUCK_PREMISE = "ENG_002"
    HIGHER_ORDER_RESULT = "ENG_003"
    NO_REDEX = "ENG_004"

    # Oracle
    LOWERING_FAILED = "ORC_001"


class TypeErrorKind(str, Enum):
    """Kinds of typing failures"""

    MISMATCH = "mismatch"
    UNBOUND = "unbound"
    NOT_LINEAR = "not-linear"
    NOT_A_FUNCTION = "not-a-function"
    BAD_DIMENSION = "bad-dimension"
    UNANNOTATED = "unannotated"


_KIND_CODES = {
    TypeErrorKind.MISMATCH: ErrorCode.TYPE_MISMATCH,
    TypeErrorKind.UNBOUND: ErrorCode.UNBOUND_VARIABLE,
    TypeErrorKind.NOT_LINEAR: ErrorCode.NOT_LINEAR,
    TypeErrorKind.NOT_A_FUNCTION: ErrorCode.NOT_A_FUNCTION,
    TypeErrorKind.BAD_DIMENSION: ErrorCode.BAD_DIMENSION,
    TypeErrorKind.UNANNOTATED: ErrorCode.UNANNOTATED,
}


class PbCalcError(Exception):
    """Base class for every interpreter failure"""

    code: ErrorCode = ErrorCode.BAD_TERM_SHAPE

    def __init__(self, message: str, *, code: Optional[ErrorCode] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a dictionary for structured output"""
        return {"error_code": self.code.value, "error": type(self).__name__, "message": self.message, **self.details}


class ParseError(PbCalcError):
    """Syntax error with a source position"""

    code = ErrorCode.PARSE_FAILED

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})", details={"line": line, "column": column})
        self.line = line
        self.column = column


class TermShapeError(PbCalcError):
    """A term does not have the shape an operation requires"""

    code = ErrorCode.BAD_TERM_SHAPE


class TypeCheckError(PbCalcError):
    """Typing failure; carries the kind and the offending subterm's printout"""

    def __init__(self, kind: TypeErrorKind, term: str, message: str, name: Optional[str] = None):
        super().__init__(
            f"{kind.value}: {message} in `{term}`", code=_KIND_CODES[kind], details={"kind": kind.value, "term": term}
        )
        self.kind = kind
        self.term = term
        self.name = name


class RegistryError(PbCalcError):
    """Invalid registration or lookup in the primitive registry"""


class DimensionMismatch(PbCalcError):
    """Vector length does not match a primitive or graph dimension"""

    code = ErrorCode.DIMENSION_MISMATCH


class ANormalForm(PbCalcError):
    """Signal from a_step: the term contains no A-redex"""

    code = ErrorCode.A_NORMAL


class ANFFuelExhausted(PbCalcError):
    """A-normalization did not finish within its step budget"""

    code = ErrorCode.ANF_FUEL_EXHAUSTED


class FuelExhausted(PbCalcError):
    """Reduction did not reach a value within the step budget"""

    code = ErrorCode.FUEL_EXHAUSTED

    def __init__(self, message: str, tail: List[Any]):
        super().__init__(message, details={"tail": [str(entry) for entry in tail]})
        self.tail = tail


class StuckPremise(PbCalcError):
    """A premise sub-reduction ended in a term that is not a dual map of the expected shape"""

    code = ErrorCode.STUCK_PREMISE


class HigherOrderResult(PbCalcError):
    """A gradient was requested but the normal form is not a literal dual vector"""

    code = ErrorCode.HIGHER_ORDER_RESULT


class LoweringError(PbCalcError):
    """A term falls outside the first-order fragment that lowers to a graph"""

    code = ErrorCode.LOWERING_FAILED
