"""
Record models for reduction traces, gradient reports and registry listings
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field


class Phase(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class RuleId(str, Enum):
    """Reduction rule identifiers as printed in traces"""

    BETA = "1"
    PROJ_PAIR = "2"
    PRIM_LIT = "3"
    JAC_APPLY = "4"
    DUAL_JAC = "5"
    DUAL_COMPOSE = "6"
    LET_LAST = "7"
    LET_SPLIT = "8"
    CONSTANT = "9"
    LINEAR_SUM_FREE = "10a"
    LINEAR_SUM = "10b"
    LINEAR_ID = "11"
    LINEAR_PROJ = "12"
    PAIR_LEFT = "13a"
    PAIR_RIGHT = "13b"
    PAIR_BOTH = "13c"
    JACOBIAN = "14"
    FUNCTION_SYMBOL = "15"
    DUAL_MAP_CONST = "16a"
    DUAL_MAP_FREE = "16b"
    DUAL_MAP_BOTH = "16c"
    PULLBACK = "17"
    ABSTRACTION = "18"
    APP_FREE_ARG = "19a"
    APP_BOUND = "19b"
    APP_BOUND_CONST = "19c"
    PAIR_DEPENDENT = "20a"
    PAIR_CONST = "20b"
    ADMIN = "A"
    FOLD = "sum"


class TraceRecord(BaseModel):
    """One reduction step"""

    step: int = Field(..., ge=1, description="1-based step number, premise steps included")
    rule: RuleId
    phase: Phase = Phase.FORWARD
    depth: int = Field(default=0, ge=0, description="Premise nesting; 0 for top-level steps")
    redex: str = Field(..., description="The contracted redex, printed")
    result: str = Field(..., description="What the redex was replaced with, printed")


class TraceNote(BaseModel):
    """A remark attached to the trace, such as a stuck value"""

    step: int = Field(..., ge=0)
    depth: int = Field(default=0, ge=0)
    note: str
    term: str


class GradReport(BaseModel):
    """A Jacobian row computed by the engine, optionally cross-checked"""

    point: List[float]
    row: int = Field(..., ge=1)
    gradient: List[float]
    steps: int = Field(default=0, ge=0)
    oracle: Optional[List[float]] = Field(default=None, description="Row from the numeric reverse-mode oracle")
    finite_difference: Optional[List[float]] = Field(default=None, description="Row from central differences")
    ok: Optional[bool] = Field(default=None, description="Verdict of the cross-check, when one was run")


class CheckReport(BaseModel):
    """Outcome of type checking a program"""

    ok: bool
    type: Optional[str] = None
    kind: Optional[str] = None
    message: Optional[str] = None
    line: Optional[int] = None
    column: Optional[int] = None


class PrimitiveInfo(BaseModel):
    name: str
    n_in: int = Field(..., ge=1)
    n_out: int = Field(..., ge=1)


class LetBinding(BaseModel):
    """One binding of an A-normal form"""

    name: str
    bound: str = Field(..., description="The elementary term, printed")


class RunReport(BaseModel):
    """Normal form of a program"""

    value: str
    type: Optional[str] = Field(default=None, description="Type of the program, when it has one")
    steps: int = Field(default=0, ge=0, description="Reduction steps, premise steps included")
    notes: List[TraceNote] = Field(default_factory=list)
