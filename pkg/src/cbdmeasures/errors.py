"""Exception types. Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class CbdError(Exception):
    code = "ERROR"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def __str__(self) -> str:
        return f"{self.code}: {self.args[0]}"


class DomainError(CbdError, ValueError):
    code = "DOMAIN"


class ShapeError(CbdError, ValueError):
    code = "SHAPE"


class ContentNotInContext(CbdError, KeyError):
    code = "CONTENT_NOT_IN_CONTEXT"


class InvalidSystem(CbdError, ValueError):
    code = "INVALID_SYSTEM"

    def __init__(self, report):
        super().__init__("; ".join(str(v) for v in report), report=report)
        self.report = report


class TooLarge(CbdError):
    """Raised when an LP would exceed the outcome-slot cap.

    ``required`` is the cap value that would admit the system.
    """

    code = "TOO_LARGE"

    def __init__(self, required: int, cap: int):
        super().__init__(f"needs {required} slots, cap is {cap}", required=required, cap=cap)
        self.required = required
        self.cap = cap


class CapExceeded(CbdError):
    code = "CAP_EXCEEDED"


class NotCyclic(CbdError, ValueError):
    code = "NOT_CYCLIC"


class SolverFailure(CbdError):
    code = "SOLVER_FAILURE"
