"""Exception types shared by the whole decoding and evaluation pipeline."""

from __future__ import annotations


class SifError(Exception):
    """Base class for every error this package reports."""

    def __init__(self, message: str, *, line_number: int | None = None):
        self.message = message
        self.line_number = line_number
        super().__init__(self.describe())

    def describe(self) -> str:
        name = type(self).__name__
        if self.line_number is not None:
            return f"{name} (line {self.line_number}): {self.message}"
        return f"{name}: {self.message}"


class ErrorLog:
    """Collects recoverable errors so a decode can report all of them at once."""

    def __init__(self) -> None:
        self.errors: list[SifError] = []

    def add(self, error: SifError) -> None:
        self.errors.append(error)

    def __len__(self) -> int:
        return len(self.errors)

    def __iter__(self):
        return iter(self.errors)


# --- reading -----------------------------------------------------------------

class MissingEndata(SifError):
    pass


class UnknownSectionHeader(SifError):
    pass


class MalformedRecord(SifError):
    pass


# --- data-phase expansion ----------------------------------------------------

class UnboundParameter(SifError):
    pass


class TypeMismatch(SifError):
    pass


class UnknownDirective(SifError):
    pass


class UnterminatedLoop(SifError):
    pass


class ZeroIncrement(SifError):
    pass


class UnboundLoopVariable(SifError):
    pass


class UndefinedGroupType(SifError):
    pass


class UndefinedElementType(SifError):
    pass


class DanglingElementUse(SifError):
    pass


class MissingParameterValue(SifError):
    pass


class InvalidBounds(SifError):
    pass


class UnusedUserParameters(SifError):
    pass


# --- model transformations ---------------------------------------------------

class RangeSignViolation(SifError):
    pass


class ZeroScaleFactor(SifError):
    pass


# --- nonlinear function programs ----------------------------------------------

class ExpressionSyntaxError(SifError):
    pass


class UnknownIntrinsic(SifError):
    pass


class UndeclaredName(SifError):
    pass


class MissingValueExpression(SifError):
    pass


class MissingDerivative(SifError):
    pass


class DomainError(SifError):
    """Intrinsic evaluated outside its domain.

    Carries the offending element or group index when the failure happens
    inside a problem evaluation.
    """

    def __init__(self, message: str, *, element_index: int | None = None,
                 group_index: int | None = None, line_number: int | None = None):
        self.element_index = element_index
        self.group_index = group_index
        super().__init__(message, line_number=line_number)

    def describe(self) -> str:
        extra = ""
        if self.element_index is not None:
            extra = f" [element {self.element_index}]"
        elif self.group_index is not None:
            extra = f" [group {self.group_index}]"
        return super().describe() + extra


# --- evaluation requests -------------------------------------------------------

class DimensionMismatch(SifError):
    pass


class NoConstraints(SifError):
    pass


class BadSubset(SifError):
    pass


class MultiplierLengthMismatch(SifError):
    pass


class UnknownAction(SifError):
    pass
