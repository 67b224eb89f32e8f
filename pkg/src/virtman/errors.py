"""Exception types shared across the package."""


class VirtmanError(Exception):
    """Base class for all library errors."""


class ExpressionSyntaxError(VirtmanError):
    """Malformed expression text; carries the character offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExpressionSyntaxError):
    """Identifier outside the grammar (bad variable or function name)."""


class EvaluationDomainError(VirtmanError):
    """Evaluation left the real domain (sqrt of a negative, division by zero)."""


class ExpressionError(VirtmanError):
    """Operation not defined for this expression shape."""


class StructureError(VirtmanError):
    """A complex, bundle, or form family is structurally malformed."""


class DegreeError(VirtmanError):
    """Form degree incompatible with the requested operation."""


class CoverGapError(VirtmanError):
    """Partition-of-unity supports fail to cover; carries a witness point."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SupportLeakError(VirtmanError):
    """An integrand's support reaches the chart box; reduce the profile radius."""


class SceneError(VirtmanError):
    """Scene file failed schema validation or references missing objects."""
