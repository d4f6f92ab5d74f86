"""Exception hierarchy.

Everything raised deliberately by the package derives from :class:`CcepError`.
Input problems (bad files, bad configs, impossible requests) derive from
:class:`ValidationError`; the CLI maps those to exit code 1 and everything
else to exit code 2.
"""


class CcepError(Exception):
    """Base class for all package errors."""


class ValidationError(CcepError, ValueError):
    """Input data or configuration is invalid."""


# -- dataset -----------------------------------------------------------------

class MissingColumnError(ValidationError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing or unexpected column: {column!r}")


class NonFiniteValueError(ValidationError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-finite value at row {row}, column {column!r}")


class BadEnumError(ValidationError):
    def __init__(self, row, column, value=None):
        self.row = row
        self.column = column
        super().__init__(f"invalid value {value!r} at row {row}, column {column!r}")


class LengthMismatchError(ValidationError):
    pass


class WrongStageError(ValidationError):
    pass


class IoFailureError(CcepError, OSError):
    pass


# -- generator / preprocessing ----------------------------------------------

class InvalidConfigError(ValidationError):
    pass


class UnknownElectrodeError(ValidationError):
    pass


class SingleClassTrainingError(ValidationError):
    pass


# -- resampling / splitting --------------------------------------------------

class SingleClassError(ValidationError):
    pass


class MinorityTooSmallError(ValidationError):
    pass


class TooFewPatientsError(ValidationError):
    pass


class TooManySplitsRequestedError(ValidationError):
    pass


class UnassignedPatientError(ValidationError):
    pass


# -- classifiers -------------------------------------------------------------

class BandTooNarrowError(ValidationError):
    pass


class KTooLargeError(ValidationError):
    pass


class ColumnMismatchError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class NonFiniteGradientError(CcepError, ArithmeticError):
    pass


class DimMismatchError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class DivergedLossError(CcepError, ArithmeticError):
    pass


class ConvergenceWarning(UserWarning):
    """SMO hit ``max_passes`` before every KKT condition was met."""


# -- evaluation / orchestration ---------------------------------------------

class UnevenSplitsError(ValidationError):
    pass


class PipelineError(CcepError):
    """A module error annotated with where in the pipeline it happened."""

    def __init__(self, cause, stage, split=None, model=None):
        self.cause = cause
        self.stage = stage
        self.split = split
        self.model = model
        where = f"stage={stage}"
        if split is not None:
            where += f" split={split}"
        if model is not None:
            where += f" model={model}"
        super().__init__(f"[{where}] {type(cause).__name__}: {cause}")

    @property
    def is_validation(self):
        return isinstance(self.cause, ValidationError)
