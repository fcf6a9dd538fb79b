"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` so that the CLI and the
JSON reports can surface it without parsing messages.
"""


class SparseRWREError(Exception):
    code = "ERROR"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class InvalidParam(SparseRWREError, ValueError):
    code = "INVALID_PARAM"


class NumericFailure(SparseRWREError, ArithmeticError):
    code = "NUMERIC_FAILURE"


class NoRootRegion(SparseRWREError):
    code = "NO_ROOT_REGION"


class NotTransient(SparseRWREError):
    code = "NOT_TRANSIENT"


class InfiniteMeanXi(SparseRWREError):
    code = "INFINITE_MEAN_XI"


class BudgetExceeded(SparseRWREError):
    code = "BUDGET_EXCEEDED"


class PreconditionViolated(SparseRWREError):
    code = "PRECONDITION_VIOLATED"


class InsufficientTail(SparseRWREError):
    code = "INSUFFICIENT_TAIL"


class TruncationCap(SparseRWREError):
    code = "TRUNCATION_CAP"


class NonpositiveSample(SparseRWREError, ValueError):
    code = "NONPOSITIVE_SAMPLE"


class TooFewSamples(SparseRWREError, ValueError):
    code = "TOO_FEW_SAMPLES"


class MissingEstimate(SparseRWREError):
    code = "MISSING_ESTIMATE"


class UnsupportedCase(SparseRWREError):
    code = "UNSUPPORTED_CASE"


class Misconfigured(SparseRWREError):
    code = "MISCONFIGURED"


class ConfigError(SparseRWREError, ValueError):
    code = "CONFIG_ERROR"
