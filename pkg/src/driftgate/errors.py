"""Exception types shared across the toolkit."""


class DriftgateError(Exception):
    """Base class for toolkit-specific failures."""


class FormatError(DriftgateError):
    """A file does not conform to one of the on-disk formats.

    ``kind`` distinguishes the failure class so callers can react without
    parsing the message: one of ``magic``, ``version``, ``header``,
    ``truncated``, ``dim``, ``metadata``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class DegenerateModelError(DriftgateError):
    """The scoring covariance cannot be factorized (not positive definite).

    Carries the model version at which the failure occurred so callers can
    report or retry with a stronger shrinkage setting.
    """

    def __init__(self, message: str, version: int = 0):
        super().__init__(message)
        self.version = version
