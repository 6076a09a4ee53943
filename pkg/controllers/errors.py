"""
Error hierarchy shared by the controllers.

The command surface maps these to exit statuses:
DataError -> 2, any other LmpError (or unexpected exception) -> 3.
"""


class LmpError(Exception):
    """Base class for every failure raised by the controllers."""

    exit_code = 3
    kind = "internal"


class DataError(LmpError):
    """Input data is malformed or does not match the requested configuration."""

    exit_code = 2
    kind = "data"


class DimacsError(DataError):
    kind = "dimacs"


class DatasetError(DataError):
    kind = "dataset"


class HeaderVersionError(DatasetError):
    kind = "header-version"


class DimensionMismatchError(DataError):
    kind = "dimension-mismatch"


class FingerprintMismatchError(DataError):
    kind = "fingerprint-mismatch"


class FeatureNameMismatchError(DataError):
    kind = "feature-mismatch"


class InstanceSetMismatchError(DataError):
    kind = "instance-set-mismatch"


class ClassTooSmallError(DataError):
    kind = "class-too-small"


class ModelError(LmpError):
    kind = "model"


class SingularSystemError(ModelError):
    kind = "singular-system"


class TooFewExamplesError(ModelError):
    kind = "too-few-examples"


class FeatureError(LmpError):
    kind = "feature"


class WindowNotClosedError(LmpError):
    kind = "window-not-closed"


class EmptyBranchSetError(LmpError):
    kind = "empty-branch-set"


class SolverError(LmpError):
    kind = "solver"
