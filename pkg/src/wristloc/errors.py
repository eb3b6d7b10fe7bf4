"""Exception hierarchy shared by all wristloc modules.

Every domain error carries a short stable ``code`` used by the CLI as an
error prefix, so scripts can match on ``error[<code>]:`` lines.
"""


class WristlocError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "error"


# geometry ------------------------------------------------------------------

class BehindCamera(WristlocError):
    """Point has non-positive depth along the camera's +z axis."""

    code = "behind-camera"


# synthworld ----------------------------------------------------------------

class PlacementFailure(WristlocError):
    """Non-overlapping object placement could not be found."""

    code = "placement"


class InvalidSpec(WristlocError):
    """Trajectory specification violates its invariants."""

    code = "invalid-spec"


class InvalidConfig(WristlocError):
    """Generation or run configuration is invalid."""

    code = "invalid-config"


class IOFailure(WristlocError):
    """Filesystem read or write failed."""

    code = "io"


# dataset -------------------------------------------------------------------

class SchemaError(WristlocError):
    """On-disk record is missing a field or holds an invalid value."""

    code = "schema"


class VersionError(WristlocError):
    """File format version is not supported."""

    code = "version"


class TooFewGroups(WristlocError):
    """Not enough distinct object groups for the requested split."""

    code = "too-few-groups"


class InvalidName(WristlocError):
    """Object name is empty or collides with the routing signifier."""

    code = "invalid-name"


# model ---------------------------------------------------------------------

class DimensionMismatch(WristlocError):
    """Array shapes do not agree with the layer configuration."""

    code = "dimension"


class RoutingViolation(WristlocError):
    """Prompt was dispatched to the wrong model path."""

    code = "routing"


# training ------------------------------------------------------------------

class NonFiniteLoss(WristlocError):
    """Training loss became NaN or infinite."""

    code = "non-finite-loss"


# evaluation ----------------------------------------------------------------

class EmptyTestSet(WristlocError):
    """Evaluation requested on an empty record list."""

    code = "empty-test-set"


class EmptyInput(WristlocError):
    """Statistic requested on an empty value list."""

    code = "empty-input"


class DegenerateSpread(WristlocError):
    """Interquartile range is zero; robust scaling is undefined."""

    code = "degenerate-spread"


class EmptyGroup(WristlocError):
    """A two-sample test received an empty sample."""

    code = "empty-group"


class InsufficientGroup(WristlocError):
    """A hypothesis has fewer than two records on one side."""

    code = "insufficient-group"

    def __init__(self, hypothesis: str, message: str | None = None):
        self.hypothesis = hypothesis
        super().__init__(message or f"hypothesis {hypothesis!r} has fewer than 2 records on one side")
