"""Exception hierarchy for the lcptools package.

Every data- or contract-level failure raises a subclass of :class:`LcpError`
so callers (and the CLI) can distinguish domain errors from programming
errors.
"""


class LcpError(Exception):
    """Base class for all lcptools errors."""


# --- dataset loading / generation ---

class MissingFile(LcpError):
    """A manifest or raw data file does not exist."""


class MalformedManifest(LcpError):
    """Manifest or sidecar JSON is missing fields or has the wrong shape."""


class SizeMismatch(LcpError):
    """A binary file does not hold the expected number of values."""


class NonFiniteValue(LcpError):
    """Raw data contains NaN or infinity."""


class InvalidSpec(LcpError):
    """Synthetic generation spec violates its invariants."""


class DegenerateRange(LcpError):
    """Global max equals global min; min-max normalization is undefined."""


class AlreadyNormalized(LcpError):
    """Dataset was normalized before; refusing to normalize twice."""


class OutOfRange(LcpError):
    """An index (cell, timestep, split point) is outside its valid range."""


# --- cell statistics ---

class TooFewMembers(LcpError):
    """Covariance estimation needs at least two ensemble members."""


class NotNormalized(LcpError):
    """Statistics require a normalized dataset (fixed isovalues in [0, 1])."""


class OutOfRangeLcp(LcpError):
    """A level-crossing probability lies outside [0, 1]."""


# --- Monte Carlo sampling ---

class NotPositiveSemiDefinite(LcpError):
    """Covariance could not be factorized even after jitter retries."""


class NonFiniteInput(LcpError):
    """Cell statistics or features contain NaN or infinity."""


class NotDiagonal(LcpError):
    """Closed-form oracle requires all off-diagonal covariances to be zero."""


# --- surrogate model ---

class InvalidConfig(LcpError):
    """Network layer widths are inconsistent."""


class EmptyTrainingSet(LcpError):
    """Training requires at least one sample."""


class DivergedLoss(LcpError):
    """Training loss became NaN or infinite."""


class TooFewSamples(LcpError):
    """Cross-validation needs at least as many samples as folds."""


# --- model file format ---

class BadMagic(LcpError):
    """Model file does not start with the expected magic bytes."""


class VersionMismatch(LcpError):
    """Model file format version is not supported."""


class TruncatedFile(LcpError):
    """Model file ended before all declared parameters were read."""


class ShapeMismatch(LcpError):
    """Model file declares inconsistent layer shapes."""


# --- evaluation ---

class DimMismatch(LcpError):
    """Two fields being compared have different dimensions."""
