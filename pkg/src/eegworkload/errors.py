"""Exception hierarchy for the toolkit.

Every failure mode exposed by the public API raises a subclass of
:class:`EegWorkloadError` so callers (and the CLI) can separate bad input
from computational failure.
"""


class EegWorkloadError(Exception):
    """Base class for all toolkit errors."""


class InputError(EegWorkloadError):
    """Invalid input data or configuration (CLI exit code 2)."""


class ComputationError(EegWorkloadError):
    """Failure during a well-formed computation (CLI exit code 1)."""


# --- recordings / file ingestion ------------------------------------------

class MalformedHeader(InputError):
    pass


class SampleCountMismatch(InputError):
    pass


class NonFiniteSample(InputError):
    pass


class MissingChannel(InputError):
    pass


class CutoffAboveNyquist(InputError):
    pass


class MissingBaseline(InputError):
    pass


# --- spectral ---------------------------------------------------------------

class SignalTooShort(InputError):
    pass


class EmptyBand(InputError):
    pass


class DegenerateSignal(ComputationError):
    """Quantity undefined because every contributing value is zero."""


class ShapeMismatch(InputError):
    pass


class DoubleNormalization(InputError):
    pass


# --- connectivity -----------------------------------------------------------

class FrequencyAboveNyquist(InputError):
    pass


class SignalShorterThanWavelet(InputError):
    pass


class LengthMismatch(InputError):
    pass


class FrequencyMismatch(InputError):
    pass


class MontageNotCanonical(InputError):
    pass


# --- labeling ---------------------------------------------------------------

class EmptySubset(InputError):
    pass


class SingularDesign(ComputationError):
    pass


class NonConvergence(ComputationError):
    pass


class DegenerateSplit(ComputationError):
    """Median split impossible: every value identical."""


# --- classifiers / selection -------------------------------------------------

class SingleClassInput(InputError):
    pass


class InsufficientSamplesForStacking(InputError):
    pass


# --- evaluation / statistics --------------------------------------------------

class ClassTooSmall(InputError):
    pass


class ClassSmallerThanK(InputError):
    pass


class DegenerateVariance(ComputationError):
    pass


class IncompletePairs(InputError):
    pass


class ConfigError(InputError):
    """Configuration failed schema validation; carries a JSON-pointer path."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer
