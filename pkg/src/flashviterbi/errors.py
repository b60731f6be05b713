"""Exception types shared across the decoder modules."""


class FlashViterbiError(Exception):
    """Base class for all library errors."""


class ConfigurationError(FlashViterbiError):
    """Invalid generator or decoder configuration (bad counts, p, B, P)."""


class ModelFormatError(FlashViterbiError):
    """A model or observation file failed to parse or violates an invariant.

    Carries the name of the offending field when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InfeasibleDecodeError(FlashViterbiError):
    """Every length-T state sequence has zero probability for this input."""


class BeamExhaustedError(FlashViterbiError):
    """No retained candidate has a finite successor score at some timestep."""


class InternalConsistencyError(FlashViterbiError):
    """A condition the algorithms guarantee was violated (scheduler or DP bug)."""
