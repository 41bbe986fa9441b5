class ConfigurationError(ValueError):
    """Inconsistent shapes, layer specs, or option combinations."""


class DataFormatError(ValueError):
    """Malformed or truncated input file (frames, fixations, weights)."""


class EvaluationError(RuntimeError):
    """Forward evaluation cannot proceed (bad observation, non-finite weights)."""
