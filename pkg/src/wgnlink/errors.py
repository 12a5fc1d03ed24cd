"""Exception types shared across the package."""


class WgnLinkError(Exception):
    """Base class for package-specific failures."""


class AlignmentError(WgnLinkError):
    """Cross-correlation peak too weak: captures are not the same noise instantiation."""


class DivergenceError(WgnLinkError):
    """Equalizer error grew instead of converging; usually the step size is too large."""


class ConfigError(WgnLinkError):
    """Experiment configuration failed to parse or violates an invariant."""
