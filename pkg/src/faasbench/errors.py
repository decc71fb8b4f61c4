class FaasBenchError(Exception):
    pass


class ConfigError(FaasBenchError, ValueError):
    """Invalid configuration: bad names, out-of-range values, missing models."""


class InputError(FaasBenchError, ValueError):
    """Invalid argument to a pure computation (empty samples, out-of-range n)."""
