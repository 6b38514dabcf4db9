"""Exception types shared across the package."""


class LighthouseError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LighthouseError, ValueError):
    pass


class ConfigError(LighthouseError, ValueError):
    pass


class ContractError(LighthouseError, RuntimeError):
    """A documented precondition of an operation was violated."""
