"""Exception types shared across the package."""


class HamlearnError(Exception):
    """Base class for every error raised by this package."""


class ContractError(HamlearnError):
    """A simulation or protocol contract was violated."""


class DimensionError(ContractError, ValueError):
    pass


class InvalidTargetError(ContractError, ValueError):
    pass


class FormatError(ContractError, ValueError):
    pass


class ForwardOnlyError(ContractError, ValueError):
    """Raised for negative evolution times; the oracle never runs backwards."""


class GranularityError(ContractError, ValueError):
    """Raised when a fixed-step oracle is asked for a non-multiple of its step."""


class InsufficientSamplesError(ContractError):
    def __init__(self, have: int, need: int):
        super().__init__(f"population recovery needs at least {need} samples, got {have}")
        self.have = have
        self.need = need


class DegenerateFitError(ContractError, ValueError):
    pass


class ConfigError(HamlearnError):
    """Config file failed schema validation."""
