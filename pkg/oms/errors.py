from typing import Sequence


class OMSError(Exception):
    """Base class for errors raised by oms."""


class InputError(OMSError, ValueError):
    """Arguments or input files that violate a precondition."""


class ConfigError(InputError):
    """An experiment config file that cannot be parsed or validated."""


class NumericError(OMSError, ArithmeticError):
    """A computation left the representable range (e.g. a non positive-definite covariance)."""


class DegenerateComponentError(NumericError):
    def __init__(self, components: Sequence[int]):
        self.components = list(components)
        super().__init__(f"mixture components {self.components} lost all responsibility")


class OrderingError(OMSError):
    """An observation older than the last one stored for its label."""


class ModelNotFound(OMSError, KeyError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(label)

    def __str__(self):
        return f"no model stored for {self.label!r}"
