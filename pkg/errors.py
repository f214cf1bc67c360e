class RivalSamplingError(Exception):
    """Base class for errors raised by the rival sampling package"""


class DomainError(RivalSamplingError, ValueError):
    """An argument lies outside the domain of the function it was passed to"""


class ConsistencyError(RivalSamplingError, RuntimeError):
    """An incremental update was fed an event that does not match its state"""


class ConfigurationError(RivalSamplingError, ValueError):
    """An allocation plan or experiment description is invalid"""
