class TamisError(Exception):
    """Base class for every error raised by this package"""


class ContractViolation(TamisError, ValueError):
    """An operation received inputs outside its documented domain"""


class ConfigurationError(TamisError, ValueError):
    """A sampler or experiment configuration is invalid"""


class TargetEvaluationError(TamisError):
    """The target density could not be evaluated for a particle.

    ``records`` holds the stages completed before the failure so callers can
    still inspect or persist the partial trace.
    """

    def __init__(self, message, particle_index=None, records=None):
        super().__init__(message)
        self.particle_index = particle_index
        self.records = list(records or [])


class OracleError(TamisError):
    """A quadrature integrand was not finite at some grid node"""
