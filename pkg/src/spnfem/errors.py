"""Exception types raised across the package."""


class SpnFemError(Exception):
    """Base class for all package-specific errors."""


class InvalidOrderError(SpnFemError, ValueError):
    """The requested angular order is not an odd positive integer."""


class AssumptionViolationError(SpnFemError, ValueError):
    """Cross-section data violate the positivity/dominance assumptions."""


class MisalignedRegionError(SpnFemError, ValueError):
    """A material region box cannot be represented by mesh breakpoints."""


class ConfigurationError(SpnFemError, ValueError):
    """Inconsistent problem setup (unknown material, bad mode, ...)."""


class SchemaError(SpnFemError, ValueError):
    """A configuration file failed validation.

    Carries the list of offending paths/messages in ``problems``.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


class SingularSystemError(SpnFemError, RuntimeError):
    """A linear system could not be factorized or solved accurately."""


class LayoutError(SpnFemError, ValueError):
    """Subdomain boxes do not tile the domain, or interfaces mismatch."""


class NotADiffusionModelError(SpnFemError, ValueError):
    """A diffusion-only view was requested for a model with nhat > 1."""
