"""Exception and warning types shared across the package."""


class SfControlError(Exception):
    """Base class for all errors raised by sfcontrol."""


class DimensionMismatch(SfControlError, ValueError):
    """Matrix or vector shapes are not conformable."""


class NotHurwitz(SfControlError, ValueError):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= 0."""


class SingularA22(SfControlError, ValueError):
    """The fast drift block could not be inverted."""


class NonpositiveEps(SfControlError, ValueError):
    """Scale separation parameter must be strictly positive."""


class RangeConditionViolated(SfControlError, ValueError):
    """The control channel N x + B leaves the range of the noise matrix C."""


class NotRepresentable(SfControlError, ValueError):
    """The averaged driver is not of quadratic-plus-constant form."""


class BadGrid(SfControlError, ValueError):
    """Horizon is not an integer multiple of the time step."""


class InitialStateOutsideDomain(SfControlError, ValueError):
    """Initial slow state does not lie strictly inside the stopping domain."""


class DegenerateDesign(SfControlError, RuntimeError):
    """Per-step regression produced no usable (finite) solution."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


class StepTooCoarse(SfControlError, ValueError):
    """ODE step-halving check failed to reach the requested accuracy."""


class DegenerateExponential(SfControlError, RuntimeError):
    """All exponential weights underflowed in the log-expectation estimate."""


class ConfigError(SfControlError, ValueError):
    """Experiment configuration file is malformed or inconsistent."""


class RankDeficientWarning(UserWarning):
    """Least-squares design matrix has numerical rank below column count."""


class QuadratureFallbackWarning(UserWarning):
    """Tensor quadrature dimension too large; Monte Carlo fallback used."""
