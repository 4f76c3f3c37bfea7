"""Exception types raised across the package."""


class WeakValuesError(Exception):
    """Base class for every error raised by :mod:`weakvalues`."""


class GridError(WeakValuesError, ValueError):
    """Grid is malformed, too small, or two fields live on different grids."""


class NormalizationError(WeakValuesError, ValueError):
    """A state cannot be normalized (zero weight, NaN amplitudes...)."""


class NodeError(WeakValuesError):
    """Guidance velocity requested where |psi|^2 is below the node threshold."""


class TrajectoryEscape(WeakValuesError):
    """A Bohmian trajectory left the computational domain."""


class EnergyToleranceError(WeakValuesError):
    """A propagation step changed the energy by more than the allowed amount."""


class AsymptoticRegimeError(WeakValuesError, ValueError):
    """An asymptotic flux formula was used outside its regime of validity."""


class QuadratureError(WeakValuesError):
    """A numerical integral failed to reach the requested tolerance."""


class KernelNotExtractable(WeakValuesError):
    """The pointer distribution is too narrow to read off the response kernel."""


class FitRejected(WeakValuesError):
    """A Gaussian fit was refused (multimodal or degenerate data)."""


class ProbabilityUnderflow(WeakValuesError):
    """A measurement outcome has vanishing probability."""


class ConfigError(WeakValuesError, ValueError):
    """Configuration file is invalid. ``problems`` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class EmptyPostselection(WeakValuesError):
    """No experiment in the ensemble produced a strong position outcome."""


class HashMismatch(WeakValuesError):
    """Outputs produced from different configurations were mixed."""
