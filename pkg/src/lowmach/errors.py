"""Exception types raised by the solver and its diagnostics."""


class LowMachError(Exception):
    """Base class for all package errors."""


class ConfigError(LowMachError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateStateError(LowMachError, ValueError):
    """A state that cannot be evaluated (non-positive density, bad shapes)."""


class EOSError(LowMachError, ValueError):
    """Unphysical equation-of-state parameters or inputs."""


class SolvabilityError(LowMachError, ValueError):
    """Right-hand side incompatible with a singular elliptic problem."""


class SolverError(LowMachError, RuntimeError):
    """Iterative solver failed to reach its tolerance."""


class StatisticsError(LowMachError, ValueError):
    """Too few samples for the requested estimate."""


class FitError(LowMachError, RuntimeError):
    """Nonlinear least-squares fit did not converge."""


class FormatError(LowMachError, ValueError):
    """Malformed snapshot, checkpoint or config file."""
