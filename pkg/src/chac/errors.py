"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3,
InfeasibleError -> 4.
"""


class ChacError(Exception):
    """Base class for all package errors."""


class ConfigError(ChacError):
    """Malformed or inconsistent configuration input."""


class NumericError(ChacError):
    """A numerical procedure failed (solver divergence, singular system, ...)."""


class InfeasibleError(ChacError):
    """The requested configuration is outside the admissible regime."""


class DegenerateGridError(ConfigError):
    """Grid too coarse for the requested stencil."""


class ThinLayerError(InfeasibleError):
    """eps/ell exceeds the thin-layer limit of the profile solver."""


class AdmissibilityError(InfeasibleError):
    """Layer configuration violates the admissible set Omega_rho."""


class SolverFailure(NumericError):
    """Root finding / Newton iteration did not converge."""


class ConventionError(NumericError):
    """The selected asymptotic-constant convention produces a divergent integral."""
