"""Error classes shared across the package.

Every error carries a machine-readable ``kind`` and the exit code the
command line tool uses when the error escapes.  Exit code 2 marks bad
input (configuration, geometry, coefficient data); exit code 3 marks a
numerical failure at run time.
"""


class AssimilationError(Exception):
    """Base class for all package errors."""

    kind = "error"
    exit_code = 3

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = dict(context)
        self.phase = None

    def payload(self):
        out = {"kind": self.kind, "message": self.message}
        if self.phase is not None:
            out["phase"] = self.phase
        if self.context:
            out["context"] = self.context
        return out


class ConfigError(AssimilationError):
    """Invalid configuration value or inconsistent problem geometry."""

    kind = "config_invalid"
    exit_code = 2


class ConfigNotFoundError(ConfigError):
    """Configuration file path does not exist."""

    kind = "config_not_found"
    exit_code = 2


class EllipticityError(ConfigError):
    """Diffusion coefficient violates uniform ellipticity (some value <= 0)."""

    kind = "ellipticity_violation"
    exit_code = 2


class SolverError(AssimilationError):
    """Linear solve failed (factorization breakdown or CG non-convergence)."""

    kind = "solver_failure"


class NonlinearityError(AssimilationError):
    """Nonlinearity evaluation produced a non-finite value."""

    kind = "nonlinearity_evaluation"


class OracleError(AssimilationError):
    """Fixed-point iteration of the integral-equation oracle diverged."""

    kind = "oracle_divergence"


class ScaleError(AssimilationError):
    """Problem size exceeds a hard limit of the requested code path."""

    kind = "scale_limit"


class DegeneratePairError(AssimilationError):
    """Two inputs that must differ were identical."""

    kind = "degenerate_pair"


class DegenerateMultiplierError(AssimilationError):
    """Active constraint with a vanishing constraint-gradient representer."""

    kind = "degenerate_multiplier"


class MultiplierSignError(AssimilationError):
    """A negative multiplier was passed where lambda >= 0 is required."""

    kind = "multiplier_sign"


class StagnationError(AssimilationError):
    """Armijo line search failed to make progress after the shrink budget."""

    kind = "line_search_stagnation"


class GradCheckError(AssimilationError):
    """Derivative check exceeded its tolerance."""

    kind = "gradcheck_failed"
