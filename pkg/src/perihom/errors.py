"""Exception and warning types shared across the package."""


class PerihomError(Exception):
    """Base class for all package-specific errors."""


class InvalidModuli(PerihomError):
    """Lame parameters outside the admissible range."""


class NonElliptic(PerihomError):
    """A sampled coefficient tensor failed the coercivity probe."""


class SolverDiverged(PerihomError):
    def __init__(self, tol, iterations, residual):
        self.tol = tol
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"iterative solver stalled: residual {residual:.3e} > tol {tol:.3e} "
            f"after {iterations} iterations"
        )


class SymmetryResidualExceeded(PerihomError):
    """Homogenized tensor violates the elasticity symmetries beyond tolerance."""


class DivergenceResidualTooLarge(PerihomError):
    """Flux discrepancy is too far from divergence-free for the potential identity."""


class NonconformingMeshSize(PerihomError):
    """Mesh size does not divide the domain side lengths."""


class IllPosed(PerihomError):
    """Problem lacks the boundary data needed for a unique solution."""


class IncompatibleData(PerihomError):
    """Neumann data violates the compatibility condition."""


class ResolutionMismatch(PerihomError):
    """Oscillation scale is not an integer multiple of the mesh size."""


class InsufficientPadding(PerihomError):
    """Padded field does not cover the required margin around the domain."""


class FitUnderdetermined(PerihomError):
    """Too few points for a rate fit."""


class NonpositiveError(PerihomError):
    """Log-log fit requested on nonpositive error values."""


class IoFailure(PerihomError):
    def __init__(self, path, cause):
        self.path = path
        super().__init__(f"failed to write {path}: {cause}")


class ResolutionBudgetExceeded(PerihomError):
    """Refined reference solve exceeds the configured budget."""


class SingularBlock(PerihomError):
    """Laminate phase block is not invertible."""


class QuadratureOnDiscontinuity(UserWarning):
    """A quadrature point landed exactly on a coefficient jump."""
