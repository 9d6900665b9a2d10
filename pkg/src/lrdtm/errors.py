"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A dense kernel failed to converge or a factorization broke down."""


class InconsistentProjectionError(NumericalError):
    """``P @ X = XZ`` has no exact solution for the given inputs."""

    def __init__(self, residual, tol):
        self.residual = float(residual)
        self.tol = float(tol)
        super().__init__(
            f"projection constraint is inconsistent: relative residual "
            f"{self.residual:.3e} exceeds {self.tol:.1e}"
        )


class DataError(ValueError):
    """Malformed or mismatched input data."""
