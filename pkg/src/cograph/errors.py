"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class GraphParseError(ValidationError):
    """Raised for malformed dataset files; carries file path and line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class TrainingError(RuntimeError):
    """Raised when a training run diverges (NaN loss or similar pathology)."""


class EigenSolverError(RuntimeError):
    """Raised when an eigenpair fails its residual tolerance."""
