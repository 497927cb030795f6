"""Exception types shared across the package."""


class SpecError(ValueError):
    """Malformed equation or model specification."""


class ValidationError(ValueError):
    """Structurally valid input that violates an invariant (bindings, degrees, files)."""


class BackendError(RuntimeError):
    """A cost backend cannot answer a query (missing key, empty table)."""
