"""Exception types shared across the package."""


class ModelError(ValueError):
    """Invalid model, quantizer, or experiment parameters."""


class NumericalError(RuntimeError):
    """A quadrature or root-finding step failed to meet its tolerance.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (interval, symbol, error estimate, solver message).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
