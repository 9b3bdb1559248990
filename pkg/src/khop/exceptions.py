class InvalidPmfError(ValueError):
    """A probability tensor or kernel failed validation."""


class AxisError(ValueError):
    pass


class EnumerationCapError(RuntimeError):
    """Exact enumeration would exceed the configured tuple cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"enumeration of {size} tuples exceeds enumeration cap {cap}")


class InfeasibleError(ValueError):
    pass


class UnresolvableExponentError(RuntimeError):
    """Too few usable type-II estimates to fit an exponent."""


class TuningError(RuntimeError):
    pass


class ConfigError(ValueError):
    """Configuration validation failure; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
