"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its valid domain."""


class DimensionError(ValueError):
    """Array or file sizes disagree with declared dimensions."""


class ConfigurationError(ValueError):
    """Render settings are mutually inconsistent."""
