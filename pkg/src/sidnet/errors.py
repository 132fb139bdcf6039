"""Exception types shared across the package."""


class SidnetError(Exception):
    """Base class for all package errors."""


class ShapeError(SidnetError, ValueError):
    pass


class InputError(SidnetError, ValueError):
    pass


class DegenerateInputError(InputError):
    """Input that carries no usable geometry (blank image, single point)."""


class FormatError(SidnetError, ValueError):
    """Malformed on-disk data. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ManifestError(SidnetError, ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConsistencyError(SidnetError, RuntimeError):
    pass


class DivergenceError(SidnetError, RuntimeError):
    pass
