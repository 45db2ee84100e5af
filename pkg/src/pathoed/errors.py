"""Exception hierarchy shared by all modules."""


class PathOEDError(Exception):
    """Base class for every error raised by this package."""


class MeshError(PathOEDError):
    """Invalid mesh construction or mesh file contents."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(PathOEDError):
    """Invalid parameters, configuration or instance specification."""


class DegenerateDistributionError(ConfigError):
    """Inclusion probabilities are undefined for the given parameters."""


class DeadEndError(PathOEDError):
    """A vertex without admissible successors was reached."""

    def __init__(self, vertex, step=None):
        msg = f"vertex v{vertex + 1} has no admissible successor"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)
        self.vertex = vertex
        self.step = step


class SupportError(PathOEDError):
    """Path is outside the support of the distribution."""


class CapExceededError(PathOEDError):
    """Enumeration would exceed the configured path cap."""

    def __init__(self, cap, estimate=None):
        msg = f"enumeration exceeds cap of {cap} paths"
        if estimate is not None:
            msg += f" (estimated {estimate} paths)"
        super().__init__(msg)
        self.cap = cap
        self.estimate = estimate


class EvaluationError(PathOEDError):
    """A utility evaluation produced a non-finite value."""

    def __init__(self, path, value):
        label = "-".join(str(v + 1) for v in path)
        super().__init__(f"utility returned {value!r} for path {label}")
        self.path = tuple(path)
        self.value = value


class BaselineUndefinedError(PathOEDError):
    """The optimal baseline has a zero denominator."""


class NumericalError(PathOEDError):
    """A matrix factorization failed."""
