"""Exception types shared across the package."""


class MeshforgeError(Exception):
    """Base class for all package errors."""


class ParameterError(MeshforgeError, ValueError):
    """An argument violates a documented precondition."""


class TopologyError(MeshforgeError, ValueError):
    """Mesh connectivity is not a closed 2-manifold where one is required."""


class ObjParseError(MeshforgeError, ValueError):
    """Malformed OBJ input. Carries the 1-based line number."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ContractError(MeshforgeError, ValueError):
    """Input violates a numerical contract (e.g. non-unit embedding)."""


class TransportError(MeshforgeError, IOError):
    """Network failure talking to a remote scorer. Retriable."""

    retriable = True


class ProtocolError(MeshforgeError, ValueError):
    """Remote scorer sent a response that violates the wire protocol."""

    def __init__(self, message, field=None):
        if field:
            message = f"{message} (field: {field})"
        super().__init__(message)
        self.field = field


class OptimizationAbort(MeshforgeError, RuntimeError):
    """Optimization hit a non-finite loss or gradient and stopped."""
