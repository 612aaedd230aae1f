"""Exception hierarchy shared by the library and the CLI."""


class TieMortarError(Exception):
    """Base class for all library errors."""


class ConfigurationError(TieMortarError, ValueError):
    """Invalid method, material or study configuration."""


class GeometryError(TieMortarError, ValueError):
    """Invalid or unsupported mesh geometry."""


class EmptyInterfaceError(GeometryError):
    pass


class NumericalError(TieMortarError, RuntimeError):
    """A linear solve or eigensolve failed."""


class SingularSystemError(NumericalError):
    """Factorization broke down.

    ``dof`` names the unknown at which breakdown was located, as a
    ``(block, index)`` pair with block one of ``"u1"``, ``"u2"``,
    ``"lambda"``, or None when it could not be identified.
    """

    def __init__(self, message, dof=None):
        super().__init__(message if dof is None else f"{message} (at {dof[0]}[{dof[1]}])")
        self.dof = dof


class IllPosedError(NumericalError):
    pass


class ExactSolutionNotice(TieMortarError):
    """Raised by rate fitting when an error is exactly zero."""
