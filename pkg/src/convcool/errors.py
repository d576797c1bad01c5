"""Error taxonomy shared by the solvers and the command-line app."""


class ConvcoolError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(ConvcoolError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class SolverError(ConvcoolError):
    """A linear or nonlinear solver failed to converge (CLI exit code 3).

    Carries optional context about where the failure happened, e.g. the time
    index of the offending Stokes solve inside a Picard sweep.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = dict(context)


class ArtifactIOError(ConvcoolError):
    """Reading or writing a run artifact failed (CLI exit code 4)."""
