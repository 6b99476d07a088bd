"""Exception hierarchy shared by the solvers and the CLI.

Every solver failure derives from ``SolverError`` so the CLI can map it to
the numerical-failure exit code; ``CheckFailure`` subclasses are raised when
a computed quantity violates a proven bound or a verification step, and map
to the acceptance-failure exit code.
"""


from __future__ import annotations


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SolverError, ValueError):
    """Invalid physical or numerical parameters."""


class RegimeMismatch(ParameterError):
    """The coupling a*N does not match the requested regime."""


class CompletenessViolation(ParameterError):
    """N exceeds the planar geodesic completeness bound 1/(4 pi G)."""


class TopologicalBetaMismatch(ParameterError):
    """Topological solve requested with beta different from the pinned value."""


class QuadratureFailure(SolverError):
    pass


class IntegrationFailure(SolverError):
    """An ODE integration did not complete."""


class SeedNotConverged(SolverError):
    pass


class TailNotConverged(SolverError):
    pass


class BracketNotFound(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class SubsolutionUnreachable(SolverError):
    pass


class OutOfDomain(SolverError, ValueError):
    pass


class WindowTooShort(SolverError, ValueError):
    pass


class SigmaTooLarge(SolverError, ValueError):
    pass


class CoincidentPointsUnresolvable(SolverError, ValueError):
    pass


class TailNotIntegrable(SolverError):
    pass


class CheckFailure(SolverError):
    """A verification of a proven property failed on the computed data."""


class NotMonotone(CheckFailure):
    pass


class CrossCheckFailure(CheckFailure):
    pass


class PositivityBreach(CheckFailure):
    pass


class BlowUp(IntegrationFailure):
    pass


class SlopeBoundViolated(CheckFailure):
    pass


class OrderingViolation(CheckFailure):
    pass


class MonotonicityBreach(CheckFailure):
    pass


class ContinuationDiverged(CheckFailure):
    pass


class NegativeDensity(CheckFailure):
    pass


class FluxMismatch(CheckFailure):
    pass


class ConfigError(ParameterError):
    """Problems with a run configuration file."""


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class ValidationError(ConfigError):
    pass


class UnprovenAlpha(ParameterError):
    """alpha below the threshold for which the shooting bracket is proven."""
