"""Exception hierarchy.

Every error carries a machine-readable ``category`` used by the CLI to pick
exit codes and to tag JSON error output.
"""

from __future__ import annotations


class FoldrayError(Exception):
    """Base class; ``category`` is a stable machine-readable slug."""

    category = "error"
    exit_code = 3

    def payload(self) -> dict:
        return {"category": self.category, "message": str(self)}


class DimensionMismatch(FoldrayError):
    category = "dimension-mismatch"


class IndexRangeError(FoldrayError):
    category = "index-out-of-range"


class NotPositiveError(FoldrayError):
    category = "not-positive"


class DegenerateVector(FoldrayError):
    category = "degenerate"


class NotSortedError(FoldrayError):
    category = "not-ordered"


class ConvergenceFailure(FoldrayError):
    category = "no-convergence"
    exit_code = 4


class SamplingFailure(FoldrayError):
    category = "sampling-budget-exhausted"
    exit_code = 4


class OnsetNotFound(FoldrayError):
    category = "onset-not-found"
    exit_code = 4

    def __init__(self, message: str, steps_run: int = 0, reason: str = ""):
        super().__init__(message)
        self.steps_run = steps_run
        self.reason = reason


class IdentityViolation(FoldrayError):
    category = "identity-violation"


class GraphStructureError(FoldrayError):
    category = "bad-graph"


class NotATurnError(FoldrayError):
    category = "not-a-turn"


class NotAllowableError(FoldrayError):
    category = "not-allowable"


class NotProperError(FoldrayError):
    category = "not-proper"


class RankDropError(FoldrayError):
    """A quotient that is not a homotopy equivalence was requested."""

    category = "rank-drop"


class DecompositionError(FoldrayError):
    category = "decomposition-failed"


class SimplexExitError(FoldrayError):
    """Fold-line parameters left the open region of the combinatorial type."""

    category = "simplex-exit"

    def __init__(self, message: str, witness: str = ""):
        super().__init__(message)
        self.witness = witness or message


class OutsideNeighborhoodError(FoldrayError):
    category = "outside-neighborhood"


class SearchBudgetExhausted(FoldrayError):
    category = "search-budget-exhausted"
    exit_code = 4


class RayAssemblyError(FoldrayError):
    """A ray segment could not be realized; points at a threshold or
    registry bug rather than bad input."""

    category = "ray-assembly"


class CertificateError(FoldrayError):
    """Geodesic certification found an illegal fold; carries the gate."""

    category = "non-geodesic-evidence"

    def __init__(self, message: str, gate=None):
        super().__init__(message)
        self.gate = gate


class UsageError(FoldrayError):
    category = "usage"
    exit_code = 2
