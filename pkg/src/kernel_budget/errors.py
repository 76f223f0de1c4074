"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument violates a documented precondition."""


class BudgetExhaustedError(RuntimeError):
    """A query would reveal a new Gram entry beyond the ledger budget.

    Recoverable: callers may catch this to measure accuracy-at-budget.
    """


class GenerationFailureError(RuntimeError):
    """An instance generator could not satisfy its constraints."""


class BoundRangeError(ValueError):
    """A lower-bound formula was evaluated outside its valid range."""


class DegenerateInstanceError(ValueError):
    """An instance lacks the structure an operation requires."""


class NumericalDegeneracyError(RuntimeError):
    """A factorization failed beyond the tolerated eigenvalue slack."""


class EstimationFailureError(RuntimeError):
    """Too few samples for the requested estimation accuracy."""


class DegenerateRowError(ValueError):
    """A sketch row would be identically zero."""


class DegenerateSketchError(RuntimeError):
    """Sketch rows are linearly dependent; projection is not defined."""


class SingularSystemError(RuntimeError):
    """A rank-one update denominator vanished."""


class PipelineStageError(RuntimeError):
    """Failure inside a multi-stage pipeline, tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
