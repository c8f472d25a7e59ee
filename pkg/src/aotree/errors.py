"""Exception types raised across the toolkit."""


class AotError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AotError, ValueError):
    """A model, topology or configuration failed validation."""

    def __init__(self, field, message, row=None):
        self.field = field
        self.row = row
        where = field if row is None else f"{field}[{row}]"
        super().__init__(f"{where}: {message}")


class ZeroLikelihood(AotError):
    """An observation has (numerically) zero probability under the propagated belief."""


class TagMismatch(AotError):
    """An augmented observation variant contradicts the node's topology bit."""


class DegenerateWeights(AotError):
    """Every particle weight is zero."""


class NothingToFlip(AotError):
    """Refinement was requested but no alternative-regime node is reachable."""


class BudgetExceeded(AotError):
    """Exact enumeration would exceed the configured node budget."""


class MissingAssignment(AotError):
    """A policy assignment has no action for a reachable posterior node."""


class MissingVmax(AotError):
    """A generative model needs an explicit V_max for the concentration bound."""
