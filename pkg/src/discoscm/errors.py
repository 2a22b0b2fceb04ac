"""Semantic exception hierarchy.

Errors fall into three tiers, mirrored by the CLI exit codes:

* input problems (bad text, bad query, bad model) -> exit 1
* domain problems (null evidence, positivity, infeasibility) -> exit 2
* internal invariant breaches (engine bugs, by definition) -> exit 3
"""

from __future__ import annotations


class DiscoError(Exception):
    """Base class for all package errors."""


# --- input tier ---------------------------------------------------------


class ParseError(DiscoError):
    """Text failed to parse; carries a position when one is known."""

    def __init__(self, message: str, *, line: int | None = None, col: int | None = None,
                 source: str | None = None):
        self.line = line
        self.col = col
        self.source = source
        where = ""
        if line is not None and col is not None:
            where = f" at line {line}, column {col}"
        elif col is not None:
            where = f" at column {col}"
        if source:
            where += f" in {source}"
        super().__init__(message + where)


class ExpressionError(DiscoError):
    """Structural-equation expression is ill-typed or malformed."""


class ModelValidationError(DiscoError):
    """An engine was handed a model whose validation report is non-empty."""

    def __init__(self, report):
        self.report = report
        super().__init__("invalid model: " + "; ".join(str(v) for v in report.violations))


class QueryValidationError(DiscoError):
    """A query does not fit the model it is evaluated against."""


class UnknownVariableError(DiscoError):
    """Referenced endogenous variable is not declared."""


class UnknownScenarioError(DiscoError):
    """Requested builtin scenario does not exist."""


# --- domain tier --------------------------------------------------------


class DomainTierError(DiscoError):
    """Base for errors that are data-dependent rather than malformed input."""


class EvaluationError(DomainTierError):
    """Equation evaluation failed (missing noise value, out-of-domain result)."""


class NullEvidenceError(DomainTierError):
    """Conditioning event has probability zero."""


class PositivityError(DomainTierError):
    """A required propensity is zero for some units."""

    def __init__(self, message: str, units: tuple[int, ...] = ()):
        self.units = units
        super().__init__(message)


class PreconditionError(DomainTierError):
    """A verification suite's precondition does not hold for this model."""


class ZeroAcceptanceError(DomainTierError):
    """Rejection sampling accepted no draws; the exact engine should be used."""


class EmptySelectionError(DomainTierError):
    """A unit condition selected no units."""


class InfeasiblePolicyError(DomainTierError):
    """Policy cost exceeds its budget."""


class InstanceTooLargeError(DomainTierError):
    """Exact allocation was asked for an instance beyond its size limits."""


# --- invariant tier -----------------------------------------------------


class InternalInvariantError(DiscoError):
    """An internal consistency check failed; this is a bug, never user error."""
