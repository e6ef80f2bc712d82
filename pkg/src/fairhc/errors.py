"""Exception hierarchy shared across the package."""


class FairHCError(Exception):
    """Base class for all package errors."""


# --- feeder model ---

class ParseError(FairHCError):
    """Feeder file is not valid JSON."""


class SchemaError(FairHCError):
    """Feeder file is valid JSON but violates the schema (missing/extra/mistyped keys)."""


class ValidationError(FairHCError):
    """Feeder data is schematically correct but semantically invalid (cycle, duplicate slack, ...)."""


class UnknownBus(FairHCError):
    """A bus id was referenced that does not exist in the feeder."""


# --- power flow ---

class NonConvergence(FairHCError):
    """Newton-Raphson hit the iteration cap; carries the last mismatch."""

    def __init__(self, msg, mismatch=None):
        super().__init__(msg)
        self.mismatch = mismatch


class SingularJacobian(FairHCError):
    """Power-flow Jacobian is singular at the current iterate."""


# --- problem formulation ---

class MissingReference(FairHCError):
    """Bounded policy requires egalitarian/utilitarian reference solutions."""


class ParameterOutOfRange(FairHCError):
    """Fairness parameter outside [0, 1] or supplied for the wrong variant."""


# --- solver ---

class Infeasible(FairHCError):
    """No feasible allocation exists (the zero/lower-bound point already violates limits)."""


class TooManyLoads(FairHCError):
    """Brute-force oracle limited to feeders with at most 3 loads."""


# --- KPI / pareto ---

class ZeroUtilitarianHC(FairHCError):
    """Price of fairness is undefined for a zero utilitarian reference."""


class DegenerateFrontier(FairHCError):
    """Knee-point detection needs at least two distinct nondominated points."""
