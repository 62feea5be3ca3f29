"""Exception types shared across the package.

Every error raised by the public API is a subclass of SQCountError, so callers
(and the CLI) can distinguish configuration problems from budget and tolerance
failures with two except clauses.
"""


class SQCountError(Exception):
    """Base class for all package errors."""


class ConfigError(SQCountError):
    """Invalid inputs: bad primes, mismatched dimensions, malformed data."""


class BudgetError(SQCountError):
    """A computation exceeded its search, precision, or tolerance budget."""


# --- configuration-type errors ---------------------------------------------

class NonSUnitDenominator(ConfigError):
    """Denominator has a prime factor outside the finite place set."""


class ZeroDenominator(ConfigError):
    pass


class ZeroVector(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class DegenerateForm(ConfigError):
    """Gram matrix is singular at some place."""


class AnisotropicForm(ConfigError):
    """The form has no nontrivial zero at the requested place."""


class DenominatorNotInvertibleModQ(ConfigError):
    pass


class NotInSLq(ConfigError):
    pass


class NotPrimitive(ConfigError):
    pass


class ShiftMismatch(ConfigError):
    """Vector does not lie in the expected shifted lattice."""


class InvariantViolation(ConfigError):
    """A derived quantity violated a structural constraint (e.g. gcd(t,q) != 1)."""


class FamilyOutOfRange(ConfigError):
    """Shrinking-family exponents outside the admissible range."""


class NonIndicatorUnsupported(ConfigError):
    """Operation only supports indicator test functions of product sets."""


class UnsupportedExactSampler(ConfigError):
    """No exact sampler available for the requested space."""


class InsufficientPadicPrecision(ConfigError):
    """Stored p-adic precision cannot decide the requested congruence."""


# --- budget / tolerance errors ----------------------------------------------

class ToleranceUnreachable(BudgetError):
    pass


class PrecisionExhausted(BudgetError):
    pass


class RegionTooLarge(BudgetError):
    """Candidate set for enumeration exceeds the configured budget."""


class SearchBudgetExceeded(BudgetError):
    pass


class NotStabilized(BudgetError):
    """Residue counts did not stabilize within the precision budget."""


class MethodDisagreement(BudgetError):
    """Two independent evaluation methods disagree beyond combined errors."""


class BudgetExceeded(BudgetError):
    pass
