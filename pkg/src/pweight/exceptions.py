"""Exception hierarchy shared by every pweight module."""


class PWeightError(Exception):
    """Base class for all errors raised by pweight."""


class DomainError(PWeightError, ValueError):
    """An argument lies outside the domain of the operation."""


class BracketError(PWeightError, ValueError):
    """A root-finding bracket does not straddle the target value."""


class NumericalDegeneracyError(PWeightError, ArithmeticError):
    """A tridiagonal factorization hit a zero or negative pivot."""


class InfeasibleError(PWeightError, ValueError):
    """A point or a set of bounds violates the feasibility requirements."""


class NoInteriorSolutionError(PWeightError):
    """The closed-form two-sided weights do not exist for this input.

    Attributes
    ----------
    h_value : float
        Total weight ``H(q exp(-m))`` at the smallest admissible multiplier.
    n_tests : int
        Number of hypotheses ``J``.
    max_weight, cap : float or None
        Set when the solution exists but a weight exceeds the two-sided
        cap ``1/(2q)``.
    """

    def __init__(self, h_value, n_tests, max_weight=None, cap=None):
        self.h_value = h_value
        self.n_tests = n_tests
        self.max_weight = max_weight
        self.cap = cap
        if max_weight is None:
            reason = f"H(q*exp(-m)) = {h_value:.6g} < J = {n_tests}"
        else:
            reason = f"a weight of {max_weight:.6g} would exceed the cap 1/(2q) = {cap:.6g}"
        super().__init__(f"no interior solution: {reason}; decrease q or effect sizes")


class LineSearchError(PWeightError):
    """Backtracking could not find an acceptable step."""


class ConvergenceError(PWeightError):
    """Newton centering did not converge within the iteration budget."""

    def __init__(self, message, decrement=None):
        self.decrement = decrement
        super().__init__(message)


class SolverError(PWeightError):
    """The barrier solver failed; retrying through subsampling may help."""


class EmptySelectionError(PWeightError, ValueError):
    """A filtering rule selected no hypotheses."""


class EmptyJoinError(PWeightError, ValueError):
    """Two studies share no hypothesis identifiers."""


class ParseError(PWeightError, ValueError):
    """A table could not be read; the message names the file and line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
