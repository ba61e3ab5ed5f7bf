"""Exception hierarchy shared across the package.

Every precondition violation raises a subclass of :class:`ContdidError`,
which the CLI maps to exit code 2. Estimation-time failures that
bootstrap replicates are allowed to hit (empty kernel windows, degenerate
rank gaps, empty selection sets) have dedicated classes so they can be
tallied by reason.
"""


class ContdidError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ContdidError):
    """Invalid input data, configuration, or arguments."""


class EmptyKernelWindowError(ContdidError):
    """No observation carries positive kernel weight at the query point."""


class DegenerateRankGapError(ContdidError):
    """|q(x) - x| is below the degeneracy tolerance; a secant is meaningless."""


class EmptySelectionError(ContdidError):
    """A selection set (qualifying sample points, subsample, ...) is empty."""


class NoCrossingError(ContdidError):
    """The two treatment distributions admit no crossing point."""
