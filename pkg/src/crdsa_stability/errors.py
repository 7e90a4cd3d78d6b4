"""Exception types shared across the package.

The CLI maps these onto documented exit codes; library users catch them
directly.
"""


class ConfigurationError(ValueError):
    """A parameter set violates a precondition (e.g. d > num_slots)."""


class TableRangeError(LookupError):
    """A success-table query lies outside the table's tau range."""


class TableFormatError(ValueError):
    """A persisted success table is malformed or violates an invariant."""


class NotApplicableError(RuntimeError):
    """The requested quantity is undefined for this configuration
    (e.g. expected delay of an instable channel)."""


class InfeasibleError(RuntimeError):
    """A constrained search has an empty feasible set."""
