"""Exception types shared across the package."""


class BbmError(Exception):
    """Base class for all package errors."""


class InvalidConfig(BbmError):
    """A simulation or experiment configuration violates its invariants."""


class DomainError(BbmError, ValueError):
    """An analytic formula was evaluated outside its domain."""


class PopulationBudgetExceeded(BbmError):
    """Processing the next branch event would push the population past
    max_particles.  The state is flagged truncated but remains readable."""


class PruningForbidden(BbmError):
    """Front-window pruning requested while lead tracking needs the full tree,
    or lead tracking requested on a population that was already pruned."""


class TruncatedPopulation(BbmError):
    """An operation that needs the complete population was called on a
    truncated state."""


class DegenerateDesign(BbmError):
    """A regression was requested with fewer than two distinct abscissae."""
