"""Exception hierarchy shared across the package."""


class NettmleError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(NettmleError):
    """A generator or estimator was called with out-of-range parameters."""


class SpecificationError(NettmleError):
    """A model/summary specification references features that do not exist."""


class SeparationError(NettmleError):
    """Logistic MLE diverges (complete or quasi-complete separation)."""


class PositivityError(NettmleError):
    """An intervention-implied summary value has zero estimated density."""


class NotIdentifiedError(NettmleError):
    """The requested causal target is not identified (e.g. centrality rewires)."""


class DegenerateWeightsError(NettmleError):
    """All clever weights are zero; the fluctuation step is undefined."""


class TooLargeError(NettmleError):
    """Exact enumeration was requested above the configuration cap."""


class EmptySubnetworkError(NettmleError):
    """Hub conditioning removed every node."""


class FluctuationError(NettmleError):
    """The fluctuation score equation has no root in the search bracket."""


class BootstrapError(NettmleError):
    """Too many bootstrap replicates failed."""


class ConfigError(NettmleError):
    """An experiment or model config file is malformed."""
