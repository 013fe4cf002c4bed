"""Exception hierarchy shared by all ndeepc modules."""


class NdeepcError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(NdeepcError):
    """Shapes or window lengths are inconsistent with the declared dimensions."""


class NumericalError(NdeepcError):
    """A dense linear-algebra routine or an NLP evaluation failed numerically."""


class TrainingError(NdeepcError):
    """Network training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class RankDeficiencyError(NdeepcError):
    """A full-row-rank hypothesis required by the requested operation fails."""


class ConfigError(NdeepcError):
    """Experiment configuration is invalid or internally inconsistent."""
