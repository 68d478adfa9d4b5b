"""Exception types shared across the package."""


class RobustLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RobustLabError):
    """Invalid configuration: bad shapes, unknown names, out-of-range settings."""


class InputError(RobustLabError):
    """Invalid runtime input, e.g. a label outside the class range."""


class UsageError(RobustLabError):
    """API misuse, e.g. calling backward on a non-scalar tensor."""


class FormatError(RobustLabError):
    """A file does not conform to its binary format (bad magic, version, section)."""


class IntegrityError(RobustLabError):
    """A checkpoint's contents disagree with the architecture it is loaded into."""


class TrainingDiverged(RobustLabError):
    """Loss became non-finite during training (usually the LR is too high)."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}; reduce the learning rate"
        )
