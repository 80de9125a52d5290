"""Exception types shared across the package."""


class PggSimError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PggSimError):
    """Invalid experiment configuration (bad value, unknown key, malformed file)."""


class EpochAbortError(PggSimError):
    """Training epoch aborted on a non-finite loss or gradient.

    Carries enough context to locate the failure.
    """

    def __init__(self, message: str, epoch: int | None = None, inner_step: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.inner_step = inner_step
