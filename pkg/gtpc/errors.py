# gtpc/errors.py
"""Exception hierarchy shared by the library and the command line."""


class GTPCError(Exception):
    """Base class for every error raised deliberately by this package."""


class ConfigError(GTPCError):
    """An experiment configuration or override could not be parsed or validated."""


class DimensionError(GTPCError, ValueError):
    """Two tensors that must agree in shape do not."""


class DatasetError(GTPCError):
    """A dataset on disk is malformed or references unknown samples."""


class SplitError(GTPCError):
    """A split request cannot produce a usable labeled/unlabeled partition."""


class UsageError(GTPCError):
    """The command line was invoked with invalid arguments."""


class DivergenceError(GTPCError):
    """A training step produced a non-finite objective."""

    def __init__(self, step: int, epoch: int, terms: dict[str, float], dump_path: str | None = None):
        self.step = step
        self.epoch = epoch
        self.terms = terms
        self.dump_path = dump_path
        rendered = ", ".join(f"{name}={value:.4g}" for name, value in terms.items())
        super().__init__(f"non-finite loss at epoch {epoch} step {step} ({rendered})")
