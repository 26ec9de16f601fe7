"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, bad value, missing path)."""


class DataError(ValueError):
    """Malformed or out-of-range input data (CSV rows, field ranges)."""


class KernelFitError(RuntimeError):
    """Gram matrix factorization failed; usually needs a larger jitter."""


class TrainingError(RuntimeError):
    """Training aborted (divergence, empty partition)."""


class CheckpointError(RuntimeError):
    """Checkpoint file unreadable, truncated, or version-incompatible."""
