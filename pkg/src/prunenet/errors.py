class ConfigError(ValueError):
    """Invalid model, plan or training configuration."""


class ShapeError(ValueError):
    """Tensors whose shapes do not conform."""


class CheckpointError(IOError):
    """A PNCK checkpoint that cannot be read or written."""
