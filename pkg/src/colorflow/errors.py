"""Exception hierarchy for colorflow.

Every error carries a short ``category`` tag. The CLI reports failures as
``Error[<category>]: <message>`` so scripts can match on the tag.
"""

from __future__ import annotations


class ColorflowError(Exception):
    """Base class for all colorflow errors."""

    category = "error"


class InvalidRatioError(ColorflowError, ValueError):
    """Voxel ratio below 2 (the offset normalization divides by v - 1)."""

    category = "invalid-ratio"


class DegenerateGridError(ColorflowError, ValueError):
    """Voxel ratio at least as large as the grid extent."""

    category = "degenerate-grid"


class ShapeError(ColorflowError, ValueError):
    """Array or tensor shapes are incompatible."""

    category = "shape"


class DegenerateBatchError(ColorflowError, ValueError):
    """Batch normalization in training mode needs at least two rows."""

    category = "degenerate-batch"


class DuplicateCoordinateError(ColorflowError, ValueError):
    """A coordinate appears more than once where uniqueness is required."""

    category = "duplicate-coordinate"


class InvalidKernelError(ColorflowError, ValueError):
    """Kernel size must be a positive odd integer."""

    category = "invalid-kernel"


class MappingError(ColorflowError, ValueError):
    """LR and HR clouds are not related by voxelization at the given ratio."""

    category = "mapping"


class PlyFormatError(ColorflowError, ValueError):
    """Malformed PLY content."""

    category = "ply-format"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AttributeMissingError(ColorflowError, ValueError):
    """A required point attribute (e.g. colors) is absent."""

    category = "attribute"


class EmptyCloudError(ColorflowError, ValueError):
    """The point cloud has no points."""

    category = "empty-cloud"


class RecipeError(ColorflowError, ValueError):
    """Synthetic recipe cannot produce a cloud."""

    category = "recipe"


class DatasetError(ColorflowError, ValueError):
    """Dataset or manifest problem (empty split, missing object, ...)."""

    category = "dataset"


class CheckpointError(ColorflowError, ValueError):
    """Checkpoint missing, unreadable or of an unsupported format version."""

    category = "checkpoint"


class InsufficientDataError(ColorflowError, ValueError):
    """Not enough benchmark sizes for a scaling fit."""

    category = "insufficient-data"


class ConfigError(ColorflowError, ValueError):
    """Invalid configuration value or unknown key."""

    category = "config"
