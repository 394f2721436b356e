"""Exception types shared across the toolkit."""


class IdtError(Exception):
    """Base class for all toolkit errors."""


class NoCellFound(IdtError):
    """Color mask was empty or the largest blob is below the area floor."""


class EmptyClass(IdtError):
    """A class directory contains no images."""


class UnknownLayer(IdtError, KeyError):
    """Requested layer name does not exist in the model."""


class OutOfRange(IdtError, IndexError):
    """Feature position or channel outside the layer's shape."""


class BadFeatureName(IdtError, ValueError):
    """String does not parse as a row_col_channel feature name."""


class EmptySplit(IdtError):
    """Requested dataset split has no entries."""


class DivergedTraining(IdtError):
    """Training loss became non-finite."""


class EmptyNode(IdtError):
    """Impurity requested for a node with zero samples."""


class EmptyTable(IdtError):
    """Tree fitting or scoring on a table with no rows."""


class DimensionMismatch(IdtError):
    """Vector length does not match the tree's training width."""


class MissingVisualization(IdtError, KeyError):
    """Visualization cache has no entry for a referenced channel."""


class LayerMismatch(IdtError):
    """Tree feature width does not match the model's designated layer."""


class StageError(IdtError):
    """Pipeline stage failure, wrapping the original error with stage context."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
