"""Exception hierarchy shared by the toolkit."""


class EvcornerError(Exception):
    """Base class for all toolkit errors."""


class StreamFormatError(EvcornerError):
    """Malformed event record (bad field count, value out of domain)."""


class StreamOrderError(EvcornerError):
    """Event timestamps are not non-decreasing in strict mode."""


class ConfigError(EvcornerError):
    """Incompatible configuration (e.g. model patch size vs detector)."""


class TrainingError(EvcornerError):
    """Invalid training input (e.g. empty dataset)."""


class ModelFormatError(EvcornerError):
    """Corrupt or version-incompatible model file."""


class SceneError(EvcornerError):
    """Invalid scene description or degenerate trajectory."""


class LabelingError(EvcornerError):
    """Ground-truth labels cannot be produced for this pattern."""


class EstimationError(EvcornerError):
    """Homography estimation failed (no model with enough inliers)."""


class InsufficientDataError(EvcornerError):
    """Not enough correspondences for estimation."""
