"""Exception types shared across the package."""


class PosedistError(Exception):
    """Base class for all library errors."""


class ValidationError(PosedistError):
    """Bad user input: config fields, file paths, parameter ranges."""


class FormatError(PosedistError):
    """A binary or CSV payload does not match its declared format."""


class ProjectionError(PosedistError):
    """A pose places keypoints behind the camera (Z <= 0)."""


class DegenerateSceneError(PosedistError):
    """The scene produces no usable probability mass (e.g. everything
    projects outside the crop, or all grid poses are behind the camera)."""
