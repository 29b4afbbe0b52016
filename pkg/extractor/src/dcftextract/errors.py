"""Exception taxonomy for the extraction pipeline."""


class ExtractError(Exception):
    """Base class for everything this package raises on purpose."""


class WeightsUnavailable(ExtractError):
    """A pretrained encoder was requested but its weights cannot be loaded."""


class ImageUnreadable(ExtractError):
    """The input image is missing, corrupt, or not a raster format."""


class BadContainer(ExtractError):
    """A DCFT file failed validation on read."""
