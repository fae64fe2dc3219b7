"""Exception hierarchy.

Everything raised for bad *data* (as opposed to bad usage or bugs) derives
from :class:`DataError`, which the CLI maps to exit code 2.
"""


class DataError(ValueError):
    pass


class ImageIOError(DataError):
    pass


class UnreadableImageError(ImageIOError):
    pass


class BitDepthError(ImageIOError):
    pass


class ChannelCountError(ImageIOError):
    pass


class DimensionMismatchError(DataError):
    pass


class DegenerateReferenceError(DataError):
    pass


class CheckpointError(DataError):
    pass


class ManifestError(DataError):
    pass
