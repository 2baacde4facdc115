"""Exception types raised across the package.

Every data-dependent failure raises a subclass of :class:`ShoresegError` so
callers (and the CLI) can distinguish bad input data from programming errors.
"""


class ShoresegError(Exception):
    """Base class for all errors raised by this package."""


# ===================== imaging =====================

class DegenerateRange(ShoresegError):
    """Clip range collapsed: minimum gray >= maximum gray (no dynamic range)."""


# ===================== exif =====================

class NotJpeg(ShoresegError):
    """Input does not begin with the JPEG start-of-image marker."""


class MalformedExif(ShoresegError):
    """EXIF/TIFF structure is truncated or internally inconsistent."""


# ===================== tiling =====================

class InvalidTileSize(ShoresegError):
    """No tile of the requested size fits the source under the policy."""


class RectMismatch(ShoresegError):
    """Tile rectangle is inconsistent with the image it is applied to."""


# ===================== dataset =====================

class MalformedAnnotation(ShoresegError):
    """Annotation JSON is invalid or a region is structurally broken."""


class BadFractions(ShoresegError):
    """Split fractions are negative or do not sum to 1."""


# ===================== metrics =====================

class DimensionMismatch(ShoresegError):
    """Two grids that must share dimensions do not."""


class LabelMismatch(ShoresegError):
    """A prediction names a class absent from the truth label set."""


# ===================== losses =====================

class LabelOutOfRange(ShoresegError):
    """A class label index is outside the valid class range."""


class LengthMismatch(ShoresegError):
    """Two vectors that must share length do not."""


class EmptyAfterIgnore(ShoresegError):
    """Every pixel carries the ignore id; the loss is undefined."""


class NegativeComponent(ShoresegError):
    """A loss component or weight that must be non-negative is negative."""
