"""Histogram-clipping auto contrast/brightness for 8-bit survey frames.

The transform is a single linear stretch f = alpha * g + beta fitted per
image: a gray histogram is built, a configurable fraction of the pixel mass
is clipped off both tails, and the surviving intensity range [minimum_gray,
maximum_gray] is mapped onto [0, 255]:

    alpha = 255 / (maximum_gray - minimum_gray)
    beta  = -minimum_gray * alpha

One stretch is fitted per image and applied identically to every channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange
from .raster import validate_image

__all__ = [
    "GrayHistogram",
    "LinearStretch",
    "compute_gray_histogram",
    "compute_clip_range",
    "fit_stretch",
    "apply_stretch",
    "auto_enhance",
    "audit_record",
]

# Rec.601 luma weights for the gray histogram of RGB frames.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

DEFAULT_CLIP_PERCENT = 0.01


# ===================== types =====================

@dataclass(frozen=True)
class GrayHistogram:
    """256-bin intensity histogram of one image.

    Attributes:
        bins: int64 array of 256 non-negative counts.
    """

    bins: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        if bins.shape != (256,):
            raise ValueError(f"histogram must have 256 bins, got shape {bins.shape}")
        if np.any(bins < 0):
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "bins", bins)

    @property
    def total(self) -> int:
        """Total pixel count (sum of all bins)."""
        return int(self.bins.sum())


@dataclass(frozen=True)
class LinearStretch:
    """Fitted intensity transform f = alpha * g + beta.

    Attributes:
        alpha: gain, > 0.
        beta: offset in intensity units; equals -minimum_gray * alpha.
        minimum_gray: lower clip bound in [0, 255].
        maximum_gray: upper clip bound in [0, 255], > minimum_gray.
    """

    alpha: float
    beta: float
    minimum_gray: int
    maximum_gray: int

    def __post_init__(self):
        if not self.minimum_gray < self.maximum_gray:
            raise DegenerateRange(
                f"minimum_gray ({self.minimum_gray}) must be below "
                f"maximum_gray ({self.maximum_gray})"
            )
        if not (0 <= self.minimum_gray <= 255 and 0 <= self.maximum_gray <= 255):
            raise ValueError("gray bounds must lie in [0, 255]")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


IDENTITY_STRETCH = LinearStretch(alpha=1.0, beta=0.0, minimum_gray=0, maximum_gray=255)


# ===================== operations =====================

def compute_gray_histogram(image: np.ndarray) -> GrayHistogram:
    """Builds the 256-bin gray histogram of an image.

    RGB pixels contribute one count at round(0.299 R + 0.587 G + 0.114 B);
    grayscale pixels count at their own value.

    Args:
        image: uint8 array, (h, w) or (h, w, 3).

    Returns:
        GrayHistogram with total equal to the pixel count.
    """
    validate_image(image)
    if image.ndim == 2:
        gray = image.reshape(-1)
    else:
        flat = image.reshape(-1, 3).astype(np.float64)
        luma = flat @ np.asarray(LUMA_WEIGHTS)
        # round half away from zero; luma is non-negative so floor(x+0.5) does it
        gray = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.int64)
    bins = np.bincount(gray, minlength=256)
    return GrayHistogram(bins=bins)


def compute_clip_range(hist: GrayHistogram, clip_percent: float) -> tuple[int, int]:
    """Finds the intensity range that survives clipping both histogram tails.

    ``clip_percent`` of the total pixel mass is removed, split evenly between
    the two tails. The lower bound is the smallest intensity whose cumulative
    count exceeds the lower allowance; the upper bound is the largest
    intensity with cumulative mass strictly below it still under the upper
    allowance.

    Args:
        hist: histogram with positive total.
        clip_percent: fraction of pixels to clip, in [0, 1).

    Returns:
        (minimum_gray, maximum_gray) intensity pair.

    Raises:
        DegenerateRange: the surviving range is empty (e.g. a constant image).
        ValueError: clip_percent outside [0, 1) or empty histogram.
    """
    if not 0 <= clip_percent < 1:
        raise ValueError(f"clip_percent must be in [0, 1), got {clip_percent}")
    total = hist.total
    if total <= 0:
        raise ValueError("histogram is empty")

    cum = np.cumsum(hist.bins)          # mass at intensities <= i
    below = cum - hist.bins             # mass at intensities <  i
    lower_allowance = clip_percent * total / 2.0
    upper_allowance = total * (1.0 - clip_percent / 2.0)

    lo_candidates = np.nonzero(cum > lower_allowance)[0]
    hi_candidates = np.nonzero(below < upper_allowance)[0]
    if lo_candidates.size == 0 or hi_candidates.size == 0:
        raise DegenerateRange("clip allowance consumed the entire histogram")
    minimum_gray = int(lo_candidates[0])
    maximum_gray = int(hi_candidates[-1])
    if minimum_gray >= maximum_gray:
        raise DegenerateRange(
            f"clip range collapsed: minimum_gray={minimum_gray}, "
            f"maximum_gray={maximum_gray}"
        )
    return minimum_gray, maximum_gray


def fit_stretch(minimum_gray: int, maximum_gray: int) -> LinearStretch:
    """Fits the linear stretch mapping [minimum_gray, maximum_gray] onto [0, 255].

    Args:
        minimum_gray: lower intensity bound.
        maximum_gray: upper intensity bound, strictly greater.

    Returns:
        LinearStretch with alpha = 255/(max-min) and beta = -min*alpha, so
        that alpha*minimum_gray + beta is exactly 0.

    Raises:
        DegenerateRange: minimum_gray >= maximum_gray.
    """
    if minimum_gray >= maximum_gray:
        raise DegenerateRange(
            f"cannot fit stretch: minimum_gray={minimum_gray} >= "
            f"maximum_gray={maximum_gray}"
        )
    alpha = 255.0 / (maximum_gray - minimum_gray)
    beta = -(minimum_gray * alpha)
    return LinearStretch(
        alpha=alpha,
        beta=beta,
        minimum_gray=int(minimum_gray),
        maximum_gray=int(maximum_gray),
    )


def apply_stretch(image: np.ndarray, stretch: LinearStretch) -> np.ndarray:
    """Applies a fitted stretch to every sample of an image.

    Each output sample is clamp(round(alpha * input + beta), 0, 255) with
    round-half-away-from-zero, applied identically to all channels.

    Args:
        image: uint8 array, (h, w) or (h, w, 3).
        stretch: fitted transform.

    Returns:
        uint8 array with the same shape as the input.
    """
    validate_image(image)
    mapped = stretch.alpha * image.astype(np.float64) + stretch.beta
    # floor(x + 0.5) equals round-half-away-from-zero after the clamp to
    # [0, 255]: negatives land at or below 0 either way
    rounded = np.floor(mapped + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def auto_enhance(
    image: np.ndarray, clip_percent: float = DEFAULT_CLIP_PERCENT
) -> tuple[np.ndarray, LinearStretch]:
    """Fits and applies the histogram-clipping stretch to one image.

    Args:
        image: uint8 array, (h, w) or (h, w, 3).
        clip_percent: fraction of pixel mass to clip, split between tails.

    Returns:
        (enhanced image, stretch used) so callers can audit the transform.

    Raises:
        DegenerateRange: the image has no usable dynamic range.
    """
    hist = compute_gray_histogram(image)
    minimum_gray, maximum_gray = compute_clip_range(hist, clip_percent)
    stretch = fit_stretch(minimum_gray, maximum_gray)
    return apply_stretch(image, stretch), stretch


def audit_record(stretch: LinearStretch, clip_percent: float) -> str:
    """Renders the key=value sidecar audit text for one enhanced image."""
    lines = [
        f"alpha={stretch.alpha!r}",
        f"beta={stretch.beta!r}",
        f"minimum_gray={stretch.minimum_gray}",
        f"maximum_gray={stretch.maximum_gray}",
        f"clip_percent={clip_percent!r}",
    ]
    return "\n".join(lines) + "\n"
