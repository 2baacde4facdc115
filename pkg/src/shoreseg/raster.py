"""8-bit raster image handling: validation and JPEG/PNG file I/O.

Images are plain numpy arrays of dtype uint8: shape (height, width) for
single-channel data, (height, width, 3) for RGB. All imaging operations in
this package consume and produce this representation.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

__all__ = [
    "validate_image",
    "image_size",
    "channel_count",
    "load_image",
    "save_image",
    "encode_image",
    "decode_image",
]


def validate_image(image: np.ndarray) -> np.ndarray:
    """Checks that ``image`` is a valid 8-bit raster.

    Args:
        image: candidate array.

    Returns:
        The array itself, for call chaining.

    Raises:
        TypeError: not a numpy array.
        ValueError: wrong dtype, dimensionality, channel count, or empty.
    """
    if not isinstance(image, np.ndarray):
        raise TypeError(f"image must be a numpy array, got {type(image).__name__}")
    if image.dtype != np.uint8:
        raise ValueError(f"image dtype must be uint8, got {image.dtype}")
    if image.ndim == 2:
        h, w = image.shape
    elif image.ndim == 3:
        h, w = image.shape[:2]
        if image.shape[2] != 3:
            raise ValueError(f"3-d image must have 3 channels, got {image.shape[2]}")
    else:
        raise ValueError(f"image must be 2-d or 3-d, got {image.ndim}-d")
    if h < 1 or w < 1:
        raise ValueError(f"image must be at least 1x1, got {w}x{h}")
    return image


def image_size(image: np.ndarray) -> tuple[int, int]:
    """Returns (width, height) of a validated image."""
    h, w = image.shape[:2]
    return int(w), int(h)


def channel_count(image: np.ndarray) -> int:
    """Returns 1 for grayscale arrays, 3 for RGB."""
    return 1 if image.ndim == 2 else int(image.shape[2])


def load_image(path) -> np.ndarray:
    """Reads a JPEG or PNG file into a uint8 array.

    Grayscale files become (h, w); everything else is converted to RGB
    (h, w, 3). Alpha channels and palettes are flattened by the conversion.
    """
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return validate_image(arr)


def save_image(path, image: np.ndarray) -> None:
    """Writes a uint8 array to ``path``; format chosen from the extension."""
    validate_image(image)
    Image.fromarray(image).save(path)


def encode_image(image: np.ndarray, format: str = "PNG") -> bytes:
    """Encodes a uint8 array to image bytes in memory."""
    validate_image(image)
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format=format)
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    """Decodes image bytes with the same conventions as load_image."""
    with Image.open(io.BytesIO(data)) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return validate_image(arr)
