"""Polygon arithmetic for carrying annotations through tiling.

Polygons are closed vertex rings in continuous pixel coordinates (x right,
y down; the edge from the last vertex back to the first is implicit).
Operations: shoelace area, Sutherland-Hodgman clipping against axis-aligned
rectangles, translation, and rasterization to boolean masks by pixel-center
sampling with the even-odd rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Polygon",
    "PixelRect",
    "SLIVER_AREA",
    "polygon_area",
    "clip_to_rect",
    "translate",
    "rasterize",
]

# post-clip fragments below this area (square pixels) carry no label signal
SLIVER_AREA = 1.0


# ===================== types =====================

@dataclass(frozen=True, eq=False)
class Polygon:
    """Closed vertex ring, (n, 2) float64, implicit last-to-first edge.

    Invariants: at least 3 vertices; no two cyclically consecutive
    vertices identical; all coordinates finite.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"vertices must be (n, 2), got shape {v.shape}")
        if len(v) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon coordinates must be finite")
        duplicate = np.all(v == np.roll(v, -1, axis=0), axis=1)
        if duplicate.any():
            raise ValueError("consecutive duplicate vertices (closing edge included)")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle: inclusive top-left origin plus size."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"rect must be at least 1x1, got {self.width}x{self.height}"
            )

    @property
    def x1(self) -> int:
        """Exclusive right edge."""
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        """Exclusive bottom edge."""
        return self.y0 + self.height


# ===================== operations =====================

def polygon_area(p: Polygon) -> float:
    """Absolute area of the ring by the shoelace formula."""
    v = p.vertices
    x = v[:, 0]
    y = v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    return abs(float(cross.sum())) / 2.0


def translate(p: Polygon, dx: float, dy: float) -> Polygon:
    """Shifts every vertex by (dx, dy); area is unchanged."""
    return Polygon(p.vertices + np.array([dx, dy], dtype=np.float64))


def clip_to_rect(p: Polygon, r: PixelRect, min_area: float = SLIVER_AREA):
    """Clips a polygon to a rectangle (Sutherland-Hodgman).

    Args:
        p: subject polygon; may be non-convex or self-intersecting.
        r: convex clip window.
        min_area: fragments below this area are dropped; pass 0 to keep
            every fragment with positive area.

    Returns:
        The clipped Polygon, or None when the intersection is empty, has
        zero area, or falls under ``min_area``.
    """
    points = [(float(x), float(y)) for x, y in p.vertices]
    # each half-plane: (inside test, intersection with its boundary)
    x0, y0, x1, y1 = float(r.x0), float(r.y0), float(r.x1), float(r.y1)
    halfplanes = (
        (lambda pt: pt[0] >= x0, lambda a, b: _cross_vertical(a, b, x0)),
        (lambda pt: pt[0] <= x1, lambda a, b: _cross_vertical(a, b, x1)),
        (lambda pt: pt[1] >= y0, lambda a, b: _cross_horizontal(a, b, y0)),
        (lambda pt: pt[1] <= y1, lambda a, b: _cross_horizontal(a, b, y1)),
    )
    for inside, intersect in halfplanes:
        points = _clip_halfplane(points, inside, intersect)
        if len(points) < 3:
            return None

    points = _drop_consecutive_duplicates(points)
    if len(points) < 3:
        return None
    clipped = Polygon(np.array(points, dtype=np.float64))
    area = polygon_area(clipped)
    if area <= 0.0 or area < min_area:
        return None
    return clipped


def rasterize(p, frame: PixelRect) -> np.ndarray:
    """Boolean mask of the frame: a pixel is set iff its center is inside.

    Pixel (column i, row j) of the mask samples the point
    (frame.x0 + i + 0.5, frame.y0 + j + 0.5) with the even-odd rule.

    Args:
        p: polygon, or None for an empty region.
        frame: rectangle defining mask extent and offset.

    Returns:
        bool array of shape (frame.height, frame.width).
    """
    mask = np.zeros((frame.height, frame.width), dtype=bool)
    if p is None:
        return mask
    xs = frame.x0 + np.arange(frame.width, dtype=np.float64) + 0.5
    ys = frame.y0 + np.arange(frame.height, dtype=np.float64) + 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)

    v = p.vertices
    n = len(v)
    for i in range(n):
        vx1, vy1 = v[i]
        vx2, vy2 = v[(i + 1) % n]
        if vy1 == vy2:
            continue  # horizontal edges never cross a scan ray
        crossing = (vy1 > grid_y) != (vy2 > grid_y)
        cross_x = (vx2 - vx1) * (grid_y - vy1) / (vy2 - vy1) + vx1
        mask ^= crossing & (grid_x < cross_x)
    return mask


# ===================== helpers =====================

def _clip_halfplane(points, inside, intersect):
    """One Sutherland-Hodgman pass against a single half-plane."""
    out = []
    n = len(points)
    for i in range(n):
        current = points[i]
        previous = points[i - 1]
        current_in = inside(current)
        if current_in != inside(previous):
            out.append(intersect(previous, current))
        if current_in:
            out.append(current)
    return out


def _cross_vertical(a, b, x):
    t = (x - a[0]) / (b[0] - a[0])
    return (x, a[1] + t * (b[1] - a[1]))


def _cross_horizontal(a, b, y):
    t = (y - a[1]) / (b[1] - a[1])
    return (a[0] + t * (b[0] - a[0]), y)


def _drop_consecutive_duplicates(points):
    """Removes cyclically consecutive duplicate points."""
    out = []
    for pt in points:
        if not out or pt != out[-1]:
            out.append(pt)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out
