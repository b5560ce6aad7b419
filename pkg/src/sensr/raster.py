"""Tiny rasterizer for 2-d decision heatmaps.

Scores on a pixel grid are mapped through a blue-white-red ramp, then points
and segments are stamped on top. Pillow is only used to encode the PNG.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

BLUE = np.array([49, 99, 189], dtype=np.float64)
WHITE = np.array([247, 247, 247], dtype=np.float64)
RED = np.array([202, 59, 47], dtype=np.float64)
INK = {0: (20, 40, 120), 1: (130, 20, 20), "line": (40, 40, 40), "edge": (0, 0, 0)}


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @classmethod
    def around(cls, points, pad: float = 0.5) -> "Box":
        p = np.asarray(points, dtype=np.float64)
        lo, hi = p.min(axis=0) - pad, p.max(axis=0) + pad
        return cls(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

    def grid(self, width: int, height: int) -> np.ndarray:
        """Pixel-centre coordinates, row 0 at the top, shape ``(height*width, 2)``."""
        xs = self.xmin + (np.arange(width) + 0.5) * (self.xmax - self.xmin) / width
        ys = self.ymax - (np.arange(height) + 0.5) * (self.ymax - self.ymin) / height
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def to_pixel(self, points, width: int, height: int) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        col = (p[:, 0] - self.xmin) / (self.xmax - self.xmin) * width
        row = (self.ymax - p[:, 1]) / (self.ymax - self.ymin) * height
        return np.column_stack([np.floor(row), np.floor(col)]).astype(np.int64)


def ramp(scores) -> np.ndarray:
    """Scores in [0, 1] to RGB; 0.5 is white."""
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)[..., None]
    lo = BLUE + (WHITE - BLUE) * (s / 0.5)
    hi = WHITE + (RED - WHITE) * ((s - 0.5) / 0.5)
    return np.where(s < 0.5, lo, hi)


class Canvas:
    def __init__(self, box: Box, width: int = 320, height: int = 320):
        self.box, self.width, self.height = box, width, height
        self.pixels = np.zeros((height, width, 3), dtype=np.uint8)

    def heatmap(self, score_fn, boundary: float | None = 0.5) -> "Canvas":
        """``score_fn`` maps an ``(m, 2)`` array to scores in [0, 1]."""
        s = np.asarray(score_fn(self.box.grid(self.width, self.height))).reshape(self.height, self.width)
        rgb = ramp(s)
        if boundary is not None:
            above = s >= boundary
            edge = np.zeros_like(above)
            edge[:, 1:] |= above[:, 1:] != above[:, :-1]
            edge[1:, :] |= above[1:, :] != above[:-1, :]
            rgb[edge] = INK["edge"]
        self.pixels = np.round(rgb).astype(np.uint8)
        return self

    def _put(self, r, c, colour):
        ok = (r >= 0) & (r < self.height) & (c >= 0) & (c < self.width)
        self.pixels[r[ok], c[ok]] = colour

    def points(self, pts, labels, radius: int = 1) -> "Canvas":
        rc = self.box.to_pixel(pts, self.width, self.height)
        labels = np.asarray(labels)
        for dr in range(-radius, radius + 1):
            for dc in range(-radius, radius + 1):
                for lab in (0, 1):
                    m = labels == lab
                    self._put(rc[m, 0] + dr, rc[m, 1] + dc, INK[lab])
        return self

    def segments(self, starts, ends, steps: int = 400) -> "Canvas":
        a = np.atleast_2d(np.asarray(starts, dtype=np.float64))
        b = np.atleast_2d(np.asarray(ends, dtype=np.float64))
        for t in np.linspace(0.0, 1.0, steps):
            rc = self.box.to_pixel(a + t * (b - a), self.width, self.height)
            self._put(rc[:, 0], rc[:, 1], INK["line"])
        return self

    def save(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG", optimize=False)
