"""Floyd-Steinberg error diffusion."""

from __future__ import annotations

import numpy as np


def floyd_steinberg(u):
    """Binarize a [0, 1] grayscale image by error diffusion.

    Plain raster scan (left to right, top to bottom) with the classic
    7/16, 3/16, 5/16, 1/16 weights.  At the image border the weights are
    renormalized over the in-bounds neighbors, so the quantization error
    never leaves the image and the on-pixel count matches the total
    intensity to within one pixel.  Deterministic.
    """
    work = np.array(u, dtype=float)
    if work.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {work.shape}")
    if work.min() < 0.0 or work.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    ny, nx = work.shape
    out = np.zeros((ny, nx), dtype=np.uint8)
    for y in range(ny):
        for x in range(nx):
            old = work[y, x]
            new = 1.0 if old >= 0.5 else 0.0
            out[y, x] = int(new)
            err = old - new
            targets = []
            if x + 1 < nx:
                targets.append((y, x + 1, 7.0))
            if y + 1 < ny:
                if x > 0:
                    targets.append((y + 1, x - 1, 3.0))
                targets.append((y + 1, x, 5.0))
                if x + 1 < nx:
                    targets.append((y + 1, x + 1, 1.0))
            total = sum(w for _, _, w in targets)
            for ty, tx, w in targets:
                work[ty, tx] += err * w / total
    return out
