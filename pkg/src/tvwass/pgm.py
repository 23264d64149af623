"""Minimal PGM (portable graymap) reader and writer.

Handles the ASCII (P2) and binary (P5) variants with maxval up to
65535.  Parse failures report the byte offset where the file stopped
making sense.
"""

from __future__ import annotations

import numpy as np


class PGMError(ValueError):
    """Malformed or truncated PGM data."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _tokens(data):
    """Yield (token, offset) pairs, skipping whitespace and # comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i:i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            j = data.find(b"\n", i)
            i = n if j < 0 else j + 1
        else:
            start = i
            while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
                i += 1
            yield data[start:i], start


def read_pgm(path):
    """Read a P2 or P5 file into a uint16 array of shape (rows, cols)."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks = _tokens(data)

    def need(what):
        try:
            return next(toks)
        except StopIteration:
            raise PGMError(f"unexpected end of file, expected {what}", len(data))

    magic, off = need("magic number")
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"not a PGM file, magic {magic!r}", off)
    header = []
    for what in ("width", "height", "maxval"):
        tok, off = need(what)
        try:
            header.append(int(tok))
        except ValueError:
            raise PGMError(f"bad {what} {tok!r}", off)
        if header[-1] <= 0:
            raise PGMError(f"{what} must be positive, got {header[-1]}", off)
    width, height, maxval = header
    if maxval > 65535:
        raise PGMError(f"maxval {maxval} exceeds 65535", off)
    count = width * height
    if magic == b"P2":
        pixels = np.empty(count, dtype=np.uint16)
        for k in range(count):
            tok, off = need("pixel value")
            try:
                v = int(tok)
            except ValueError:
                raise PGMError(f"bad pixel value {tok!r}", off)
            if not 0 <= v <= maxval:
                raise PGMError(f"pixel value {v} outside [0, {maxval}]", off)
            pixels[k] = v
    else:
        # exactly one whitespace byte separates the header from the raster
        tail = off + len(str(maxval)) + 1
        width_bytes = 2 if maxval > 255 else 1
        need_bytes = count * width_bytes
        raster = data[tail:tail + need_bytes]
        if len(raster) < need_bytes:
            raise PGMError(
                f"truncated raster, expected {need_bytes} bytes got {len(raster)}",
                tail + len(raster))
        dtype = ">u2" if width_bytes == 2 else np.uint8
        pixels = np.frombuffer(raster, dtype=dtype).astype(np.uint16)
        if pixels.max(initial=0) > maxval:
            raise PGMError(f"pixel value exceeds maxval {maxval}", tail)
    return pixels.reshape(height, width), maxval


def write_pgm(path, image, maxval=255, binary=True):
    """Write a 2-D integer array as P5 (default) or P2."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.min(initial=0) < 0 or img.max(initial=0) > maxval:
        raise ValueError(f"pixel values outside [0, {maxval}]")
    if not 0 < maxval <= 65535:
        raise ValueError(f"maxval must lie in [1, 65535], got {maxval}")
    height, width = img.shape
    with open(path, "wb") as fh:
        magic = b"P5" if binary else b"P2"
        fh.write(magic + b"\n%d %d\n%d\n" % (width, height, maxval))
        if binary:
            dtype = ">u2" if maxval > 255 else np.uint8
            fh.write(img.astype(dtype).tobytes())
        else:
            for row in img:
                fh.write(" ".join(str(int(v)) for v in row).encode() + b"\n")


def to_unit_interval(image, maxval):
    """Scale integer pixels to floats in [0, 1]."""
    return np.asarray(image, dtype=float) / float(maxval)


def from_unit_interval(u, maxval=255):
    """Quantize floats in [0, 1] back to integer pixels (clipping)."""
    return np.clip(np.rint(np.asarray(u) * maxval), 0, maxval).astype(np.uint16)
