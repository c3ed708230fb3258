"""Binary PPM (P6) / PGM (P5) readers and writers.

Images travel as 8-bit binary netpbm rasters: trivially parseable, bit-exact,
and diffable with standard tools. RGB images map to P6, class-index masks to P5.
"""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    """Write an H x W x 3 uint8 array as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 array, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {image.dtype}")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def write_pgm(path: PathLike, mask: np.ndarray) -> None:
    """Write an H x W uint8 array as binary PGM."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected H x W array, got shape {mask.shape}")
    if mask.dtype != np.uint8:
        raise ValueError(f"expected uint8 values, got {mask.dtype}")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(mask.tobytes())


def _read_header(data: bytes, path: PathLike) -> tuple[str, int, int, int, int]:
    """Parse magic, width, height, maxval; return them plus the pixel offset."""
    pos = 0

    def next_token() -> str:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated netpbm header")
        return data[start:pos].decode("ascii")

    magic = next_token()
    width = int(next_token())
    height = int(next_token())
    maxval = int(next_token())
    pos += 1  # single whitespace byte after maxval
    return magic, width, height, maxval, pos


def read_ppm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _read_header(data, path)
    if magic != "P6":
        raise ValueError(f"{path}: expected P6 magic, got {magic!r}")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit rasters supported, maxval {maxval}")
    expected = width * height * 3
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    if pixels.size != expected:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width, 3).copy()


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _read_header(data, path)
    if magic != "P5":
        raise ValueError(f"{path}: expected P5 magic, got {magic!r}")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit rasters supported, maxval {maxval}")
    expected = width * height
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    if pixels.size != expected:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).copy()
