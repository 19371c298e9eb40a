"""Minimal readers and writers for binary PGM (labels), PPM (rgb) and PFM (float maps)."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]


def _read_header(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Split off ``count`` whitespace-separated header tokens (skipping # comments)."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte after the last token


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {image.shape}")
    if image.min(initial=0) < 0 or image.max(initial=0) > 255:
        raise ValueError("PGM values must fit in 0..255")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.astype(np.uint8).tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _read_header(data, 4)
    if magic != b"P5" or int(maxval) > 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(w), int(h)
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w).copy()


def write_ppm(path: PathLike, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM needs an (H, W, 3) array, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.clip(rgb, 0, 255).astype(np.uint8).tobytes())


def read_ppm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _read_header(data, 4)
    if magic != b"P6" or int(maxval) > 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(w), int(h)
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos).reshape(h, w, 3).copy()


def write_pfm(path: PathLike, values: np.ndarray) -> None:
    """Greyscale portable float map, little-endian, bottom row first."""
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"PFM needs a 2-D array, got shape {values.shape}")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, scale), pos = _read_header(data, 4)
    if magic != b"Pf":
        raise ValueError(f"{path}: only greyscale PFM is supported")
    w, h = int(w), int(h)
    dtype = "<f4" if float(scale) < 0 else ">f4"
    flat = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    return flat.reshape(h, w)[::-1].astype(np.float32)
