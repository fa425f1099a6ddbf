"""Image file I/O: binary PPM (P6) natively, PNG through Pillow."""

from __future__ import annotations

import os

import numpy as np


class ImageIOError(Exception):
    pass


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise ImageIOError(f"{path}: not a binary PPM (P6) file")
    # Header tokens may be separated by whitespace and '#' comments.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ImageIOError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    if len(data) - pos < h * w * 3:
        raise ImageIOError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=pos)
    return pixels.reshape(h, w, 3).copy()


def write_ppm(path: str, image: np.ndarray) -> None:
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_image(path: str) -> np.ndarray:
    """Load an RGB image as [H, W, 3] uint8 from PPM or PNG."""
    ext = os.path.splitext(path)[1].lower()
    if ext in (".ppm", ".pnm"):
        return read_ppm(path)
    try:
        from PIL import Image
    except ImportError as e:  # PPM remains the dependency-free path
        raise ImageIOError(f"Pillow is required to read {ext} files: {e}") from None
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path: str, image: np.ndarray) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext in (".ppm", ".pnm"):
        write_ppm(path, image)
        return
    from PIL import Image

    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path)
