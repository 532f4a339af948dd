"""8-bit image files <-> unit-interval float arrays.

PNG goes through Pillow; binary PPM (P6) is handled here directly so that
images can be exchanged without any imaging library.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import as_image


def to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval; '#' starts a comment
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: only binary P6 PPM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pix.reshape(h, w, 3)


def _write_ppm(path: Path, arr: np.ndarray) -> None:
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    h, w = arr.shape[:2]
    path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes())


def read_image(path, channels: int | None = 3) -> np.ndarray:
    """Load PNG/PPM into an ``(H, W, C)`` float64 array in ``[0, 1]``.

    ``channels=3`` converts grayscale to RGB, ``channels=1`` converts RGB to
    luminance, ``None`` keeps whatever the file holds.
    """
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        arr = _read_ppm(path)
    else:
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    img = from_uint8(arr)
    if channels == 3 and img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    elif channels == 1 and img.shape[2] == 3:
        img = luminance(img)[:, :, None]
    return img


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    arr = to_uint8(as_image(np.clip(img, 0.0, 1.0)))
    if path.suffix.lower() in (".ppm", ".pnm"):
        _write_ppm(path, arr)
        return
    from PIL import Image

    Image.fromarray(arr[:, :, 0] if arr.shape[2] == 1 else arr).save(path, format="PNG")


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an ``(H, W, C)`` image as an ``(H, W)`` array."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114
