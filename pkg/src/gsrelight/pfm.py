"""PFM (portable float map) image I/O plus an 8-bit PNG preview writer.

The PFM layout is the classic one: a three-line ASCII header
``PF\\n<width> <height>\\n<scale>\\n`` followed by rows of float32 RGB
triplets stored bottom-to-top.  A negative scale marks little-endian
payloads and is what the writer emits.  In memory this package keeps
images top-to-bottom, so both directions flip rows.
"""

from __future__ import annotations

import numpy as np

from .errors import AssetError


def read_pfm(path) -> np.ndarray:
    """Read a color PFM file into an (H, W, 3) float32 array, top row first."""
    with open(path, "rb") as fh:
        data = fh.read()

    def next_token(pos):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise AssetError(f"{path}: truncated PFM header")
        return data[start:pos], pos

    magic, pos = next_token(0)
    if magic == b"Pf":
        raise AssetError(f"{path}: grayscale PFM not supported, expected color 'PF'")
    if magic != b"PF":
        raise AssetError(f"{path}: not a PFM file (magic {magic!r})")
    try:
        wtok, pos = next_token(pos)
        htok, pos = next_token(pos)
        stok, pos = next_token(pos)
        width, height = int(wtok), int(htok)
        scale = float(stok)
    except (ValueError, AssetError) as exc:
        raise AssetError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or scale == 0.0:
        raise AssetError(f"{path}: bad PFM dimensions or scale ({width}x{height}, {scale})")

    pos += 1  # single whitespace byte terminates the header
    count = width * height * 3
    dtype = np.dtype("<f4") if scale < 0.0 else np.dtype(">f4")
    payload = data[pos : pos + count * 4]
    if len(payload) != count * 4:
        raise AssetError(
            f"{path}: truncated PFM payload ({len(payload)} bytes, expected {count * 4})"
        )
    pixels = np.frombuffer(payload, dtype=dtype).reshape(height, width, 3)
    pixels = pixels[::-1].astype("<f4", copy=True)  # bottom-to-top on disk
    mag = abs(scale)
    if mag != 1.0:
        pixels *= np.float32(mag)
    return pixels


def write_pfm(path, pixels) -> None:
    """Write an (H, W, 3) array as a little-endian color PFM, scale -1."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise AssetError(f"expected an (H, W, 3) array, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr[::-1], dtype="<f4")
    header = f"PF\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    """Apply the sRGB transfer function to linear values clipped to [0, 1]."""
    c = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(
        c <= 0.0031308,
        12.92 * c,
        1.055 * np.power(c, 1.0 / 2.4) - 0.055,
    )


def write_png_preview(path, pixels) -> None:
    """Tone-map linear radiance to 8-bit sRGB and save as PNG."""
    from PIL import Image

    srgb = linear_to_srgb(pixels)
    quantized = (srgb * 255.0).round().astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)
