"""Render LCP fields to images with a white/yellow-to-red colormap.

Certain-empty cells (p = 0) stay white so they read as background; any
positive probability interpolates linearly from yellow (low) to red (high)
after an optional gamma curve. Output is binary PPM (P6); PNG is available
through Pillow when installed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfRange
from .pmc import LcpField


@dataclass(frozen=True)
class ColormapSpec:
    zero_color: tuple[int, int, int] = (255, 255, 255)
    low_color: tuple[int, int, int] = (255, 255, 0)
    high_color: tuple[int, int, int] = (255, 0, 0)
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise OutOfRange(f"gamma must be > 0, got {self.gamma}")


def render_lcp(field: LcpField, cmap: ColormapSpec | None = None, scale: int = 1) -> np.ndarray:
    """8-bit RGB image of a probability field, row 0 at the image bottom.

    p = 0 maps to ``zero_color``; p in (0, 1] interpolates low->high on
    p**gamma with round-half-up channels. The image is upscaled by
    nearest-neighbor to (cells_h * scale, cells_w * scale).
    """
    if scale < 1:
        raise OutOfRange(f"scale must be >= 1, got {scale}")
    cmap = cmap or ColormapSpec()

    p = field.probs.astype(np.float64)
    t = np.power(p, cmap.gamma)
    low = np.asarray(cmap.low_color, dtype=np.float64)
    high = np.asarray(cmap.high_color, dtype=np.float64)
    rgb = low + (high - low) * t[..., None]
    rgb = np.floor(rgb + 0.5)  # round half up
    rgb[p == 0.0] = np.asarray(cmap.zero_color, dtype=np.float64)

    img = np.clip(rgb, 0, 255).astype(np.uint8)
    img = img[::-1]  # field row 0 at the bottom of the image
    if scale > 1:
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return img


def write_ppm(image: np.ndarray, path: str | Path) -> Path:
    """Write an (h, w, 3) uint8 image as binary PPM (P6)."""
    path = Path(path)
    h, w = image.shape[:2]
    with path.open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path


def read_ppm(path: str | Path) -> np.ndarray:
    """Read back a binary PPM written by :func:`write_ppm`."""
    blob = Path(path).read_bytes()
    header, _, rest = blob.partition(b"\n")
    dims, _, rest = rest.partition(b"\n")
    maxval, _, payload = rest.partition(b"\n")
    if header != b"P6" or maxval != b"255":
        raise OutOfRange(f"{path}: not an 8-bit P6 PPM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(payload, dtype=np.uint8)[: h * w * 3].reshape(h, w, 3)


def write_image(image: np.ndarray, path: str | Path) -> Path:
    """Write PPM, or PNG via Pillow when the path ends in .png."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(image).save(path)
        return path
    return write_ppm(image, path)
