"""Raster data model, crop extraction, seeded RNG streams and bit-exact file I/O.

RAS1 layout (all little-endian):
    magic "RAS1" | version u32 = 1 | bands u32 | height u32 | width u32 | reserved u32
    payload: bands*height*width IEEE-754 binary32, planar band-major.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from validation import RasterFormatError, ShapeError, validate_raster

logger = logging.getLogger(__name__)

PEAK = 4095.0
MAGIC = b"RAS1"
VERSION = 1
HEADER = struct.Struct("<4s5I")
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# PNG R,G,B channels stored as bands G,R,B so the green reference is band 0; the swap is its own inverse.
RGB_TO_BANDS = (1, 0, 2)
MAX_VALUES = 1 << 31

Rng = np.random.Generator

# child_rng stream keys; one independent stream per concern so crop placement
# does not depend on how many shift or noise draws a configuration makes.
STREAM_SHIFTS = 1
STREAM_NOISE = 2
STREAM_CROPS = 3
STREAM_SPLITS = 4
STREAM_BATCHES = 5


def make_rng(seed: int) -> Rng:
    """PCG64 stream. Identical seed gives identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, *keys: int) -> Rng:
    """Independent named stream derived from (seed, *keys)."""
    return np.random.Generator(np.random.PCG64([seed, *keys]))


def derive_seed(seed: int, index: int) -> int:
    """Per-worker seed: seed XOR index."""
    return int(seed) ^ int(index)


@dataclass(frozen=True, eq=False)
class Raster:
    """Planar float32 image, values on the 12-bit DN scale [0, 4095]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ShapeError(f"raster data must be (bands, height, width), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        validate_raster(self)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def band(self, b: int) -> np.ndarray:
        return self.data[b]

    def select(self, bands: list[int]) -> Raster:
        return Raster(self.data[list(bands)])

    def window(self, row: int, col: int, height: int, width: int) -> Raster:
        return Raster(self.data[:, row : row + height, col : col + width])


@dataclass(frozen=True)
class CropSpec:
    """Crop placement in LR pixels. The HR counterpart is the 2x footprint."""

    row: int
    col: int
    size: int

    def hr_window(self) -> tuple[int, int, int]:
        return 2 * self.row, 2 * self.col, 2 * self.size


def write_raster(r: Raster, path: str | Path) -> None:
    """Write RAS1. Byte output is a pure function of the raster."""
    validate_raster(r)
    header = HEADER.pack(MAGIC, VERSION, r.bands, r.height, r.width, 0)
    payload = r.data.astype("<f4", copy=False).tobytes(order="C")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_raster(path: str | Path) -> Raster:
    """Read RAS1. Values come back bit-for-bit."""
    path = Path(path)
    if not path.exists():
        raise RasterFormatError("missing file", path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise RasterFormatError("truncated header", path)
    magic, version, bands, height, width, _ = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise RasterFormatError("bad magic", path)
    if version != VERSION:
        raise RasterFormatError(f"unsupported version {version}", path)
    count = bands * height * width
    if bands == 0 or height == 0 or width == 0 or count > MAX_VALUES:
        raise RasterFormatError(f"dimension overflow: {bands}x{height}x{width}", path)
    expected = HEADER.size + 4 * count
    if len(blob) < expected:
        raise RasterFormatError(f"truncated payload: {len(blob) - HEADER.size} of {4 * count} bytes", path)
    if len(blob) > expected:
        raise RasterFormatError("trailing bytes after payload", path)
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=HEADER.size)
    return Raster(data.reshape(bands, height, width))


def _png_depth(path: Path) -> tuple[int, int]:
    """(bit depth, colour type) from the IHDR chunk."""
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        return 0, 0
    return head[24], head[25]


def read_png(path: str | Path) -> Raster:
    """Import an 8- or 16-bit grayscale/RGB PNG onto the 12-bit scale. RGB lands in G, R, B band order."""
    path = Path(path)
    if not path.exists():
        raise RasterFormatError("missing file", path)
    try:
        img = Image.open(path)
        img.load()
    except OSError as e:
        raise RasterFormatError(f"unreadable image: {e}", path) from e

    mode = img.mode
    if mode in ("I;16", "I;16L", "I;16B", "I"):
        arr = np.asarray(img).astype(np.float64)
        scale = PEAK / 65535.0
    else:
        if mode in ("1", "LA", "L"):
            img = img.convert("L")
        elif mode in ("P", "RGBA", "RGB", "CMYK", "YCbCr"):
            depth, colour = _png_depth(path)
            if depth == 16 and colour in (2, 6):
                logger.warning("%s: 16-bit colour PNG decoded at 8 bits, low byte lost", path.name)
            img = img.convert("RGB")
        else:
            raise RasterFormatError(f"unsupported PNG mode {mode}", path)
        arr = np.asarray(img).astype(np.float64)
        scale = PEAK / 255.0

    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)[list(RGB_TO_BANDS)]
    return Raster(arr * scale)


def to_uint8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(data, dtype=np.float64) * (255.0 / PEAK)), 0, 255).astype(np.uint8)


def write_png(r: Raster, path: str | Path) -> None:
    """8-bit preview: 0..4095 mapped linearly to 0..255, clamped. 3-band rasters are written back as RGB."""
    if r.bands not in (1, 3):
        raise ShapeError(f"PNG preview needs 1 or 3 bands, got {r.bands}")
    arr = to_uint8(r.data)
    if r.bands == 1:
        img = Image.fromarray(arr[0])
    else:
        img = Image.fromarray(np.ascontiguousarray(arr[list(RGB_TO_BANDS)].transpose(1, 2, 0)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def load_any(path: str | Path) -> Raster:
    """RAS1 or PNG, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)
    return read_raster(path)


def crop_origins(height: int, width: int, size: int) -> list[tuple[int, int]]:
    """Uniform grid of non-overlapping valid origins, row-major."""
    rows = range(0, height - size + 1, size)
    cols = range(0, width - size + 1, size)
    return [(r, c) for r in rows for c in cols]


def extract_crops(
    lr: Raster, hr: Raster, size: int, max_crops: int, rng: Rng
) -> list[tuple[CropSpec, Raster, Raster]]:
    """Sample up to max_crops LR crops without replacement; pair each with its 2x HR footprint."""
    if hr.height != 2 * lr.height or hr.width != 2 * lr.width or hr.bands != lr.bands:
        raise ShapeError(f"HR {hr.shape} is not the 2x counterpart of LR {lr.shape}")
    if size < 1 or size > min(lr.height, lr.width):
        raise ValueError(f"crop size {size} does not fit LR {lr.height}x{lr.width}")

    origins = crop_origins(lr.height, lr.width, size)
    order = rng.permutation(len(origins))[: max(0, max_crops)]
    out = []
    for k in order:
        row, col = origins[int(k)]
        spec = CropSpec(row, col, size)
        hr_row, hr_col, hr_size = spec.hr_window()
        out.append((spec, lr.window(row, col, size, size), hr.window(hr_row, hr_col, hr_size, hr_size)))
    return out
