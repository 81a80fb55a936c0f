"""Gray-scale PGM I/O and the inpainting region (mask, boundary band, box).

Pixel arrays are ``(rows, cols)``; the solver's x axis is the row axis.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .assembly import BoxStencil, FactorizedSPD
from .grid import ScalarField, laplacian_array

DEFAULT_BAND = 3
MASK_THRESHOLD = 128


class PGMError(ValueError):
    """Base class for PGM decoding problems."""


class PGMHeaderError(PGMError):
    pass


class PGMMaxvalError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


class MaskError(ValueError):
    pass


class InitMode(str, enum.Enum):
    ZERO = "zero"
    MEAN_OF_BAND = "mean-of-band"
    HARMONIC = "harmonic"


@dataclass
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise ValueError("gray image must be a non-empty 2-D array")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def copy(self) -> "GrayImage":
        return GrayImage(self.pixels.copy())


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def _tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise PGMHeaderError("unexpected end of header")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        out.append(data[start:pos])
    return out, pos


def decode_pgm(data: bytes) -> GrayImage:
    (magic,), pos = _tokens(data, 1)
    if magic not in (b"P2", b"P5"):
        raise PGMHeaderError(f"not a gray-scale PGM (magic {magic!r})")
    fields, pos = _tokens(data, 3, pos)
    try:
        width, height, maxval = (int(t) for t in fields)
    except ValueError as exc:
        raise PGMHeaderError(f"malformed header fields {fields!r}") from exc
    if width <= 0 or height <= 0 or maxval <= 0:
        raise PGMHeaderError("header values must be positive")
    if maxval > 255:
        raise PGMMaxvalError(f"unsupported maxval {maxval} (only <= 255)")
    count = width * height

    if magic == b"P5":
        pos += 1  # exactly one whitespace byte before the raster
        raster = data[pos:pos + count]
        if len(raster) < count:
            raise PGMTruncatedError(f"expected {count} bytes of pixel data, got {len(raster)}")
        values = np.frombuffer(raster, dtype=np.uint8).astype(float)
    else:
        parts = data[pos:].split()
        if len(parts) < count:
            raise PGMTruncatedError(f"expected {count} pixel values, got {len(parts)}")
        try:
            values = np.array([int(p) for p in parts[:count]], dtype=float)
        except ValueError as exc:
            raise PGMHeaderError("non-integer pixel value in P2 raster") from exc
    if np.any(values > maxval):
        raise PGMError("pixel value exceeds maxval")
    if maxval != 255:
        values = values * (255.0 / maxval)
    return GrayImage(values.reshape(height, width))


def read_pgm(path: str | os.PathLike) -> GrayImage:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def to_bytes(pixels: np.ndarray) -> np.ndarray:
    """Round half away from zero, then clamp to [0, 255]."""
    p = np.asarray(pixels, dtype=float)
    rounded = np.sign(p) * np.floor(np.abs(p) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def encode_pgm(image: GrayImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + to_bytes(image.pixels).tobytes()


def write_pgm(image: GrayImage, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


# ---------------------------------------------------------------------------
# inpainting region
# ---------------------------------------------------------------------------

@dataclass
class MaskRegion:
    """The set to inpaint inside a box that carries ``band_width`` known layers.

    ``row0, col0`` locate the box in the host image; ``interior`` is the
    boolean mask over the box (True = unknown); ``i0`` holds the host values
    on the box (meaningful only where ``interior`` is False).
    """

    row0: int
    col0: int
    interior: np.ndarray
    band_width: int
    i0: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.interior.shape

    @property
    def known(self) -> np.ndarray:
        return ~self.interior

    @property
    def slices(self) -> tuple[slice, slice]:
        nr, nc = self.shape
        return slice(self.row0, self.row0 + nr), slice(self.col0, self.col0 + nc)

    @property
    def interior_extent(self) -> tuple[int, int]:
        """(N, M): rows and columns of the tight bounding box of the mask."""
        rows = np.flatnonzero(self.interior.any(axis=1))
        cols = np.flatnonzero(self.interior.any(axis=0))
        return int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)

    @property
    def n_unknown(self) -> int:
        return int(self.interior.sum())


def region_from_mask(mask: np.ndarray, host: GrayImage, band_width: int = DEFAULT_BAND) -> MaskRegion:
    """Build the region from a boolean mask of host shape (True = inpaint)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != host.pixels.shape:
        raise MaskError(f"mask shape {mask.shape} does not match image shape {host.pixels.shape}")
    if band_width < 1:
        raise MaskError("band width must be at least one pixel")
    if not mask.any():
        raise MaskError("empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1 = rows[0] - band_width, rows[-1] + band_width
    c0, c1 = cols[0] - band_width, cols[-1] + band_width
    if r0 < 0 or c0 < 0 or r1 >= mask.shape[0] or c1 >= mask.shape[1]:
        raise MaskError("insufficient boundary band: mask is closer than "
                        f"{band_width} pixels to the image border")
    box = (slice(r0, r1 + 1), slice(c0, c1 + 1))
    interior = mask[box].copy()
    i0 = np.where(interior, 0.0, host.pixels[box])
    return MaskRegion(int(r0), int(c0), interior, band_width, i0)


def load_mask(path: str | os.PathLike, host: GrayImage, band_width: int = DEFAULT_BAND) -> MaskRegion:
    """Read a mask PGM; pixels >= 128 are inpainted, the rest are known."""
    mask_img = read_pgm(path)
    if mask_img.pixels.shape != host.pixels.shape:
        raise MaskError(f"mask is {mask_img.width}x{mask_img.height}, image is {host.width}x{host.height}")
    return region_from_mask(mask_img.pixels >= MASK_THRESHOLD, host, band_width)


def harmonic_fill(region: MaskRegion) -> np.ndarray:
    """Box values with the mask filled by the discrete harmonic extension."""
    a_uu, a_uk = BoxStencil(region.interior).assemble(0.0, 1.0)
    out = region.i0.copy()
    out[region.interior] = FactorizedSPD(a_uu).solve(-(a_uk @ region.i0[region.known]))
    return out


def boundary_vorticity(host: GrayImage, region: MaskRegion) -> np.ndarray:
    """Frozen vorticity data on the known part of the box.

    The 5-point Laplacian of the host is used wherever its whole stencil
    consists of known host pixels.  Known pixels whose stencil reaches into
    the mask (or off the image) take the mean of already-filled known
    neighbours, repeated outward-in, i.e. a zero normal derivative.
    Entries on the mask are zero.
    """
    nr, nc = region.shape
    H, W = host.pixels.shape
    host_mask = np.zeros((H, W), dtype=bool)
    host_mask[region.slices] = region.interior
    pad_px = np.pad(host.pixels, 1, mode="edge")
    pad_ok = np.pad(~host_mask, 1, mode="constant", constant_values=False)
    r = slice(region.row0 + 1, region.row0 + 1 + nr)
    c = slice(region.col0 + 1, region.col0 + 1 + nc)
    lap = laplacian_array(pad_px[region.row0:region.row0 + nr + 2, region.col0:region.col0 + nc + 2])[1:-1, 1:-1]

    def nb(a, di, dj):
        return a[region.row0 + 1 + di:region.row0 + 1 + di + nr, region.col0 + 1 + dj:region.col0 + 1 + dj + nc]

    ok = pad_ok[r, c] & nb(pad_ok, 1, 0) & nb(pad_ok, -1, 0) & nb(pad_ok, 0, 1) & nb(pad_ok, 0, -1)
    known = region.known
    omega = np.where(ok, lap, 0.0)
    filled = ok.copy()
    while True:
        todo = known & ~filled
        if not todo.any():
            break
        vals = np.pad(np.where(filled, omega, 0.0), 1)
        cnt = np.pad(filled.astype(float), 1)
        s = vals[2:, 1:-1] + vals[:-2, 1:-1] + vals[1:-1, 2:] + vals[1:-1, :-2]
        n = cnt[2:, 1:-1] + cnt[:-2, 1:-1] + cnt[1:-1, 2:] + cnt[1:-1, :-2]
        step = todo & (n > 0)
        if not step.any():
            # isolated known pixels with no filled neighbour: no information
            omega[todo] = 0.0
            break
        omega[step] = s[step] / n[step]
        filled |= step
    return omega


def extract_initial_state(host: GrayImage, region: MaskRegion,
                          init: InitMode | str = InitMode.MEAN_OF_BAND) -> tuple[ScalarField, ScalarField]:
    """Initial intensity and vorticity on the region box.

    Known pixels of ``I`` are copied from the host and the mask is filled
    per ``init``.  The vorticity is the Laplacian of ``I`` on the mask and
    :func:`boundary_vorticity` on the known pixels.
    """
    init = InitMode(init)
    interior = region.interior
    if init is InitMode.ZERO:
        I = np.where(interior, 0.0, region.i0)
    elif init is InitMode.MEAN_OF_BAND:
        I = np.where(interior, region.i0[region.known].mean(), region.i0)
    else:
        I = harmonic_fill(region)
    omega = boundary_vorticity(host, region)
    omega[interior] = laplacian_array(I)[interior]
    return ScalarField.from_array(I), ScalarField.from_array(omega)


def embed_region(host: GrayImage, region: MaskRegion, I) -> GrayImage:
    """Copy of ``host`` with the mask pixels replaced by ``I`` (box-shaped)."""
    values = I.values if isinstance(I, ScalarField) else np.asarray(I, dtype=float)
    if values.shape != region.shape:
        raise ValueError(f"field shape {values.shape} does not match region box {region.shape}")
    out = host.pixels.copy()
    box = out[region.slices]
    box[region.interior] = values[region.interior]
    return GrayImage(out)
