"""On-disk formats for images, masks and k-space.

Complex arrays are stored as a one-line plain-text header ``"<width> <height>\\n"``
followed by little-endian float64 pairs ``(re, im)`` in row-major order.
Stacks (coil maps, multi-coil k-space) are stored as one tall image whose
height is the stack depth times the per-slice height.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import InvalidInputError
from ..forward_model import SamplingMask

_DTYPE = np.dtype("<f8")


def write_complex(path, arr):
    arr = np.asarray(arr, dtype=np.complex128)
    if arr.ndim != 2:
        raise InvalidInputError("only 2-D arrays can be written; reshape stacks first")
    height, width = arr.shape
    inter = np.empty((height, width, 2), dtype=_DTYPE)
    inter[..., 0] = arr.real
    inter[..., 1] = arr.imag
    with open(path, "wb") as fh:
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(inter.tobytes())


def read_complex(path):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise InvalidInputError(f"{path}: missing header line")
    try:
        width, height = (int(t) for t in raw[:nl].split())
    except ValueError:
        raise InvalidInputError(f"{path}: malformed header {raw[:nl]!r}") from None
    body = raw[nl + 1 :]
    if len(body) != width * height * 16:
        raise InvalidInputError(
            f"{path}: expected {width * height * 16} data bytes, found {len(body)}"
        )
    inter = np.frombuffer(body, dtype=_DTYPE).reshape(height, width, 2)
    return inter[..., 0] + 1j * inter[..., 1]


def write_stack(path, stack):
    stack = np.asarray(stack)
    write_complex(path, stack.reshape(-1, stack.shape[-1]))


def read_stack(path, depth):
    flat = read_complex(path)
    if flat.shape[0] % depth:
        raise InvalidInputError(f"{path}: height {flat.shape[0]} not divisible by {depth}")
    return flat.reshape(depth, flat.shape[0] // depth, flat.shape[1])


def write_magnitude_png(path, arr, vmax=None):
    """8-bit grayscale PNG of ``|arr|`` scaled so ``vmax`` maps to 255."""
    mag = np.abs(np.asarray(arr))
    if vmax is None:
        vmax = float(mag.max())
    scaled = np.zeros_like(mag) if vmax <= 0 else np.clip(mag / vmax, 0.0, 1.0)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8)).save(path)


def write_mask(path, mask: SamplingMask):
    Path(path).write_text(mask.to_text())


def read_mask(path) -> SamplingMask:
    return SamplingMask.from_text(Path(path).read_text())
