"""Multi-coil Cartesian MRI forward model and synthetic data generators.

Images are 2-D complex arrays of shape ``(height, width)``.  Coil sensitivity
maps are stacked as ``(num_coils, height, width)``.  Multi-coil k-space is
stored as ``(num_coils, num_lines, width)``: each retained phase-encode line
keeps all ``width`` readout samples.

The Fourier transform is the unitary, centred 2-D DFT
``fftshift(fft2(ifftshift(x), norm="ortho"))`` so that row ``height // 2`` of
k-space holds the DC line.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import InvalidInputError

__all__ = [
    "SamplingMask",
    "KSpaceData",
    "ForwardOperator",
    "fft2c",
    "ifft2c",
    "apply_forward",
    "apply_adjoint",
    "estimate_operator_norm",
    "generate_phantom",
    "generate_coil_maps",
    "generate_cartesian_mask",
    "add_noise",
    "PHANTOM_KINDS",
]


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centred unitary 2-D DFT over the last two axes."""
    axes = (-2, -1)
    return np.fft.fftshift(
        scipy.fft.fft2(np.fft.ifftshift(x, axes=axes), norm="ortho"), axes=axes
    )


def ifft2c(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    axes = (-2, -1)
    return np.fft.fftshift(
        scipy.fft.ifft2(np.fft.ifftshift(k, axes=axes), norm="ortho"), axes=axes
    )


@dataclass(frozen=True)
class SamplingMask:
    """Set of fully sampled k-space rows (phase-encode lines).

    Row indices refer to centred k-space, so ``height // 2`` is DC.
    """

    height: int
    retained_lines: tuple[int, ...]

    def __post_init__(self):
        lines = tuple(int(i) for i in self.retained_lines)
        object.__setattr__(self, "retained_lines", lines)
        if self.height < 1:
            raise InvalidInputError("mask height must be positive")
        if not lines:
            raise InvalidInputError("mask must retain at least one line")
        if any(b <= a for a, b in zip(lines, lines[1:])):
            raise InvalidInputError("retained lines must be strictly increasing")
        if lines[0] < 0 or lines[-1] >= self.height:
            raise InvalidInputError("retained line index out of range")

    @property
    def num_lines(self) -> int:
        return len(self.retained_lines)

    @property
    def acceleration(self) -> float:
        return self.height / self.num_lines

    def samples_per_coil(self, width: int) -> int:
        """M, the number of k-space samples acquired per coil."""
        return self.num_lines * width

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.retained_lines, dtype=np.intp)

    def to_text(self) -> str:
        return f"# height {self.height}\n" + "".join(
            f"{i}\n" for i in self.retained_lines
        )

    @classmethod
    def from_text(cls, text: str) -> "SamplingMask":
        height = None
        lines = []
        for raw in text.splitlines():
            raw = raw.strip()
            if not raw:
                continue
            if raw.startswith("#"):
                parts = raw[1:].split()
                if len(parts) == 2 and parts[0] == "height":
                    height = int(parts[1])
                continue
            lines.append(int(raw))
        if height is None:
            raise InvalidInputError("mask text lacks a '# height N' header")
        return cls(height, tuple(lines))


@dataclass(frozen=True)
class KSpaceData:
    """Stacked multi-coil measurements with their per-sample noise variance.

    ``per_coil`` has shape ``(C, num_lines, width)``; ``sigma_sq`` is the
    variance of each complex noise sample so that ``E||w||^2 = C*M*sigma_sq``.
    """

    per_coil: np.ndarray
    sigma_sq: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.per_coil, dtype=np.complex128)
        if data.ndim != 3:
            raise InvalidInputError(
                f"k-space must have shape (C, lines, width), got {data.shape}"
            )
        if not self.sigma_sq >= 0:
            raise InvalidInputError("sigma_sq must be non-negative")
        object.__setattr__(self, "per_coil", data)
        object.__setattr__(self, "sigma_sq", float(self.sigma_sq))

    @property
    def num_coils(self) -> int:
        return self.per_coil.shape[0]

    @property
    def samples_per_coil(self) -> int:
        return self.per_coil.shape[1] * self.per_coil.shape[2]

    @property
    def total_samples(self) -> int:
        """C*M."""
        return self.per_coil.size


@dataclass
class ForwardOperator:
    """The operator ``A = [P F S_1; ...; P F S_C]``.

    Parameters
    ----------
    coil_maps : ndarray, shape (C, height, width)
        Complex sensitivity maps.
    mask : SamplingMask
        Retained k-space rows; ``mask.height`` must equal the image height.
    """

    coil_maps: np.ndarray
    mask: SamplingMask
    _norm_sq: float | None = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        maps = np.asarray(self.coil_maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise InvalidInputError("coil maps must have shape (C, height, width)")
        if not np.all(np.isfinite(maps)):
            raise InvalidInputError("coil maps contain non-finite values")
        if maps.shape[1] != self.mask.height:
            raise InvalidInputError(
                f"mask height {self.mask.height} != image height {maps.shape[1]}"
            )
        self.coil_maps = maps
        self._rows = self.mask.index

    @property
    def num_coils(self) -> int:
        return self.coil_maps.shape[0]

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.coil_maps.shape[1], self.coil_maps.shape[2]

    @property
    def kspace_shape(self) -> tuple[int, int, int]:
        return self.num_coils, self.mask.num_lines, self.coil_maps.shape[2]

    @property
    def samples_per_coil(self) -> int:
        return self.mask.samples_per_coil(self.coil_maps.shape[2])

    @property
    def total_samples(self) -> int:
        return self.num_coils * self.samples_per_coil

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Apply ``A`` to an image, returning a ``(C, lines, width)`` array."""
        x = np.asarray(x)
        if x.shape != self.image_shape:
            raise InvalidInputError(
                f"image shape {x.shape} does not match operator {self.image_shape}"
            )
        return fft2c(self.coil_maps * x)[:, self._rows, :]

    def adjoint(self, k: np.ndarray) -> np.ndarray:
        """Apply ``A^H`` to a ``(C, lines, width)`` array."""
        k = np.asarray(k)
        if k.shape != self.kspace_shape:
            raise InvalidInputError(
                f"k-space shape {k.shape} does not match operator {self.kspace_shape}"
            )
        full = np.zeros(self.coil_maps.shape, dtype=np.complex128)
        full[:, self._rows, :] = k
        return np.sum(np.conj(self.coil_maps) * ifft2c(full), axis=0)

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))

    @property
    def op_norm_sq(self) -> float:
        """Cached estimate of ``||A||_2^2`` (computed on first access)."""
        if self._norm_sq is None:
            estimate_operator_norm(self)
        return self._norm_sq

    def to_dense(self) -> np.ndarray:
        """Assemble ``A`` as a dense ``(C*M, N)`` matrix (small sizes only)."""
        h, w = self.image_shape
        n = h * w
        cols = []
        for j in range(n):
            e = np.zeros(n, dtype=np.complex128)
            e[j] = 1.0
            cols.append(self.forward(e.reshape(h, w)).ravel())
        return np.stack(cols, axis=1)


def apply_forward(op: ForwardOperator, x: np.ndarray) -> KSpaceData:
    """Noise-free measurements ``y_i = P F S_i x``."""
    return KSpaceData(op.forward(x), 0.0)


def apply_adjoint(op: ForwardOperator, y: KSpaceData | np.ndarray) -> np.ndarray:
    """``sum_i S_i^H F^H P^T y_i``."""
    data = y.per_coil if isinstance(y, KSpaceData) else y
    return op.adjoint(data)


def estimate_operator_norm(
    op: ForwardOperator, max_iters: int = 50, tol: float = 1e-8, seed: int = 0
) -> float:
    """Estimate ``||A||_2^2`` by power iteration on ``A^H A``.

    The start vector is drawn from a fixed-seed generator, so the estimate is
    deterministic.  Iteration stops once successive Rayleigh quotients agree
    to relative tolerance ``tol``.  The result is cached on ``op``; concurrent
    callers compute it once.
    """
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    with op._lock:
        if op._norm_sq is not None:
            return op._norm_sq
        rng = np.random.default_rng(seed)
        shape = op.image_shape
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        x /= np.linalg.norm(x)
        quotient = 0.0
        for _ in range(max_iters):
            z = op.normal(x)
            new_quotient = float(np.real(np.vdot(x, z)))
            nz = np.linalg.norm(z)
            if nz == 0.0:
                new_quotient = 0.0
                quotient = new_quotient
                break
            x = z / nz
            converged = abs(new_quotient - quotient) < tol * abs(new_quotient)
            quotient = new_quotient
            if converged:
                break
        op._norm_sq = quotient
        return quotient


# Ellipses as (intensity, semi-axis a, semi-axis b, centre x, centre y,
# rotation in degrees) on a [-1, 1]^2 field of view with y pointing up.

# Knee-like nested layout, painted in order (later ellipses overwrite):
# soft tissue, femur, tibia, a bright cartilage band and small lesions.
_NESTED_ELLIPSES = (
    (0.5, 0.8, 0.9, 0.0, 0.0, 0.0),
    (0.8, 0.55, 0.4, 0.0, 0.35, 0.0),
    (0.8, 0.5, 0.35, 0.0, -0.4, 0.0),
    (1.0, 0.3, 0.08, 0.0, 0.0, 10.0),
    (0.3, 0.1, 0.15, 0.5, 0.1, 0.0),
    (0.2, 0.06, 0.06, -0.3, 0.3, 0.0),
    (0.6, 0.06, 0.1, 0.2, -0.5, 0.0),
)

# Modified Shepp-Logan (Toft), summed.
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

PHANTOM_KINDS = ("uniform-disk", "ellipse-phantom", "ellipse-phantom-phase", "shepp-logan")


def _grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    # pixel centres in [-1, 1], y pointing up
    xs = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    ys = 1.0 - (np.arange(height) + 0.5) / height * 2.0
    return np.meshgrid(xs, ys)


def _render(X, Y, ellipses, additive, rotation):
    rot = math.radians(rotation)
    c, s = math.cos(rot), math.sin(rot)
    image = np.zeros(X.shape)
    for value, a, b, x0, y0, phi in ellipses:
        cx, cy = c * x0 - s * y0, s * x0 + c * y0
        t = math.radians(phi) + rot
        ct, st = math.cos(t), math.sin(t)
        dx, dy = X - cx, Y - cy
        u = dx * ct + dy * st
        v = -dx * st + dy * ct
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        if additive:
            image[inside] += value
        else:
            image[inside] = value
    return image


def generate_phantom(
    width: int, height: int, kind: str = "ellipse-phantom", variant: int | None = None
) -> np.ndarray:
    """Deterministic piecewise-constant test image.

    Parameters
    ----------
    width, height : int
        Image size in pixels (both >= 8).
    kind : {"uniform-disk", "ellipse-phantom", "ellipse-phantom-phase", "shepp-logan"}
        ``uniform-disk`` is 1 inside a centred disk of radius 0.5 and 0
        elsewhere.  ``ellipse-phantom`` is a knee-like stack of nested
        ellipses with levels between 0.2 and 1 on a zero background;
        ``ellipse-phantom-phase`` multiplies it by a smooth linear phase ramp.
        ``shepp-logan`` is the modified Shepp-Logan head phantom.
    variant : int, optional
        When given, the ellipse layout is rotated by a random angle in
        [-15, 15] degrees and the intensities scaled by a factor in
        [0.8, 1.0], both drawn from a generator seeded with ``variant``.
    """
    if width < 8 or height < 8:
        raise InvalidInputError("phantom dimensions must be at least 8x8")
    if kind not in PHANTOM_KINDS:
        raise InvalidInputError(f"unknown phantom kind {kind!r}")
    X, Y = _grid(width, height)
    if kind == "uniform-disk":
        return (X**2 + Y**2 <= 0.25).astype(np.complex128)

    rotation, scale = 0.0, 1.0
    if variant is not None:
        rng = np.random.default_rng(variant)
        rotation = rng.uniform(-15.0, 15.0)
        scale = rng.uniform(0.8, 1.0)
    if kind == "shepp-logan":
        image = _render(X, Y, _SHEPP_LOGAN, True, rotation)
        # the +1 -0.8 ... sums leave rounding noise on flat regions
        image = np.clip(np.round(image, 12), 0.0, None)
    else:
        image = _render(X, Y, _NESTED_ELLIPSES, False, rotation)
    out = (image * scale).astype(np.complex128)
    if kind == "ellipse-phantom-phase":
        out = out * np.exp(1j * (0.5 * np.pi * X + 0.25 * np.pi * Y))
    return out


def generate_coil_maps(
    width: int, height: int, num_coils: int, width_frac: float = 0.6, rotation: float = 0.0
) -> np.ndarray:
    """Smooth surrogate receive-coil sensitivities, normalised pixel-wise.

    Coil ``i`` has a Gaussian magnitude bump centred on the border of the
    field of view at angle ``rotation + 2*pi*i/C`` and a gentle linear phase.
    After construction the maps are scaled so that ``sum_i |S_i|^2 == 1`` at
    every pixel.  ``width_frac`` is the Gaussian standard deviation relative
    to the half-width of the image.

    Notes
    -----
    With ``C = 2`` and ``rotation = 0`` the coils sit left and right, so the
    normalised maps vary only along x.  They then commute with row
    subsampling and ``A^H A`` is a projection; rotate the pair to avoid that.
    """
    if num_coils < 1:
        raise InvalidInputError("num_coils must be >= 1")
    X, Y = _grid(width, height)
    maps = np.empty((num_coils, height, width), dtype=np.complex128)
    for i in range(num_coils):
        theta = rotation + 2.0 * np.pi * i / num_coils
        cx, cy = math.cos(theta), math.sin(theta)
        mag = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width_frac**2))
        phase = 0.5 * np.pi * (cx * X + cy * Y) + theta
        maps[i] = mag * np.exp(1j * phase)
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / rss


def generate_cartesian_mask(
    height: int, acceleration: float, acs_lines: int = 8, seed: int = 0
) -> SamplingMask:
    """Random Cartesian line mask with a fully sampled centre block.

    ``ceil(height / acceleration)`` lines are kept: the ``acs_lines`` lines
    closest to DC, plus lines drawn uniformly without replacement from the
    remainder.
    """
    if not acceleration >= 1.0:
        raise InvalidInputError("acceleration must be >= 1")
    if acs_lines < 0:
        raise InvalidInputError("acs_lines must be non-negative")
    n_keep = min(height, math.ceil(height / acceleration))
    if acs_lines > n_keep:
        raise InvalidInputError(
            f"{acs_lines} ACS lines exceed the {n_keep} lines retained at R={acceleration}"
        )
    start = height // 2 - acs_lines // 2
    acs = np.arange(start, start + acs_lines)
    rest = np.setdiff1d(np.arange(height), acs)
    rng = np.random.default_rng(seed)
    extra = rng.choice(rest, size=n_keep - acs_lines, replace=False)
    return SamplingMask(height, tuple(np.sort(np.concatenate([acs, extra])).tolist()))


def add_noise(y_clean: KSpaceData, target_snr_db: float, seed: int = 0) -> KSpaceData:
    """Add circular complex white Gaussian noise at a prescribed measurement SNR.

    ``sigma_sq = ||y||^2 / (C*M * 10**(snr/10))``; real and imaginary parts
    each get variance ``sigma_sq / 2``.  ``target_snr_db = inf`` returns the
    data unchanged with ``sigma_sq = 0``.
    """
    energy = float(np.sum(np.abs(y_clean.per_coil) ** 2))
    if energy == 0.0:
        raise InvalidInputError("cannot set SNR of all-zero measurements")
    if math.isinf(target_snr_db) and target_snr_db > 0:
        return KSpaceData(y_clean.per_coil.copy(), 0.0)
    sigma_sq = energy / (y_clean.total_samples * 10.0 ** (target_snr_db / 10.0))
    rng = np.random.default_rng(seed)
    shape = y_clean.per_coil.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    noise *= math.sqrt(sigma_sq / 2.0)
    return KSpaceData(y_clean.per_coil + noise, sigma_sq)
