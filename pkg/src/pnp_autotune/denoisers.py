"""Denoisers that can be plugged into the PnP iterations.

Any callable mapping a complex image to a complex image of the same shape
works as a denoiser; the classes here add a ``descriptor`` for logging and
configuration.  Real-valued denoisers act on the real and imaginary parts
independently.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .errors import InvalidInputError
from .forward_model import fft2c, ifft2c

__all__ = [
    "Denoiser",
    "IdentityDenoiser",
    "LinearDiagonalDenoiser",
    "WaveletSoftThresholdDenoiser",
    "haar2",
    "ihaar2",
    "soft_threshold",
    "make_denoiser",
]


@runtime_checkable
class Denoiser(Protocol):
    descriptor: str

    def __call__(self, s: np.ndarray) -> np.ndarray: ...


class IdentityDenoiser:
    """``f(s) = s``; reduces PnP-PDS to a least-squares iteration."""

    descriptor = "identity"

    def __call__(self, s):
        return np.array(s, dtype=np.complex128, copy=True)


class LinearDiagonalDenoiser:
    """Linear shift-invariant filter ``F^H diag(g) F`` with gains in (0, 1].

    Parameters
    ----------
    gains : array_like, shape (height, width)
        One real gain per (centred) DFT frequency.
    """

    def __init__(self, gains):
        gains = np.asarray(gains, dtype=np.float64)
        if gains.ndim != 2:
            raise InvalidInputError("gains must be a 2-D array")
        if np.any(gains <= 0) or np.any(gains > 1) or not np.all(np.isfinite(gains)):
            raise InvalidInputError("gains must lie in (0, 1]")
        self.gains = gains
        self.gains.setflags(write=False)

    @property
    def descriptor(self):
        g = self.gains
        return f"linear-diagonal(shape={g.shape}, min={g.min():.4g}, max={g.max():.4g})"

    @classmethod
    def lowpass(cls, height, width, cutoff=0.25, floor=0.05):
        """Gaussian low-pass gains, 1 at DC decaying to ``floor``."""
        ky = (np.arange(height) - height // 2) / height
        kx = (np.arange(width) - width // 2) / width
        r2 = ky[:, None] ** 2 + kx[None, :] ** 2
        return cls(floor + (1.0 - floor) * np.exp(-r2 / (2 * cutoff**2)))

    def __call__(self, s):
        s = np.asarray(s)
        if s.shape != self.gains.shape:
            raise InvalidInputError(
                f"image shape {s.shape} does not match gains {self.gains.shape}"
            )
        return ifft2c(self.gains * fft2c(s))

    def to_dense(self):
        """Dense ``N x N`` matrix of the filter (row-major vectorisation)."""
        h, w = self.gains.shape
        eye = np.eye(h * w, dtype=np.complex128).reshape(h * w, h, w)
        return np.stack([self(e).ravel() for e in eye], axis=1)


def _haar_step(a, axis):
    even = np.take(a, np.arange(0, a.shape[axis], 2), axis=axis)
    odd = np.take(a, np.arange(1, a.shape[axis], 2), axis=axis)
    return (even + odd) / np.sqrt(2.0), (even - odd) / np.sqrt(2.0)


def _haar_unstep(lo, hi, axis):
    even = (lo + hi) / np.sqrt(2.0)
    odd = (lo - hi) / np.sqrt(2.0)
    shape = list(lo.shape)
    shape[axis] *= 2
    out = np.empty(shape, dtype=np.result_type(lo, hi))
    sl_even = [slice(None)] * lo.ndim
    sl_odd = [slice(None)] * lo.ndim
    sl_even[axis] = slice(0, None, 2)
    sl_odd[axis] = slice(1, None, 2)
    out[tuple(sl_even)] = even
    out[tuple(sl_odd)] = odd
    return out


def _check_levels(shape, levels):
    if levels < 1:
        raise InvalidInputError("levels must be >= 1")
    block = 2**levels
    if shape[0] % block or shape[1] % block:
        raise InvalidInputError(
            f"image shape {shape} not divisible by 2**levels = {block}"
        )


def haar2(x, levels):
    """Orthonormal multi-level 2-D Haar transform, in-place (Mallat) layout.

    At each level the current low-pass block in the top-left corner is split
    into four quadrants: LL (top-left), LH, HL and HH.
    """
    x = np.asarray(x)
    _check_levels(x.shape, levels)
    out = np.array(x, dtype=np.result_type(x, np.float64), copy=True)
    h, w = x.shape
    for _ in range(levels):
        block = out[:h, :w]
        lo, hi = _haar_step(block, 0)
        ll, lh = _haar_step(lo, 1)
        hl, hh = _haar_step(hi, 1)
        out[: h // 2, : w // 2] = ll
        out[: h // 2, w // 2 : w] = lh
        out[h // 2 : h, : w // 2] = hl
        out[h // 2 : h, w // 2 : w] = hh
        h, w = h // 2, w // 2
    return out


def ihaar2(c, levels):
    """Inverse of :func:`haar2`."""
    c = np.asarray(c)
    _check_levels(c.shape, levels)
    out = np.array(c, copy=True)
    H, W = c.shape
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        ll = out[: h // 2, : w // 2]
        lh = out[: h // 2, w // 2 : w]
        hl = out[h // 2 : h, : w // 2]
        hh = out[h // 2 : h, w // 2 : w]
        lo = _haar_unstep(ll, lh, 1)
        hi = _haar_unstep(hl, hh, 1)
        out[:h, :w] = _haar_unstep(lo, hi, 0)
    return out


def soft_threshold(c, tau):
    """Real soft-thresholding ``sign(c) * max(|c| - tau, 0)``."""
    return np.sign(c) * np.maximum(np.abs(c) - tau, 0.0)


class WaveletSoftThresholdDenoiser:
    """Soft thresholding in an orthonormal Haar basis.

    This is exactly ``prox`` of ``tau * ||W x||_1`` for real ``x``; complex
    inputs are handled part-wise.  With ``threshold_coarse=False`` the
    coarsest approximation band passes through untouched, which is the prox
    of the seminorm that only penalises detail coefficients.
    """

    def __init__(self, threshold, levels=3, threshold_coarse=True):
        if not threshold >= 0:
            raise InvalidInputError("threshold must be non-negative")
        if levels < 1:
            raise InvalidInputError("levels must be >= 1")
        self.threshold = float(threshold)
        self.levels = int(levels)
        self.threshold_coarse = bool(threshold_coarse)

    @property
    def descriptor(self):
        return (
            f"wavelet-soft-threshold(threshold={self.threshold:g}, levels={self.levels}, "
            f"threshold_coarse={self.threshold_coarse})"
        )

    def _denoise_real(self, part):
        coeffs = haar2(part, self.levels)
        shrunk = soft_threshold(coeffs, self.threshold)
        if not self.threshold_coarse:
            h, w = part.shape[0] >> self.levels, part.shape[1] >> self.levels
            shrunk[:h, :w] = coeffs[:h, :w]
        return ihaar2(shrunk, self.levels)

    def __call__(self, s):
        s = np.asarray(s)
        _check_levels(s.shape, self.levels)
        return self._denoise_real(s.real) + 1j * self._denoise_real(s.imag)


def make_denoiser(name, params=None, shape=None):
    """Build a denoiser from a config-file style ``(name, params)`` pair."""
    params = dict(params or {})
    if name == "identity":
        return IdentityDenoiser()
    if name == "wavelet":
        return WaveletSoftThresholdDenoiser(
            params.get("threshold", 0.03),
            params.get("levels", 3),
            params.get("threshold_coarse", True),
        )
    if name == "linear-lowpass":
        if shape is None:
            raise InvalidInputError("linear-lowpass denoiser needs the image shape")
        return LinearDiagonalDenoiser.lowpass(
            shape[0], shape[1], params.get("cutoff", 0.25), params.get("floor", 0.05)
        )
    raise InvalidInputError(f"unknown denoiser {name!r}")
