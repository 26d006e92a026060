"""Reconstruction quality measures."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidInputError
from .forward_model import ForwardOperator, KSpaceData

__all__ = [
    "RSNR_EXACT",
    "QualityReport",
    "rsnr_db",
    "ssim",
    "gaussian_window",
    "residual_sq",
    "discrepancy_ratio",
    "quality_report",
]

#: Returned by :func:`rsnr_db` when the reconstruction is exact.
RSNR_EXACT = math.inf


def rsnr_db(x_true, x_hat):
    """Recovery SNR ``10 log10(||x||^2 / ||x_hat - x||^2)`` in dB.

    Returns :data:`RSNR_EXACT` (``+inf``) for an exact reconstruction.
    """
    x_true = np.asarray(x_true)
    x_hat = np.asarray(x_hat)
    if x_true.shape != x_hat.shape:
        raise InvalidInputError(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    signal = float(np.vdot(x_true, x_true).real)
    if signal == 0.0:
        raise InvalidInputError("rSNR undefined for an all-zero reference")
    diff = x_hat - x_true
    err = float(np.vdot(diff, diff).real)
    if err == 0.0:
        return RSNR_EXACT
    return 10.0 * math.log10(signal / err)


def gaussian_window(size=11, sigma=1.5):
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t**2) / (2.0 * sigma**2))
    return g / g.sum()


def _valid_filter(img, taps):
    # separable correlation, keep only positions where the window fits
    half = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim(x_true_mag, x_hat_mag, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM between two real images using a Gaussian window.

    Local statistics are Gaussian-weighted population moments over every
    ``win_size x win_size`` window fully inside the image.  The dynamic range
    is the maximum of the reference image (1 if that maximum is not positive).
    """
    a = np.asarray(x_true_mag, dtype=np.float64)
    b = np.asarray(x_hat_mag, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidInputError(f"need two 2-D images of equal shape, got {a.shape}, {b.shape}")
    if min(a.shape) < win_size:
        raise InvalidInputError(f"images smaller than the {win_size}x{win_size} window")
    data_range = float(a.max())
    if data_range <= 0.0:
        data_range = 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    taps = gaussian_window(win_size, sigma)
    mu_a = _valid_filter(a, taps)
    mu_b = _valid_filter(b, taps)
    var_a = _valid_filter(a * a, taps) - mu_a**2
    var_b = _valid_filter(b * b, taps) - mu_b**2
    cov = _valid_filter(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.clip(np.mean(num / den), -1.0, 1.0))


def residual_sq(y: KSpaceData, op: ForwardOperator, x) -> float:
    r = y.per_coil - op.forward(x)
    return float(np.vdot(r, r).real)


def discrepancy_ratio(y: KSpaceData, op: ForwardOperator, x, beta=0.95) -> float:
    """``||y - A x||^2 / (beta * C * M * sigma^2)``."""
    if y.sigma_sq <= 0:
        raise InvalidInputError("discrepancy ratio needs a positive noise variance")
    return residual_sq(y, op, x) / (beta * y.total_samples * y.sigma_sq)


@dataclass(frozen=True)
class QualityReport:
    rsnr_db: float
    ssim: float
    residual_sq: float
    discrepancy_ratio: float

    def as_dict(self):
        return asdict(self)


def quality_report(x_true, x_hat, y, op, beta=0.95):
    res = residual_sq(y, op, x_hat)
    ratio = (
        res / (beta * y.total_samples * y.sigma_sq) if y.sigma_sq > 0 else math.nan
    )
    return QualityReport(
        rsnr_db=rsnr_db(x_true, x_hat),
        ssim=ssim(np.abs(x_true), np.abs(x_hat)),
        residual_sq=res,
        discrepancy_ratio=ratio,
    )
