"""Global and lesion-focused image quality metrics on magnitude images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

PSNR_CAP = 300.0


def _mag(x):
    return np.abs(np.asarray(x))


def psnr(x, ref, data_range=None):
    """10 log10(L^2 / MSE) on magnitudes, L = max |ref| unless given.
    A perfect match reports the 300 dB cap."""
    a, b = _mag(x), _mag(ref)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    L = b.max() if data_range is None else data_range
    if L == 0:
        raise ValueError("reference image is identically zero")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(L**2 / mse))


def _gauss_kernel(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    return k / k.sum()


def ssim(x, ref, data_range=None, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM with a separable Gaussian window; the border where the
    window does not fit is excluded from the mean."""
    a, b = _mag(x), _mag(ref)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < win_size:
        raise ValueError(f"image {a.shape} is smaller than the {win_size}x{win_size} SSIM window; use lf_metrics for small regions")
    L = b.max() if data_range is None else data_range
    kern = _gauss_kernel(win_size, sigma)

    def filt(img):
        out = ndimage.correlate1d(img, kern, axis=0, mode="reflect")
        return ndimage.correlate1d(out, kern, axis=1, mode="reflect")

    ux, uy = filt(a), filt(b)
    vx = filt(a * a) - ux * ux
    vy = filt(b * b) - uy * uy
    vxy = filt(a * b) - ux * uy
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    pad = (win_size - 1) // 2
    return float(s[pad : s.shape[0] - pad, pad : s.shape[1] - pad].mean())


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    lf_psnr_db: float | None = None
    lf_ssim: float | None = None
    per_box: list = field(default_factory=list)


def lf_metrics(x, ref, boxes):
    """PSNR/SSIM inside each lesion box, averaged over boxes.

    The dynamic range comes from the whole reference. The SSIM window is
    clipped to the box (largest odd size <= min(11, side)). Boxes smaller
    than 3x3 are skipped and recorded with ``skipped`` set.
    Returns ``(lf_psnr, lf_ssim, per_box)``.
    """
    if not boxes:
        raise ValueError("lf_metrics needs at least one box")
    a, b = np.asarray(x), np.asarray(ref)
    L = float(_mag(b).max())
    per_box, ps, ss = [], [], []
    for box in boxes:
        side = min(box.shape)
        if side < 3:
            per_box.append({"label": box.label, "psnr": None, "ssim": None, "skipped": f"box {box.shape} smaller than 3x3"})
            continue
        win = min(11, side)
        win -= 1 - win % 2
        rs, cs = box.slices
        p = psnr(a[rs, cs], b[rs, cs], L)
        s = ssim(a[rs, cs], b[rs, cs], L, win_size=win)
        per_box.append({"label": box.label, "psnr": p, "ssim": s, "skipped": None})
        ps.append(p)
        ss.append(s)
    if not ps:
        return None, None, per_box
    return float(np.mean(ps)), float(np.mean(ss)), per_box


def evaluate(x, ref, boxes=()):
    report = MetricReport(psnr(x, ref), ssim(x, ref))
    if boxes:
        report.lf_psnr_db, report.lf_ssim, report.per_box = lf_metrics(x, ref, boxes)
    return report
