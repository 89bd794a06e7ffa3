"""Classical stand-ins for the learned components of the reconstructor:
image denoisers, attention-map providers and an attention-gated enhancer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import ndimage


@dataclass(frozen=True)
class DenoiserSpec:
    kind: str = "tv_prox"
    sigma: float = 1.0
    weight: float = 0.05
    inner_iters: int = 20
    tau: float = 0.01

    KINDS = ("identity", "gaussian_blur", "tv_prox", "dct_soft_threshold")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown denoiser {self.kind!r}")
        if min(self.sigma, self.weight, self.tau) < 0:
            raise ValueError("denoiser parameters must be nonnegative")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")


@dataclass(frozen=True)
class AttentionProviderSpec:
    kind: str = "zero"
    feather_px: float = 0.0
    centers: tuple = ()
    sigma: float = 3.0
    path: str | None = None

    KINDS = ("zero", "boxes", "gaussian_blobs", "from_file")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown attention provider {self.kind!r}")
        if self.feather_px < 0:
            raise ValueError("feather_px must be >= 0")
        if self.kind == "from_file" and not self.path:
            raise ValueError("from_file provider needs a path")


@dataclass(frozen=True)
class EnhancerSpec:
    alpha: float = 0.5
    sigma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.sigma <= 0:
            raise ValueError(f"invalid enhancer alpha={self.alpha}, sigma={self.sigma}")


def _per_channel(fn, x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return fn(x.real) + 1j * fn(x.imag)
    return fn(x).astype(np.complex128)


def gaussian_blur(x, sigma):
    if sigma == 0:
        return np.asarray(x, dtype=np.complex128).copy()
    return _per_channel(lambda a: ndimage.gaussian_filter(a, sigma, mode="reflect"), x)


def _grad(u):
    # forward differences over the last two axes, zero at the far edge
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    gy[..., :-1] = u[..., 1:] - u[..., :-1]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad (Neumann boundary)
    d = np.empty_like(px)
    d[..., 0, :] = px[..., 0, :]
    d[..., 1:-1, :] = px[..., 1:-1, :] - px[..., :-2, :]
    d[..., -1, :] = -px[..., -2, :]
    d[..., 0] += py[..., 0]
    d[..., 1:-1] += py[..., 1:-1] - py[..., :-2]
    d[..., -1] -= py[..., -2]
    return d


def total_variation(u):
    """Isotropic TV of a real or complex image (channels summed)."""
    u = np.asarray(u)
    if np.iscomplexobj(u):
        return total_variation(u.real) + total_variation(u.imag)
    gx, gy = _grad(u)
    return float(np.sum(np.sqrt(gx**2 + gy**2)))


def tv_prox_real(f, weight, n_iter, step=0.125):
    """Chambolle's dual projection for argmin_u 0.5||u - f||^2 + weight * TV(u).

    Leading axes of ``f`` are treated as independent channels.
    """
    if weight == 0:
        return f.copy()
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    for _ in range(n_iter):
        gx, gy = _grad(_div(px, py) - f / weight)
        norm = 1.0 + step * np.sqrt(gx**2 + gy**2)
        px = (px + step * gx) / norm
        py = (py + step * gy) / norm
    return f - weight * _div(px, py)


def dct_soft_threshold_real(f, tau):
    c = sfft.dctn(f, type=2, norm="ortho")
    dc = c[0, 0]
    c = np.sign(c) * np.maximum(np.abs(c) - tau, 0.0)
    c[0, 0] = dc
    return sfft.idctn(c, type=2, norm="ortho")


def denoise(spec, x):
    """Apply the configured denoiser to a complex image."""
    if spec.kind == "identity":
        return np.asarray(x)
    if spec.kind == "gaussian_blur":
        return gaussian_blur(x, spec.sigma)
    if spec.kind == "tv_prox":
        x = np.asarray(x, dtype=np.complex128)
        out = tv_prox_real(np.stack([x.real, x.imag]), spec.weight, spec.inner_iters)
        return out[0] + 1j * out[1]
    return _per_channel(lambda a: dct_soft_threshold_real(a, spec.tau), x)


def _box_distance(shape, box):
    rows = np.arange(shape[0])[:, None]
    cols = np.arange(shape[1])[None, :]
    dr = np.maximum(np.maximum(box.row_min - rows, rows - box.row_max), 0)
    dc = np.maximum(np.maximum(box.col_min - cols, cols - box.col_max), 0)
    return np.sqrt(dr**2 + dc**2)


def box_attention(shape, boxes, feather_px=0.0):
    """1 inside each box, a cosine ramp reaching 0 at ``feather_px`` outside,
    pointwise max over boxes."""
    out = np.zeros(shape)
    for box in boxes:
        d = _box_distance(shape, box)
        if feather_px > 0:
            w = np.where(d < feather_px, 0.5 * (1.0 + np.cos(np.pi * np.minimum(d, feather_px) / feather_px)), 0.0)
        else:
            w = (d == 0).astype(float)
        np.maximum(out, w, out=out)
    return out


def attention(spec, x_global, boxes=()):
    """Attention map in [0, 1] with the image's shape.

    ``x_global`` is only consulted for its shape; the classical providers are
    driven by annotations or fixed blob positions.
    """
    shape = np.shape(x_global)[-2:]
    if spec.kind == "zero":
        return np.zeros(shape)
    if spec.kind == "boxes":
        return box_attention(shape, boxes, spec.feather_px)
    if spec.kind == "gaussian_blobs":
        rows, cols = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        out = np.zeros(shape)
        for r0, c0 in spec.centers:
            np.maximum(out, np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2.0 * spec.sigma**2)), out=out)
        return out
    from .io import read_array

    arr = np.real(read_array(spec.path))
    if arr.shape != tuple(shape):
        raise ValueError(f"attention map {spec.path} has shape {arr.shape}, expected {tuple(shape)}")
    return np.clip(arr, 0.0, 1.0)


def enhance(spec, attention_map, x):
    """Attention-gated high-boost sharpening:
    ``x + map * alpha * (x - blur(x))``."""
    x = np.asarray(x)
    attention_map = np.asarray(attention_map, dtype=float)
    if attention_map.shape != x.shape:
        raise ValueError(f"attention map shape {attention_map.shape} does not match image {x.shape}")
    if spec.alpha == 0 or not attention_map.any():
        return x.copy()
    detail = x - gaussian_blur(x, spec.sigma)
    return x + attention_map * (spec.alpha * detail)
