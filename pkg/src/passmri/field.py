"""Centered, orthonormal 2D Fourier transforms.

DC sits at index ``(h // 2, w // 2)``. Both directions use 1/sqrt(N)
scaling, so ``ifft2c`` is the exact adjoint of ``fft2c``. All functions act
on the last two axes, so stacks of coil images are transformed in one call.
"""

import numpy as np
import scipy.fft as sfft

AXES = (-2, -1)


def check_image(x, name="image"):
    """Validate a 2D (or stacked) field and return it as a complex array."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"{name} must be at least 2D, got shape {x.shape}")
    if x.shape[-2] < 2 or x.shape[-1] < 2:
        raise ValueError(f"{name} needs height, width >= 2, got {x.shape[-2:]}")
    return x.astype(np.complex128, copy=False)


def fft2c(img):
    """Image -> k-space, DC at the grid center."""
    img = check_image(img)
    k = sfft.fft2(sfft.ifftshift(img, axes=AXES), axes=AXES, norm="ortho")
    return sfft.fftshift(k, axes=AXES)


def ifft2c(k):
    """k-space -> image; inverse and adjoint of :func:`fft2c`."""
    k = check_image(k, "k-space")
    img = sfft.ifft2(sfft.ifftshift(k, axes=AXES), axes=AXES, norm="ortho")
    return sfft.fftshift(img, axes=AXES)


def inner(a, b):
    """Complex inner product <a, b> = sum(conj(a) * b)."""
    return np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel())
