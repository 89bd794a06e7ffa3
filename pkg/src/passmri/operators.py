"""Multi-coil Cartesian encoding operator A = M F S and a conjugate-gradient
solver for the regularized normal equations (A^H A + c I) x = b."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.fft as sfft

from .field import AXES, check_image


class NumericalError(RuntimeError):
    """Raised when an iterative solver produces non-finite values."""


@dataclass(frozen=True)
class CGParams:
    tol: float = 1e-6
    max_iter: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"CG tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"CG max_iter must be >= 1, got {self.max_iter}")


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: tuple = ()


def cg_solve(apply_normal: Callable, rhs, params: CGParams = CGParams()) -> CGResult:
    """Conjugate gradients from a zero initial guess.

    ``apply_normal`` must be Hermitian positive definite. Stops when the
    relative residual drops to ``params.tol``; otherwise returns the iterate
    with the smallest residual seen. ``history`` holds the best relative
    residual after each iteration (nonincreasing by construction).
    """
    b = np.asarray(rhs, dtype=np.complex128)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CGResult(np.zeros_like(b), 0, 0.0, True, ())
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    best_x, best_res = x, 1.0
    history = []
    for it in range(1, params.max_iter + 1):
        ap = apply_normal(p)
        pap = np.vdot(p, ap).real
        if not np.isfinite(pap):
            raise NumericalError(f"non-finite curvature at CG iteration {it}")
        if pap <= 0:
            # breakdown: operator not positive definite on the Krylov space
            break
        alpha = rr / pap
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = np.vdot(r, r).real
        if not np.isfinite(rr_new):
            raise NumericalError(f"non-finite residual at CG iteration {it}")
        res = math.sqrt(rr_new) / bnorm
        if res < best_res:
            best_x, best_res = x, res
        history.append(best_res)
        if res <= params.tol:
            return CGResult(x, it, res, True, tuple(history))
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(best_x, len(history), best_res, best_res <= params.tol, tuple(history))


@dataclass(frozen=True, eq=False)
class EncodingOperator:
    """A = M F S for a given mask and coil sensitivity stack ``(C, H, W)``.

    Internally the coil maps and the mask are pre-shifted so the normal
    operator runs without fftshift calls. For line masks the 2D transform
    collapses to 1D transforms along the phase-encode axis in A^H A.
    """

    mask: object
    coils: np.ndarray
    _s: np.ndarray = field(init=False, repr=False)
    _m: np.ndarray = field(init=False, repr=False)
    _m2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coils = check_image(self.coils, "coil maps")
        if coils.ndim == 2:
            coils = coils[None]
        if coils.shape[-2:] != self.mask.shape:
            raise ValueError(f"mask shape {self.mask.shape} does not match coil maps {coils.shape[-2:]}")
        object.__setattr__(self, "coils", coils)
        object.__setattr__(self, "_s", sfft.ifftshift(coils, axes=AXES))
        object.__setattr__(self, "_m", sfft.ifftshift(self.mask.weights, axes=AXES))
        object.__setattr__(self, "_m2", self._m**2)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def n_coils(self):
        return self.coils.shape[0]

    def with_mask(self, mask):
        """Same coils, new mask (reuses the shifted coil maps)."""
        op = object.__new__(EncodingOperator)
        object.__setattr__(op, "mask", mask)
        object.__setattr__(op, "coils", self.coils)
        object.__setattr__(op, "_s", self._s)
        if mask.shape != self.shape:
            raise ValueError(f"mask shape {mask.shape} does not match operator {self.shape}")
        object.__setattr__(op, "_m", sfft.ifftshift(mask.weights, axes=AXES))
        object.__setattr__(op, "_m2", op._m**2)
        return op

    def _check(self, x, lead=()):
        x = check_image(x)
        if x.shape != (*lead, *self.shape):
            raise ValueError(f"expected shape {(*lead, *self.shape)}, got {x.shape}")
        return x

    def forward(self, x):
        """Image (H, W) -> masked multi-coil k-space (C, H, W)."""
        x = self._check(x)
        xs = sfft.ifftshift(x, axes=AXES)
        k = self._m * sfft.fft2(self._s * xs, axes=AXES, norm="ortho")
        return sfft.fftshift(k, axes=AXES)

    def adjoint(self, y):
        """Multi-coil k-space (C, H, W) -> image (H, W)."""
        y = self._check(y, (self.n_coils,))
        ys = sfft.ifftshift(y, axes=AXES)
        img = np.sum(np.conj(self._s) * sfft.ifft2(self._m * ys, axes=AXES, norm="ortho"), axis=0)
        return sfft.fftshift(img, axes=AXES)

    def normal(self, x, shift=0.0):
        """(A^H A + shift I) x."""
        xs = sfft.ifftshift(x, axes=AXES)
        cx = self._s * xs
        if self.mask.is_column_separable():
            m2 = self._m2[0]
            back = sfft.ifft(m2 * sfft.fft(cx, axis=-1, norm="ortho"), axis=-1, norm="ortho")
        else:
            back = sfft.ifft2(self._m2 * sfft.fft2(cx, axes=AXES, norm="ortho"), axes=AXES, norm="ortho")
        out = np.sum(np.conj(self._s) * back, axis=0)
        if shift:
            out = out + shift * xs
        return sfft.fftshift(out, axes=AXES)

    def solve(self, rhs, shift, params=CGParams()):
        """CG solve of (A^H A + shift I) x = rhs."""
        return cg_solve(lambda v: self.normal(v, shift), rhs, params)


def forward(op, x):
    return op.forward(x)


def adjoint(op, y):
    return op.adjoint(y)
