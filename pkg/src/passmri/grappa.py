"""GRAPPA baseline for equispaced line undersampling.

k-space arrays are ``(coils, readout rows, phase-encode columns)``. A kernel
of size ``(kr, kc)`` uses ``kr`` readout taps on each of ``kc`` acquired
source lines spaced R apart, nearest to the missing target line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ifft2c
from .sampling import LINES


class GrappaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrappaKernel:
    kernel_rows: int
    kernel_cols: int
    R: int
    weights: np.ndarray  # (R - 1, n_coils, n_coils * kernel_rows * kernel_cols)

    def __post_init__(self):
        if int(self.R) != self.R or self.R < 2:
            raise GrappaError(f"GRAPPA needs an integer R >= 2, got {self.R}")
        if not np.all(np.isfinite(self.weights)):
            raise GrappaError("kernel weights are not finite")

    @property
    def n_coils(self):
        return self.weights.shape[1]


def _row_taps(kr):
    return np.arange(kr) - kr // 2


def _col_taps(kc):
    return np.arange(kc) - (kc - 1) // 2


def _gather(k, rows, j0s, R, kr, kc):
    """Source features for lattice anchors ``j0s``: returns (n_eq, C*kr*kc)."""
    dr = _row_taps(kr)
    t = _col_taps(kc)
    r_idx = rows[:, None, None, None] + dr[None, :, None, None]
    c_idx = j0s[None, None, :, None] + R * t[None, None, None, :]
    r_idx, c_idx = np.broadcast_arrays(r_idx, c_idx)
    src = k[:, r_idx, c_idx]  # (C, nr, kr, nj, kc)
    src = np.transpose(src, (1, 3, 0, 2, 4))  # (nr, nj, C, kr, kc)
    return src.reshape(len(rows) * len(j0s), -1)


def _damped_solve(A, B, damping, refine):
    gram = A.conj().T @ A
    rhs = A.conj().T @ B
    lam = damping * np.trace(gram).real / gram.shape[0]
    reg = gram + lam * np.eye(gram.shape[0])
    w = np.linalg.solve(reg, rhs)
    # iterated Tikhonov: removes the damping bias along well-conditioned directions
    for _ in range(refine):
        w = w + np.linalg.solve(reg, rhs - gram @ w)
    return w


def grappa_calibrate(acs, R, kernel_size=(5, 5), source_phase=None, damping=1e-6, refine=2):
    """Fit interpolation weights on a fully sampled ACS block ``(C, H, n)``.

    Every in-block position is used as a target unless ``source_phase`` is
    given, in which case only anchors with ``j0 % R == source_phase`` (in
    block coordinates) are used.
    """
    acs = np.asarray(acs, dtype=np.complex128)
    if acs.ndim != 3:
        raise GrappaError(f"ACS block must be (coils, rows, cols), got {acs.shape}")
    R = int(R)
    if R < 2:
        raise GrappaError(f"GRAPPA needs R >= 2, got {R}")
    kr, kc = kernel_size
    n_coils, h, n = acs.shape
    dr, t = _row_taps(kr), _col_taps(kc)
    rows = np.arange(-dr[0], h - dr[-1])
    n_unknown = n_coils * kr * kc
    weights = np.empty((R - 1, n_coils, n_unknown), dtype=np.complex128)
    for m in range(1, R):
        j0s = np.arange(-R * t[0], n - R * t[-1])
        j0s = j0s[j0s + m < n]
        if source_phase is not None:
            j0s = j0s[j0s % R == source_phase % R]
        n_eq = len(rows) * len(j0s)
        if n_eq < n_unknown:
            raise GrappaError(
                f"underdetermined calibration for offset {m}: {n_eq} equations for {n_unknown} unknowns "
                f"(ACS {h}x{n}, kernel {kr}x{kc}, R={R})"
            )
        A = _gather(acs, rows, j0s, R, kr, kc)
        B = acs[:, rows[:, None], (j0s + m)[None, :]].transpose(1, 2, 0).reshape(n_eq, n_coils)
        weights[m - 1] = _damped_solve(A, B, damping, refine).T
    return GrappaKernel(kr, kc, R, weights)


def lattice_phase(mask, R):
    """Phase of the equispaced lattice in ``mask``; raises if the mask is not
    exactly 'every R-th line plus ACS'."""
    if mask.mode != LINES:
        raise GrappaError("GRAPPA supports lines1d masks only")
    if mask.relaxed is not None:
        raise GrappaError("GRAPPA needs a binary mask")
    w = mask.shape[1]
    acs = set(mask.acs_units.tolist())
    high = mask.high_units
    if len(high) == 0:
        raise GrappaError("mask has no lattice lines outside the ACS block")
    phase = int(high[0] % R)
    lattice = set(range(phase, w, R))
    if set(high.tolist()) != lattice - acs:
        raise GrappaError(
            f"mask is not equispaced with R={R}: GRAPPA assumes shift invariance, random patterns are unsupported"
        )
    return phase


def grappa_fill(y, mask, kernel):
    """Synthesize missing lines; acquired entries are copied unchanged."""
    y = np.asarray(y, dtype=np.complex128)
    R = kernel.R
    phase = lattice_phase(mask, R)
    n_coils, h, w = y.shape
    if n_coils != kernel.n_coils:
        raise GrappaError(f"kernel expects {kernel.n_coils} coils, data has {n_coils}")
    kr, kc = kernel.kernel_rows, kernel.kernel_cols
    dr, t = _row_taps(kr), _col_taps(kc)
    pr = int(max(-dr[0], dr[-1]))
    pc = int(R * max(-t[0], t[-1]) + R)
    # zero-fill everything except lattice lines so sources never read ACS-only lines
    src = np.zeros((n_coils, h + 2 * pr, w + 2 * pc), dtype=np.complex128)
    lat = np.arange(phase, w, R)
    src[:, pr : pr + h, lat + pc] = y[:, :, lat]
    out = y.copy()
    sampled = mask.binary[0]
    missing = np.flatnonzero(~sampled)
    rows = np.arange(h) + pr
    for m in range(1, R):
        js = missing[(missing - phase) % R == m]
        if len(js) == 0:
            continue
        feats = _gather(src, rows, js - m + pc, R, kr, kc)  # (h * nj, n_unk)
        vals = feats @ kernel.weights[m - 1].T  # (h * nj, C)
        out[:, :, js] = vals.reshape(h, len(js), n_coils).transpose(2, 0, 1)
    return out


def sos(coil_images):
    return np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=0))


def grappa_reconstruct(y, mask, kernel=None, kernel_size=(5, 5), R=None):
    """Fill missing lines and combine coils by root-sum-of-squares.

    With ``kernel=None`` the kernel is calibrated on the ACS lines of ``y``.
    Returns a real, nonnegative magnitude image.
    """
    y = np.asarray(y, dtype=np.complex128)
    if mask.binary.all():
        return sos(ifft2c(y))
    if kernel is None:
        if R is None:
            raise GrappaError("either a kernel or R is required")
        lattice_phase(mask, R)
        acs_cols = mask.acs_units
        if len(acs_cols) == 0 or np.any(np.diff(acs_cols) != 1):
            raise GrappaError("calibration needs a contiguous ACS block")
        kernel = grappa_calibrate(y[:, :, acs_cols], R, kernel_size)
    return sos(ifft2c(grappa_fill(y, mask, kernel)))
