"""Unrolled reconstruction: K stages of denoising + data consistency (DN)
followed by attention-guided ADMM refinement (PA), and the reconstruction
and mask loss functionals used to score results."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .field import fft2c, ifft2c
from .operators import CGParams
from .priors import AttentionProviderSpec, DenoiserSpec, EnhancerSpec, attention, denoise, enhance


@dataclass(frozen=True)
class ReconConfig:
    K: int = 3
    n_inner: int = 3
    mu1: float = 0.05
    mu2: float = 0.05
    rho: float = 0.1
    gamma: tuple[float, float, float] = (1.0, 1.0, 10.0)
    lam: float = 1.0
    cg: CGParams = CGParams()
    denoiser: DenoiserSpec = DenoiserSpec()
    enhancer: EnhancerSpec = EnhancerSpec()

    def __post_init__(self):
        if self.K < 1 or self.n_inner < 1:
            raise ValueError(f"K and n_inner must be >= 1, got K={self.K}, n_inner={self.n_inner}")
        if min(self.mu1, self.mu2, self.rho, self.lam, *self.gamma) < 0:
            raise ValueError("weights must be nonnegative")
        if self.mu2 > 0 and self.rho <= 0:
            raise ValueError("rho must be positive when mu2 > 0")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class StageDiagnostics:
    stage: int
    cg_iters: int
    residual: float
    primal_res: float
    dual_res: float
    data_fidelity: float

    FIELDS = ("stage", "cg_iters", "residual", "primal_res", "dual_res", "data_fidelity")

    def row(self):
        return {k: getattr(self, k) for k in self.FIELDS}


@dataclass
class ReconResult:
    x_final: np.ndarray
    x_global_final: np.ndarray
    map_final: np.ndarray
    per_stage: list = field(default_factory=list)


def dn_stage(x_prev, op, y, cfg, aty=None, info=None):
    """Denoise the previous estimate, then solve
    (A^H A + mu1 I) x = A^H y + mu1 * D(x_prev)."""
    r = denoise(cfg.denoiser, x_prev)
    aty = op.adjoint(y) if aty is None else aty
    res = op.solve(aty + cfg.mu1 * r, cfg.mu1, cfg.cg)
    if info is not None:
        info.update(cg_iters=res.iterations, residual=res.residual)
    return res.x


def pa_stage(x_global, attention_map, op, y, cfg, aty=None, info=None):
    """ADMM refinement guided by an attention map; returns the last X iterate.

    The denoiser in the X-update is evaluated at the previous inner iterate,
    which keeps the update a linear system solved by CG.
    """
    if cfg.mu2 > 0 and cfg.rho <= 0:
        raise ValueError("rho must be positive when mu2 > 0")
    aty = op.adjoint(y) if aty is None else aty
    x = np.asarray(x_global, dtype=np.complex128)
    z = x.copy()
    dual = np.zeros_like(x)
    shift = cfg.mu1 + cfg.rho
    iters, residual, primal, dual_res = 0, 0.0, 0.0, 0.0
    for _ in range(cfg.n_inner):
        rhs = aty + cfg.mu1 * denoise(cfg.denoiser, x) + cfg.rho * z - dual
        res = op.solve(rhs, shift, cfg.cg)
        x = res.x
        iters += res.iterations
        residual = max(residual, res.residual)
        u = enhance(cfg.enhancer, attention_map, x)
        z_new = (cfg.mu2 * u + cfg.rho * x + dual) / (cfg.rho + cfg.mu2)
        dual = dual + cfg.rho * (x - z_new)
        primal = float(np.linalg.norm(x - z_new))
        dual_res = float(cfg.rho * np.linalg.norm(z_new - z))
        z = z_new
    if info is not None:
        info.update(cg_iters=iters, residual=residual, primal_res=primal, dual_res=dual_res)
    return x


def reconstruct(y, op, cfg=ReconConfig(), provider=AttentionProviderSpec(), boxes=()):
    """Run the K-stage unrolled reconstructor from the zero-filled estimate."""
    aty = op.adjoint(y)
    x = aty
    per_stage = []
    x_global, amap = x, None
    for k in range(1, cfg.K + 1):
        dn_info, pa_info = {}, {}
        x_global = dn_stage(x, op, y, cfg, aty, dn_info)
        amap = attention(provider, x_global, boxes)
        x = pa_stage(x_global, amap, op, y, cfg, aty, pa_info)
        per_stage.append(
            StageDiagnostics(
                stage=k,
                cg_iters=dn_info["cg_iters"] + pa_info["cg_iters"],
                residual=max(dn_info["residual"], pa_info["residual"]),
                primal_res=pa_info["primal_res"],
                dual_res=pa_info["dual_res"],
                data_fidelity=float(np.linalg.norm(op.forward(x_global) - y)),
            )
        )
    return ReconResult(x, x_global, amap, per_stage)


def _sq(a):
    return float(np.sum(np.abs(a) ** 2))


def recon_loss(x_k, x_global_k, gt, attention_map, gamma):
    """gamma1 ||xg - gt||^2 + gamma2 ||x - gt||^2 + gamma3 ||map * (x - gt)||^2."""
    g1, g2, g3 = gamma
    err = np.asarray(x_k) - gt
    return g1 * _sq(np.asarray(x_global_k) - gt) + g2 * _sq(err) + g3 * _sq(np.asarray(attention_map) * err)


def mask_loss(x_k, gt, attention_map, mask_high, lam):
    """||x - gt||^2 + lam ||map * (F^H M2 F x - F^H M2 F gt)||^2.

    ``mask_high`` is a :class:`SamplingMask` (its high part is used) or an
    array of M2 weights.
    """
    m2 = mask_high.high_weights if hasattr(mask_high, "high_weights") else np.asarray(mask_high, dtype=float)
    err = np.asarray(x_k) - gt
    loss = _sq(err)
    if lam:
        # the transform is linear, so the difference of projections is the projected error
        loss += lam * _sq(np.asarray(attention_map) * ifft2c(m2 * fft2c(err)))
    return loss
