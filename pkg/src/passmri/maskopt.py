"""Sampling-mask optimization.

Stage 1 learns one mask for a population of subjects (anomaly-agnostic,
lam = 0). Stage 2 personalizes the high-frequency part for one subject using
its attention map (lam > 0). Optimizers: greedy forward selection, swap
(exchange) local search, and finite-difference descent on relaxed masks.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .operators import EncodingOperator
from .priors import AttentionProviderSpec, attention
from .recon import ReconConfig, mask_loss, reconstruct
from .sampling import MaskBudget, binarize_topk, renormalize_probs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Subject:
    gt: np.ndarray
    coils: np.ndarray
    boxes: tuple = ()


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "greedy"
    max_sweeps: int = 2
    neighborhood: int = 0
    step: float = 0.5
    epsilon: float = 1e-2
    iters: int = 30
    seed: int = 0

    KINDS = ("greedy", "exchange", "relaxed_fd")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.step <= 0 or self.epsilon <= 0:
            raise ValueError("step and epsilon must be positive")


class MaskObjective:
    """Mean normalized mask loss over subjects for a candidate mask.

    For each subject the data ``y = A_M gt`` are simulated, reconstructed
    with the fixed ``cfg`` and scored with :func:`mask_loss` divided by
    ``||gt||^2``. ``loss_maps`` pins the attention map used in the loss per
    subject; by default the reconstructor's final-stage map is used.
    Results are cached per mask.
    """

    def __init__(self, subjects, cfg=ReconConfig(), provider=AttentionProviderSpec(), lam=0.0, loss_maps=None):
        self.subjects = list(subjects)
        if not self.subjects:
            raise ValueError("objective needs at least one subject")
        self.cfg = cfg
        self.provider = provider
        self.lam = lam
        self.loss_maps = loss_maps
        self._ops = {}
        self._cache = {}
        self.evaluations = 0
        self.trace = []

    def _op(self, i, mask):
        base = self._ops.get(i)
        if base is None:
            base = self._ops[i] = EncodingOperator(mask, self.subjects[i].coils)
            return base
        return base.with_mask(mask)

    def __call__(self, mask):
        key = mask.key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        total = 0.0
        for i, s in enumerate(self.subjects):
            op = self._op(i, mask)
            res = reconstruct(op.forward(s.gt), op, self.cfg, self.provider, s.boxes)
            amap = res.map_final if self.loss_maps is None else self.loss_maps[i]
            total += mask_loss(res.x_final, s.gt, amap, mask, self.lam) / np.sum(np.abs(s.gt) ** 2)
        value = total / len(self.subjects)
        self.evaluations += 1
        self._cache[key] = value
        return value

    def relaxed(self, template):
        """Objective over candidate probabilities of ``template`` (uncached)."""
        return lambda probs: self(template.with_relaxed_units(probs))


def _budget(budget):
    return budget.total_selected if isinstance(budget, MaskBudget) else int(budget)


def greedy_select(objective, acs, budget, trace=None):
    """Add candidates one at a time, each time the one with the lowest
    objective; ties go to the lowest index."""
    total = _budget(budget)
    n_acs = len(acs.acs_units)
    if total < n_acs:
        raise ValueError(f"budget {total} is below the ACS count {n_acs}")
    if total > acs.n_total:
        raise ValueError(f"budget {total} exceeds the {acs.n_total} available samples")
    chosen = list(acs.high_units)
    mask = acs.with_high_units(chosen)
    remaining = [c for c in acs.candidates if c not in set(chosen)]
    step = 0
    while mask.n_selected < total:
        step += 1
        if len(remaining) == total - mask.n_selected:
            chosen += remaining
            mask = acs.with_high_units(sorted(chosen))
            break
        best, best_val = None, np.inf
        for c in remaining:
            val = objective(acs.with_high_units(sorted(chosen + [c])))
            if val < best_val:
                best, best_val = c, val
        chosen.append(best)
        remaining.remove(best)
        mask = acs.with_high_units(sorted(chosen))
        if trace is not None:
            trace.append({"step": step, "candidate": int(best), "objective": float(best_val)})
        logger.debug("greedy step %d: +%d -> %.6g", step, best, best_val)
    return mask


def _partners(mask, unit, neighborhood):
    cand = mask.candidates
    if neighborhood <= 0:
        return cand
    if mask.mode == "lines1d":
        return cand[np.abs(cand - unit) <= neighborhood]
    w = mask.shape[1]
    near = (np.abs(cand // w - unit // w) <= neighborhood) & (np.abs(cand % w - unit % w) <= neighborhood)
    return cand[near]


def exchange_refine(objective, mask, max_sweeps=2, trace=None, neighborhood=0):
    """Swap selected/unselected high-part units while strictly improving.

    Each sweep visits selected units in ascending order and, for each, takes
    the best improving swap partner. Stops after a sweep without improvement.
    ``neighborhood > 0`` limits partners to units within that distance.
    """
    current = mask.with_high_units(mask.high_units)
    value = objective(current)
    for sweep in range(1, max_sweeps + 1):
        improved = False
        for out_unit in list(current.high_units):
            if out_unit not in current.high_units:
                continue
            selected = set(current.high_units.tolist())
            best, best_val = None, value
            for in_unit in _partners(current, out_unit, neighborhood):
                if in_unit in selected:
                    continue
                trial = current.with_high_units(sorted((selected - {out_unit}) | {in_unit}))
                val = objective(trial)
                if val < best_val:
                    best, best_val = trial, val
            if best is not None:
                current, value, improved = best, best_val, True
                if trace is not None:
                    trace.append({"step": sweep, "candidate": int(out_unit), "objective": float(value)})
        if not improved:
            break
    return current


def relaxed_fd_descent(objective_relaxed, init_probs, k, step=0.5, epsilon=1e-2, iters=30, target_rate=None, template=None):
    """Projected descent on relaxed candidate probabilities with
    central-difference gradients, then top-k binarization.

    ``target_rate`` renormalizes the mean probability after every step.
    Returns the final probabilities, or a mask when ``template`` is given.
    """
    p = np.clip(np.asarray(init_probs, dtype=float), 0.0, 1.0)
    for _ in range(iters):
        grad = np.empty_like(p)
        for i in range(p.size):
            hi, lo = p.copy(), p.copy()
            hi[i] = min(1.0, p[i] + epsilon)
            lo[i] = max(0.0, p[i] - epsilon)
            grad[i] = (objective_relaxed(hi) - objective_relaxed(lo)) / (hi[i] - lo[i])
        p = np.clip(p - step * grad, 0.0, 1.0)
        if target_rate is not None and p.any():
            p = renormalize_probs(p, target_rate)
    if template is None:
        return p
    return binarize_topk(template, p, k)


def optimize_mask(objective, acs, budget, spec, init=None, trace=None):
    """Dispatch on ``spec.kind``; ``init`` seeds exchange/relaxed searches."""
    total = _budget(budget)
    n_acs = len(acs.acs_units)
    if total <= n_acs:
        warnings.warn(f"budget {total} leaves nothing to optimize beyond {n_acs} ACS samples", RuntimeWarning, stacklevel=2)
        return acs.acs_only()
    if spec.kind == "greedy":
        return greedy_select(objective, acs, total, trace)
    if spec.kind == "exchange":
        start = init if init is not None else greedy_select(objective, acs, total, trace)
        return exchange_refine(objective, start, spec.max_sweeps, trace, spec.neighborhood)
    k = total - n_acs
    rate = k / len(acs.candidates)
    if init is not None:
        p0 = init.high_weights[0] if init.mode == "lines1d" else init.high_weights.ravel()
        p0 = renormalize_probs(np.clip(p0[acs.candidates], 0.05, 0.95), rate)
    else:
        p0 = np.full(len(acs.candidates), rate)
    return relaxed_fd_descent(
        objective.relaxed(acs), p0, k, spec.step, spec.epsilon, spec.iters, rate if rate < 1 else None, template=acs
    )


def stage1_population(subjects, cfg, optimizer, acs, budget, provider=AttentionProviderSpec(), trace=None):
    """One mask for all subjects, minimizing the mean mask loss with lam = 0."""
    objective = MaskObjective(subjects, cfg, provider, lam=0.0)
    return optimize_mask(objective, acs, budget, optimizer, trace=trace)


@dataclass
class PersonalizedMask:
    mask: object
    attention_map: np.ndarray
    reference: np.ndarray
    oracle: bool


def stage2_personalize(
    acs_kspace,
    coils,
    boxes,
    cfg,
    optimizer,
    acs,
    budget,
    provider=AttentionProviderSpec(),
    lam=None,
    init=None,
    gt=None,
    trace=None,
):
    """Personalize the high-frequency part for one subject.

    The attention map comes from the low-resolution ACS image. Without
    ``gt`` the reference image is the reconstruction of the ACS data by the
    fixed reconstructor (surrogate mode); with ``gt`` it is the true image
    (oracle mode). ``init`` (typically the Stage 1 mask) seeds exchange and
    relaxed searches.
    """
    acs_kspace = np.asarray(acs_kspace, dtype=np.complex128)
    outside = ~acs.acs
    if np.any(acs_kspace[:, outside] != 0):
        raise ValueError("ACS k-space has samples outside the ACS region")
    lam = cfg.lam if lam is None else lam
    op_acs = EncodingOperator(acs.acs_only(), coils)
    x_acs = op_acs.adjoint(acs_kspace)
    amap = attention(provider, x_acs, boxes)
    if gt is None:
        reference = reconstruct(acs_kspace, op_acs, cfg, provider, boxes).x_final
    else:
        reference = np.asarray(gt, dtype=np.complex128)
    objective = MaskObjective([Subject(reference, coils, tuple(boxes))], cfg, provider, lam, loss_maps=[amap])
    mask = optimize_mask(objective, acs, budget, optimizer, init=init, trace=trace)
    return PersonalizedMask(mask, amap, reference, gt is not None)

