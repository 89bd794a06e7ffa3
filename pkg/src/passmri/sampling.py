"""Cartesian k-space sampling masks.

A mask is the disjoint union of a fixed autocalibration (ACS) part and a
high-frequency part. In ``lines1d`` mode each column is one phase-encode
line and is either fully sampled or not; candidates are column indices.
In ``points2d`` mode candidates are flat (row-major) pixel indices.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

LINES = "lines1d"
POINTS = "points2d"
MODES = (LINES, POINTS)


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class SamplingMask:
    mode: str
    acs: np.ndarray
    high: np.ndarray
    relaxed: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mask mode {self.mode!r}")
        acs = np.asarray(self.acs, dtype=bool)
        high = np.asarray(self.high, dtype=bool)
        if acs.ndim != 2 or acs.shape != high.shape:
            raise ValueError(f"acs/high planes must share a 2D shape, got {acs.shape} and {high.shape}")
        if np.any(acs & high):
            raise ValueError("acs and high parts overlap")
        if self.mode == LINES:
            for plane in (acs, high):
                if np.any(plane.any(axis=0) != plane.all(axis=0)):
                    raise ValueError("lines1d mask has a partially sampled column")
        object.__setattr__(self, "acs", acs)
        object.__setattr__(self, "high", high)
        if self.relaxed is not None:
            rel = np.asarray(self.relaxed, dtype=float)
            if rel.shape != acs.shape:
                raise ValueError("relaxed plane shape mismatch")
            if np.any(rel[acs] != 0):
                raise ValueError("relaxed weights must vanish on the ACS region")
            object.__setattr__(self, "relaxed", rel)

    @property
    def shape(self):
        return self.acs.shape

    @property
    def n_total(self):
        """Number of candidate units: lines or points."""
        return self.shape[1] if self.mode == LINES else self.acs.size

    def _units(self, plane):
        return plane[0] if self.mode == LINES else plane.ravel()

    @property
    def acs_units(self):
        return np.flatnonzero(self._units(self.acs))

    @property
    def high_units(self):
        return np.flatnonzero(self._units(self.high))

    @property
    def candidates(self):
        """Units outside ACS, i.e. those the high part may select."""
        return np.flatnonzero(~self._units(self.acs))

    @property
    def n_selected(self):
        return int(self._units(self.acs | self.high).sum())

    @property
    def binary(self):
        return self.acs | self.high

    @property
    def high_weights(self):
        """M2 as real weights (relaxed probabilities when present)."""
        return self.relaxed if self.relaxed is not None else self.high.astype(float)

    @property
    def weights(self):
        """Full multiplicative mask M = M1 + M2."""
        return self.acs.astype(float) + self.high_weights

    def key(self):
        return self.mode, self.weights.tobytes()

    def is_column_separable(self):
        return self.mode == LINES

    def with_high_units(self, units):
        return SamplingMask(self.mode, self.acs, _plane(self.mode, self.shape, units))

    def with_relaxed_units(self, probs):
        """Replace the high part by relaxed weights over ``self.candidates``."""
        probs = np.asarray(probs, dtype=float)
        units = np.zeros(self.n_total)
        units[self.candidates] = probs
        if self.mode == LINES:
            rel = np.broadcast_to(units, self.shape).copy()
        else:
            rel = units.reshape(self.shape)
        return SamplingMask(self.mode, self.acs, np.zeros(self.shape, bool), rel)

    def acs_only(self):
        return SamplingMask(self.mode, self.acs, np.zeros(self.shape, bool))

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(self.weights, other.weights) and np.array_equal(self.acs, other.acs)

    def __repr__(self):
        return f"SamplingMask({self.mode}, shape={self.shape}, acs={len(self.acs_units)}, selected={self.n_selected})"

    # portable bitmap format
    def to_json(self):
        def enc(plane):
            return base64.b64encode(np.packbits(plane.ravel(), bitorder="big").tobytes()).decode("ascii")

        h, w = self.shape
        high = self.high if self.relaxed is None else self.relaxed > 0.5
        return json.dumps({"mode": self.mode, "h": h, "w": w, "acs": enc(self.acs), "high": enc(high)})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        h, w = int(d["h"]), int(d["w"])

        def dec(s):
            bits = np.unpackbits(np.frombuffer(base64.b64decode(s), dtype=np.uint8), bitorder="big")
            return bits[: h * w].astype(bool).reshape(h, w)

        return cls(d["mode"], dec(d["acs"]), dec(d["high"]))


def _plane(mode, shape, units):
    units = np.asarray(units, dtype=int)
    plane = np.zeros(shape, dtype=bool)
    if mode == LINES:
        plane[:, units] = True
    else:
        plane.ravel()[units] = True
    return plane


@dataclass(frozen=True)
class MaskBudget:
    R: float
    total_selected: int
    acs_count: int

    def __post_init__(self):
        if not self.acs_count <= self.total_selected:
            raise ValueError(f"ACS count {self.acs_count} exceeds budget {self.total_selected}")

    @classmethod
    def for_mask(cls, acs, R):
        return cls(R, round_half_up(acs.n_total / R), len(acs.acs_units))


def acs_fraction(R):
    """Fraction of lines in the 1D ACS block: 8% at 4x, 4% at 8x, linear in
    1/R elsewhere and clamped to [0.02, 0.08]."""
    return min(0.08, max(0.02, 0.32 / R))


def _centered(n, count):
    start = n // 2 - count // 2
    return np.arange(start, start + count)


def make_acs_mask(mode, height, width, R, fraction=None):
    """ACS-only mask for acceleration ``R``.

    ``fraction`` overrides the line fraction (lines1d) or the square side
    fraction (points2d, default 0.1).
    """
    if R <= 1 and fraction is None:
        raise ValueError(f"acceleration must exceed 1, got {R}")
    shape = (height, width)
    if mode == LINES:
        frac = acs_fraction(R) if fraction is None else fraction
        n_acs = max(1, round_half_up(frac * width))
        acs = _plane(LINES, shape, _centered(width, n_acs))
        n_total, n_units = width, n_acs
    elif mode == POINTS:
        frac = 0.1 if fraction is None else fraction
        sh, sw = max(1, round_half_up(frac * height)), max(1, round_half_up(frac * width))
        acs = np.zeros(shape, dtype=bool)
        acs[np.ix_(_centered(height, sh), _centered(width, sw))] = True
        n_total, n_units = height * width, sh * sw
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
    budget = round_half_up(n_total / R) if R > 1 else n_total
    if n_units > budget:
        raise ValueError(f"ACS needs {n_units} samples but the budget at R={R} is {budget}")
    return SamplingMask(mode, acs, np.zeros(shape, dtype=bool))


def _count(budget):
    return budget.total_selected if isinstance(budget, MaskBudget) else int(budget)


def make_random_mask(acs, budget, seed):
    """Keep ACS and draw the rest of the budget uniformly without replacement."""
    total = _count(budget)
    n_acs = len(acs.acs_units)
    if total > acs.n_total:
        raise ValueError(f"budget {total} exceeds the {acs.n_total} available samples")
    if total < n_acs:
        raise ValueError(f"budget {total} is below the ACS count {n_acs}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(acs.candidates, size=total - n_acs, replace=False)
    return acs.with_high_units(np.sort(picked))


def make_equispaced_mask(acs, R):
    """Every R-th line (phase 0) plus the ACS block."""
    if acs.mode != LINES:
        raise ValueError("equispaced masks are only defined in lines1d mode")
    if int(R) != R or R < 1:
        raise ValueError(f"equispaced R must be a positive integer, got {R}")
    lattice = np.arange(0, acs.shape[1], int(R))
    return acs.with_high_units(np.setdiff1d(lattice, acs.acs_units))


def renormalize_probs(probs, target_rate):
    """Monotone rescale so that ``mean(probs) == target_rate``.

    Scales p down when the mean is too high, otherwise scales the
    complements 1 - p down. Ranking and the [0, 1] range are preserved.
    """
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if not 0 < target_rate < 1:
        raise ValueError(f"target rate must lie in (0, 1), got {target_rate}")
    mean = p.mean()
    if mean == 0:
        raise ValueError("cannot renormalize an all-zero probability vector")
    if abs(mean - target_rate) <= 1e-12:
        return p.copy()
    if mean > target_rate:
        return p * (target_rate / mean)
    return 1.0 - (1.0 - p) * ((1.0 - target_rate) / (1.0 - mean))


def topk_indices(values, k):
    """Positions of the k largest values, ties broken by ascending index."""
    values = np.asarray(values, dtype=float)
    if k > values.size:
        raise ValueError(f"k={k} exceeds the {values.size} candidates")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:k])


def binarize_topk(template, probs, k):
    """Select the k most probable candidates of ``template`` as the high part."""
    cand = template.candidates
    return template.with_high_units(cand[topk_indices(probs, k)])
