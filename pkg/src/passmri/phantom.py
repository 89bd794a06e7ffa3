"""Synthetic ground truth: Shepp-Logan phantoms with inserted lesions and
analytic, sum-of-squares normalized coil sensitivity maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Modified Shepp-Logan (Toft): intensity, semi-axis x, semi-axis y, x0, y0, angle (deg)
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

LESION_LABELS = ("mass", "edema", "resection_cavity", "posttreatment_change", "extra_axial_mass")


class LesionBoundsError(ValueError):
    def __init__(self, index, message):
        super().__init__(f"lesion {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class LesionSpec:
    center: tuple[float, float]
    radii: tuple[float, float]
    intensity_delta: float
    label: str = "lesion"

    def __post_init__(self):
        if min(self.radii) < 1:
            raise ValueError(f"lesion radii must be >= 1 pixel, got {self.radii}")
        if abs(self.intensity_delta) > 1:
            raise ValueError(f"|intensity_delta| must be <= 1, got {self.intensity_delta}")

    def to_dict(self):
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "intensity_delta": self.intensity_delta,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["center"]), tuple(d["radii"]), float(d["intensity_delta"]), d.get("label", "lesion"))


@dataclass(frozen=True)
class LesionBox:
    """Inclusive pixel bounds of an annotated lesion."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int
    label: str = "lesion"

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"empty box {self}")

    @property
    def slices(self):
        return slice(self.row_min, self.row_max + 1), slice(self.col_min, self.col_max + 1)

    @property
    def shape(self):
        return self.row_max - self.row_min + 1, self.col_max - self.col_min + 1

    def inside(self, height, width):
        return self.row_min >= 0 and self.col_min >= 0 and self.row_max < height and self.col_max < width

    def to_dict(self):
        return {
            "row_min": self.row_min,
            "row_max": self.row_max,
            "col_min": self.col_min,
            "col_max": self.col_max,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["row_min"]), int(d["row_max"]), int(d["col_min"]), int(d["col_max"]), d.get("label", "lesion"))


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom geometry. ``jitter`` > 0 randomly scales, rotates and shifts the
    base ellipses (seeded), which gives a population of distinct subjects."""

    height: int
    width: int
    lesions: tuple[LesionSpec, ...] = field(default_factory=tuple)
    seed: int = 0
    jitter: float = 0.0

    def to_dict(self):
        return {
            "height": self.height,
            "width": self.width,
            "lesions": [les.to_dict() for les in self.lesions],
            "seed": self.seed,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            int(d["height"]),
            int(d["width"]),
            tuple(LesionSpec.from_dict(x) for x in d.get("lesions", [])),
            int(d.get("seed", 0)),
            float(d.get("jitter", 0.0)),
        )


def _grid(height, width):
    # y points up, x to the right; both span [-1, 1] over pixel centers
    y = 1.0 - 2.0 * (np.arange(height) + 0.5) / height
    x = 2.0 * (np.arange(width) + 0.5) / width - 1.0
    return np.meshgrid(y, x, indexing="ij")


def shepp_logan(height, width, seed=0, jitter=0.0):
    """Base phantom, real-valued with peak magnitude 1."""
    yy, xx = _grid(height, width)
    scale, rot, dx, dy = 1.0, 0.0, 0.0, 0.0
    if jitter > 0:
        rng = np.random.default_rng(seed)
        scale = 1.0 + rng.uniform(-jitter, jitter)
        rot = rng.uniform(-jitter, jitter) * math.pi / 3
        dx, dy = rng.uniform(-jitter, jitter, size=2) * 0.5
    cr, sr = math.cos(rot), math.sin(rot)
    # rotate/scale the sampling grid rather than every ellipse
    xs = (cr * (xx - dx) + sr * (yy - dy)) / scale
    ys = (-sr * (xx - dx) + cr * (yy - dy)) / scale
    img = np.zeros((height, width))
    for amp, a, b, x0, y0, phi in SHEPP_LOGAN:
        c, s = math.cos(math.radians(phi)), math.sin(math.radians(phi))
        u = c * (xs - x0) + s * (ys - y0)
        v = -s * (xs - x0) + c * (ys - y0)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += amp
    img = np.clip(img, 0.0, None)
    peak = img.max()
    return img / peak if peak > 0 else img


def lesion_profile(height, width, lesion):
    """Soft ellipse indicator: 1 inside, cosine taper over the outermost
    pixel, exactly 0 on and outside the ellipse boundary."""
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    (r0, c0), (rr, rc) = lesion.center, lesion.radii
    rho = np.sqrt(((rows - r0) / rr) ** 2 + ((cols - c0) / rc) ** 2)
    inner = 1.0 - 1.0 / min(rr, rc)
    w = np.zeros((height, width))
    w[rho <= inner] = 1.0
    ramp = (rho > inner) & (rho < 1.0)
    w[ramp] = 0.5 * (1.0 + np.cos(np.pi * (rho[ramp] - inner) / (1.0 - inner)))
    return w


def lesion_box(lesion):
    (r0, c0), (rr, rc) = lesion.center, lesion.radii
    return LesionBox(
        math.ceil(r0 - rr - 1e-9), math.floor(r0 + rr + 1e-9),
        math.ceil(c0 - rc - 1e-9), math.floor(c0 + rc + 1e-9),
        lesion.label,
    )


def generate_phantom(spec):
    """Return ``(image, boxes)``: complex ground truth and one box per lesion.

    Raises :class:`LesionBoundsError` naming the first lesion whose ellipse
    does not fit inside the image.
    """
    boxes = []
    for i, les in enumerate(spec.lesions):
        box = lesion_box(les)
        if not box.inside(spec.height, spec.width):
            raise LesionBoundsError(i, f"ellipse bounds {box.to_dict()} exceed image {spec.height}x{spec.width}")
        boxes.append(box)
    img = shepp_logan(spec.height, spec.width, spec.seed, spec.jitter)
    for les in spec.lesions:
        img = img + les.intensity_delta * lesion_profile(spec.height, spec.width, les)
    return img.astype(np.complex128), boxes


def generate_coil_maps(n_coils, height, width):
    """Gaussian coil profiles placed around the image border, each with a
    linear phase ramp, normalized so that sum_c |S_c|^2 == 1 everywhere.

    Returns an array of shape ``(n_coils, height, width)``.
    """
    if n_coils < 1:
        raise ValueError(f"n_coils must be >= 1, got {n_coils}")
    rows, cols = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    ch, cw = height / 2.0, width / 2.0
    sigma = 0.6 * max(height, width)
    maps = np.empty((n_coils, height, width), dtype=np.complex128)
    for c in range(n_coils):
        theta = 2.0 * np.pi * c / n_coils
        pr, pc = ch - ch * math.sin(theta), cw + cw * math.cos(theta)
        mag = np.exp(-((rows - pr) ** 2 + (cols - pc) ** 2) / (2.0 * sigma**2))
        ramp = (np.pi / 4) * ((rows - ch) / height * math.sin(theta) + (cols - cw) / width * math.cos(theta)) * 2
        maps[c] = mag * np.exp(1j * (ramp + theta))
    return maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))


def random_lesion_specs(n, height, width, seed, jitter=0.05, max_lesions=2):
    """A reproducible population of lesion phantoms inside the brain region."""
    rng = np.random.default_rng(seed)
    specs = []
    scale = min(height, width) / 64.0
    for i in range(n):
        lesions = []
        for _ in range(int(rng.integers(1, max_lesions + 1))):
            # polar draw inside the inner ellipse, away from the skull
            ang = rng.uniform(0, 2 * np.pi)
            rad = 0.55 * np.sqrt(rng.uniform(0, 1))
            r0 = round(height / 2 - rad * math.sin(ang) * 0.85 * height / 2)
            c0 = round(width / 2 + rad * math.cos(ang) * 0.65 * width / 2)
            rr = int(rng.integers(max(2, round(2 * scale)), max(3, round(5 * scale)) + 1))
            rc = int(rng.integers(max(2, round(2 * scale)), max(3, round(5 * scale)) + 1))
            delta = float(rng.choice([-1.0, 1.0], p=[0.25, 0.75]) * rng.uniform(0.15, 0.4))
            label = LESION_LABELS[int(rng.integers(len(LESION_LABELS)))]
            lesions.append(LesionSpec((r0, c0), (rr, rc), round(delta, 4), label))
        specs.append(PhantomSpec(height, width, tuple(lesions), seed=int(seed) * 1000 + i, jitter=jitter))
    return specs
