"""Domain randomization of object shape and physical parameters.

Two modes are supported. ``UNIFORM`` draws every parameter independently and
uniformly from its range. ``EXPONENTIAL`` fixes the sliding friction
coefficient and draws the mass so that the implied sliding friction force
concentrates near both ends of its range (exponential draw, mirrored by a coin
flip).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .physics2d import GRAVITY, PhysParams, ShapeKind, ShapeSpec

EXPONENTIAL_MU_K = 0.4
EXPONENTIAL_SCALE = 1.0 / 7.0

SHAPE_CLASSES = ("disc", "square", "rectangle")


class SamplerMode(str, enum.Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class ParamRanges:
    """Sampling ranges for one object. Defaults reproduce the simulation table of the method.

    ``shape_classes`` is drawn uniformly; "rectangle" draws length and width
    independently, "square" draws one side for both.
    """

    shape_classes: tuple[str, ...] = ("disc", "rectangle")
    radius: tuple[float, float] = (0.04, 0.055)
    side: tuple[float, float] = (0.05, 0.11)
    min_height: float = 0.046
    max_height_disc: float = 0.055
    max_height_box: float = 0.08
    mass: tuple[float, float] = (0.001, 1.0)
    mu_k: tuple[float, float] = (0.2, 1.0)
    mu_t: tuple[float, float] = (0.001, 0.01)
    damping: float = 0.01
    mu_roll: float = 0.0001

    def __post_init__(self):
        bad = set(self.shape_classes) - set(SHAPE_CLASSES)
        if bad or not self.shape_classes:
            raise ValueError(f"shape_classes must be a non-empty subset of {SHAPE_CLASSES}, got {self.shape_classes}")
        for name in ("radius", "side", "mass", "mu_k", "mu_t"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"invalid range for {name}: {(lo, hi)}")

    @property
    def force_range(self) -> tuple[float, float]:
        """(F_min, F_max) in units of g: products of the mass and friction bounds."""
        return self.mass[0] * self.mu_k[0], self.mass[1] * self.mu_k[1]


PRESETS: dict[str, ParamRanges] = {
    "table1": ParamRanges(),
    # evaluation regime with small sliding friction forces
    "small_friction": ParamRanges(
        shape_classes=SHAPE_CLASSES,
        mass=(0.001, 0.01),
        mu_k=(0.2, 0.3),
        min_height=0.052,
    ),
    # easy regime used by the learning smoke test
    "smoke": ParamRanges(shape_classes=("disc",), mass=(0.5, 1.0), mu_k=(0.8, 1.0)),
}


def get_preset(name: str) -> ParamRanges:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown parameter preset {name!r}; choose from {sorted(PRESETS)}") from None


def shape_class(shape: ShapeSpec, tol: float = 1e-6) -> str:
    if shape.kind == ShapeKind.DISC:
        return "disc"
    hx, hy = shape.half_extents
    return "square" if abs(2 * hx - 2 * hy) < tol else "rectangle"


def mass_from_draws(x: float, y: float, ranges: ParamRanges = PRESETS["table1"], mu_k: float = EXPONENTIAL_MU_K):
    """Map an exponential draw ``x`` in [0, 1] and a coin ``y`` in {0, 1} to a mass.

    ``(1-x)(1-y) + xy`` equals ``x`` for heads and ``1-x`` for tails, so the
    coin mirrors the exponential density about the middle of the force range.
    Works elementwise on arrays.
    """
    f_min, f_max = ranges.force_range
    return (f_max - f_min) / mu_k * ((1 - x) * (1 - y) + x * y) + f_min / mu_k


def sample_mass_exponential(
    rng: np.random.Generator,
    ranges: ParamRanges = PRESETS["table1"],
    size: int | None = None,
    mu_k: float = EXPONENTIAL_MU_K,
):
    x = np.minimum(rng.exponential(EXPONENTIAL_SCALE, size=size), 1.0)
    y = np.where(rng.random(size=size) < 0.5, 1.0, 0.0)
    m = mass_from_draws(x, y, ranges, mu_k)
    return float(m) if size is None else m


def sample_shape(rng: np.random.Generator, ranges: ParamRanges) -> ShapeSpec:
    kind = ranges.shape_classes[rng.integers(len(ranges.shape_classes))]
    if kind == "disc":
        radius = rng.uniform(*ranges.radius)
        height = rng.uniform(ranges.min_height, max(ranges.min_height, ranges.max_height_disc))
        return ShapeSpec.disc(radius, height)
    length = rng.uniform(*ranges.side)
    width = length if kind == "square" else rng.uniform(*ranges.side)
    top = max(ranges.min_height, min(ranges.max_height_box, length, width))
    return ShapeSpec.rectangle(length, width, rng.uniform(ranges.min_height, top))


def sample_object(
    mode: SamplerMode | str,
    rng: np.random.Generator,
    ranges: ParamRanges = PRESETS["table1"],
) -> tuple[ShapeSpec, PhysParams]:
    mode = SamplerMode(mode)
    shape = sample_shape(rng, ranges)
    if mode == SamplerMode.UNIFORM:
        mass = rng.uniform(*ranges.mass)
        mu_k = rng.uniform(*ranges.mu_k)
    else:
        mass = sample_mass_exponential(rng, ranges)
        mu_k = EXPONENTIAL_MU_K
    mu_t = rng.uniform(*ranges.mu_t)
    return shape, PhysParams(mass=mass, mu_k=mu_k, mu_t=mu_t, damping=ranges.damping, mu_roll=ranges.mu_roll)


def friction_forces(mode: SamplerMode | str, n: int, rng: np.random.Generator, ranges: ParamRanges = PRESETS["table1"]):
    """Vectorized draw of ``n`` sliding friction forces ``mu_k * m * g`` in newtons."""
    mode = SamplerMode(mode)
    if mode == SamplerMode.UNIFORM:
        mass = rng.uniform(*ranges.mass, size=n)
        mu_k = rng.uniform(*ranges.mu_k, size=n)
    else:
        mass = sample_mass_exponential(rng, ranges, size=n)
        mu_k = np.full(n, EXPONENTIAL_MU_K)
    return mu_k * mass * GRAVITY


def force_histogram(n: int, bins: int, seed: int, ranges: ParamRanges = PRESETS["table1"]):
    """Binned densities of the sliding friction force under both modes.

    Returns ``(edges, {mode: density})``; densities integrate to 1 over the
    shared range ``[F_min*g, F_max*g]`` (all zeros when ``n == 0``).
    """
    f_min, f_max = ranges.force_range
    edges = np.linspace(f_min * GRAVITY, f_max * GRAVITY, bins + 1)
    out = {}
    for i, mode in enumerate(SamplerMode):
        rng = np.random.default_rng([seed, i])
        forces = friction_forces(mode, n, rng, ranges)
        counts, _ = np.histogram(forces, bins=edges)
        width = np.diff(edges)
        out[mode.value] = counts / (n * width) if n else np.zeros(bins)
    return edges, out

