"""
Seeded synthetic datasets with known intrinsic dimension.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from idim.errors import ConfigError
from idim.geometry import PointCloud


class Kind(str, Enum):
    SWISSROLL = "swissroll"
    HYPERCUBE = "hypercube"
    GAUSSMIX = "gaussmix"
    PARETO = "pareto"


@dataclass
class GeneratorSpec:
    kind: Kind
    n: int
    seed: int = 0
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.n < 3:
            raise ConfigError(f"n must be at least 3, got {self.n}")


@dataclass
class Dataset:
    """Generated points, their true id(s) and optional class labels."""

    points: Optional[PointCloud]
    truth: Tuple[float, ...]
    classes: Optional[np.ndarray] = None
    mus: Optional[np.ndarray] = None


def swissroll(n: int, seed: int = 0) -> PointCloud:
    """S(x, y) = (x cos x, y, x sin x) with x, y ~ U(0, 10)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, size=n)
    y = rng.uniform(0, 10, size=n)
    return swissroll_map(x, y)


def swissroll_map(x, y) -> PointCloud:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return PointCloud(np.column_stack([x * np.cos(x), y, x * np.sin(x)]), ["x", "y", "z"])


def hypercube(n: int, seed: int = 0) -> PointCloud:
    """Uniform points in the 5-d unit cube, padded with 3 zero columns."""
    rng = np.random.default_rng(seed)
    data = np.hstack([rng.uniform(0, 1, size=(n, 5)), np.zeros((n, 3))])
    return PointCloud(data, [f"V{j}" for j in range(1, 9)])


def gaussmix(n_per: int = 500, seed: int = 0) -> Tuple[PointCloud, np.ndarray]:
    """
    Three Gaussian blocks of ids 1, 3 and 5 in 5 dimensions.

    A: V1 ~ N(-5, 1), V2 = 3 V1, V3..V5 = 0
    B: V1..V3 ~ N(0, 1), V4 = V5 = 0
    C: V1..V5 ~ N(5, 1)
    """
    rng = np.random.default_rng(seed)
    v1 = rng.normal(-5, 1, size=n_per)
    block_a = np.column_stack([v1, 3 * v1, np.zeros((n_per, 3))])
    block_b = np.hstack([rng.normal(0, 1, size=(n_per, 3)), np.zeros((n_per, 2))])
    block_c = rng.normal(5, 1, size=(n_per, 5))
    data = np.vstack([block_a, block_b, block_c])
    classes = np.repeat(np.array(["A", "B", "C"]), n_per)
    return PointCloud(data, [f"V{j}" for j in range(1, 6)]), classes


def pareto_ratios(n: int, d: float, seed: int = 0) -> np.ndarray:
    """Pareto(1, d) draws by inverse c.d.f.: mu = U^(-1/d)."""
    if d <= 0:
        raise ConfigError(f"d must be positive, got {d}")
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n)
    return u ** (-1.0 / d)


def generate(spec: GeneratorSpec) -> Dataset:
    if spec.kind is Kind.SWISSROLL:
        return Dataset(swissroll(spec.n, spec.seed), (2,))
    if spec.kind is Kind.HYPERCUBE:
        return Dataset(hypercube(spec.n, spec.seed), (5,))
    if spec.kind is Kind.GAUSSMIX:
        points, classes = gaussmix(spec.n, spec.seed)
        return Dataset(points, (1, 3, 5), classes=classes)
    d = float(spec.params.get("d", 2.0))
    return Dataset(None, (d,), mus=pareto_ratios(spec.n, d, spec.seed))
