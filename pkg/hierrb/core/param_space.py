import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from hierrb.exceptions import EmptyPartitionError, ParameterError
from hierrb.utils.helpers import array_fingerprint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParameterDomain:
    """Compact parameter box P = [lower, upper] in R^P"""
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(x) for x in np.atleast_1d(self.lower))
        upper = tuple(float(x) for x in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

        if len(lower) == 0 or len(lower) != len(upper):
            raise ParameterError(f"bounds of different length: {lower} / {upper}")
        if not all(np.isfinite(lower + upper)):
            raise ParameterError("parameter bounds must be finite")
        if any(lo >= up for lo, up in zip(lower, upper)):
            raise ParameterError(f"empty parameter box: {lower} / {upper}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, mu, atol: float = 0.0) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.shape != (self.dim,):
            return False
        return bool(np.all(mu >= np.asarray(self.lower) - atol) and np.all(mu <= np.asarray(self.upper) + atol))

    def parse(self, mu) -> np.ndarray:
        """Validate a single parameter and return it as a float vector"""
        vec = np.atleast_1d(np.asarray(mu, dtype=float))
        if vec.shape != (self.dim,):
            raise ParameterError(f"parameter {mu} does not have dimension {self.dim}")
        if not self.contains(vec, atol=1e-12 * float(np.max(self.widths))):
            raise ParameterError(f"parameter {tuple(vec)} lies outside {self.lower}..{self.upper}")
        return vec


@dataclass(frozen=True)
class SampleSet:
    """Ordered, duplicate-free list of parameters inside a domain.

    `indices` maps the points back into a parent set when the set was
    obtained by filtering (partition_positive); it is None for root sets.
    """
    domain: ParameterDomain
    points: np.ndarray
    provenance: str = "explicit"
    seed: Optional[int] = None
    indices: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.size == 0:
            pts = pts.reshape(0, self.domain.dim)
        if pts.shape[1] != self.domain.dim:
            raise ParameterError(f"points have dimension {pts.shape[1]}, domain has {self.domain.dim}")
        for mu in pts:
            self.domain.parse(mu)
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ParameterError("sample set contains duplicate points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=int)
            idx.setflags(write=False)
            object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.points)

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]

    def subset(self, positions: Sequence[int]) -> "SampleSet":
        positions = np.asarray(positions, dtype=int)
        parent = self.indices if self.indices is not None else np.arange(len(self))
        return SampleSet(self.domain, self.points[positions], provenance="explicit", indices=parent[positions])

    def fingerprint(self) -> str:
        return array_fingerprint(self.points)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"mu_{j + 1}" for j in range(self.domain.dim)])
            for mu in self.points:
                writer.writerow([repr(float(x)) for x in mu])

    @classmethod
    def from_csv(cls, path, domain: ParameterDomain) -> "SampleSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != domain.dim:
                raise ParameterError(f"{path}: {len(header)} columns for a {domain.dim}-d domain")
            rows = [[float(x) for x in row] for row in reader if row]
        return cls(domain, np.array(rows).reshape(-1, domain.dim), provenance="explicit")


def tensor_grid(domain: ParameterDomain, n_per_dim) -> SampleSet:
    """Cartesian grid including both endpoints, lexicographic (first coordinate slowest)"""
    counts = [int(n) for n in np.atleast_1d(n_per_dim)]
    if len(counts) != domain.dim:
        raise ParameterError(f"{len(counts)} grid sizes given for a {domain.dim}-d domain")
    if any(n < 2 for n in counts):
        raise ParameterError(f"every grid dimension needs at least 2 points, got {counts}")

    axes = [np.linspace(lo, up, n) for lo, up, n in zip(domain.lower, domain.upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return SampleSet(domain, points, provenance="tensor_grid")


def random_sample(domain: ParameterDomain, n: int, seed: int) -> SampleSet:
    """n i.i.d. uniform points; the same seed always gives the same set"""
    if n < 1:
        raise ParameterError(f"sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    points = rng.uniform(domain.lower, domain.upper, size=(n, domain.dim))
    return SampleSet(domain, points, provenance="random", seed=seed)


def explicit_sample(domain: ParameterDomain, points) -> SampleSet:
    return SampleSet(domain, np.asarray(points, dtype=float).reshape(-1, domain.dim), provenance="explicit")


def partition_positive(samples: SampleSet, g_values, tol: float = 1e-12,
                       groups: Optional[Sequence[Sequence[int]]] = None) -> list:
    """Split a discrete set into subsets on which g is bounded away from zero.

    Points with g <= tol * max(g) are excluded. Without `groups` a single
    subset is returned; `groups` lists explicit point positions per subset.
    """
    g = np.asarray(g_values, dtype=float)
    if g.shape != (len(samples),):
        raise ParameterError(f"{g.shape[0]} values for {len(samples)} points")
    if tol <= 0:
        raise ParameterError("exclusion tolerance must be positive")
    if np.any(g < 0):
        raise ParameterError("g values must be nonnegative")

    g_max = float(np.max(g)) if len(g) else 0.0
    keep = g > tol * g_max if g_max > 0 else np.zeros(len(g), dtype=bool)
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.debug(f"partition: {excluded} of {len(g)} points excluded (g <= {tol * g_max:.3e})")

    if groups is None:
        groups = [range(len(samples))]

    subsets = []
    for group in groups:
        positions = [p for p in group if keep[p]]
        if positions:
            subsets.append(samples.subset(positions))

    if not subsets:
        raise EmptyPartitionError("no point with positive denominator left, Theta is undefined")
    return subsets
