"""Marked Poisson point clouds on boxes and tori, plus the Palm origin."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class Boundary(str, Enum):
    FREE = "free"
    TORUS = "torus"


@dataclass(frozen=True)
class SpatialDomain:
    """The region [-L/2, L/2]^d with free or periodic boundary."""

    d: int
    L: float
    boundary: Boundary = Boundary.FREE

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.L >= 0:
            raise ValueError(f"side length must be nonnegative, got {self.L}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def volume(self):
        return float(self.L) ** self.d

    @property
    def is_torus(self):
        return self.boundary is Boundary.TORUS

    @classmethod
    def from_volume(cls, n, d=1, boundary=Boundary.FREE):
        return cls(d, float(n) ** (1.0 / d), boundary)


@dataclass(frozen=True)
class MarkedVertex:
    id: int
    position: np.ndarray
    mark: float


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Vertices stored column-wise: ``positions`` is (N, d), ``marks`` is (N,).

    Ids are the row indices. Arrays are read-only.
    """

    domain: SpatialDomain
    positions: np.ndarray
    marks: np.ndarray
    palm_origin: Optional[int] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, self.domain.d)
        marks = np.array(self.marks, dtype=np.float64).reshape(-1)
        if pos.shape[0] != marks.shape[0]:
            raise ValueError("positions and marks differ in length")
        if marks.size and not (np.all(marks > 0.0) and np.all(marks < 1.0)):
            raise ValueError("marks must lie strictly inside (0, 1)")
        pos.flags.writeable = False
        marks.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "marks", marks)
        if self.palm_origin is not None and np.any(pos[self.palm_origin] != 0.0):
            raise ValueError("palm origin must sit at the all-zero position")

    def __len__(self):
        return self.marks.shape[0]

    @property
    def size(self):
        return self.marks.shape[0]

    def vertex(self, i):
        return MarkedVertex(int(i), self.positions[i], float(self.marks[i]))

    @property
    def vertices(self):
        return [self.vertex(i) for i in range(self.size)]

    def with_vertices(self, positions, marks):
        """Return a new cloud with extra vertices appended (ids continue densely)."""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, self.domain.d)
        return PointCloud(
            self.domain,
            np.vstack([self.positions, positions]),
            np.concatenate([self.marks, np.asarray(marks, dtype=np.float64).reshape(-1)]),
            self.palm_origin,
        )


def _open_uniform(rng, size):
    u = rng.random(size)
    bad = u == 0.0
    while np.any(bad):
        u[bad] = rng.random(int(bad.sum()))
        bad = u == 0.0
    return u


def sample_point_cloud(domain, seed):
    """Unit-intensity marked Poisson process on ``domain``.

    Count-then-place: N ~ Poisson(L^d), then i.i.d. uniform positions and
    uniform marks in the open interval (0, 1).
    """
    rng = np.random.default_rng(int(seed))
    n = rng.poisson(domain.volume) if domain.L > 0 else 0
    half = 0.5 * domain.L
    positions = rng.uniform(-half, half, size=(n, domain.d))
    marks = _open_uniform(rng, n)
    return PointCloud(domain, positions, marks)


def add_palm_origin(cloud, seed, mark=None):
    """Append the typical vertex at the origin.

    Parameters
    ----------
    cloud : PointCloud
        Cloud without a palm origin.
    seed : int
        Seed for the uniform mark.
    mark : float, optional
        Fixed mark t0 instead of a uniform draw.
    """
    if cloud.palm_origin is not None:
        raise ValueError("cloud already has a palm origin")
    if mark is None:
        mark = float(_open_uniform(np.random.default_rng(int(seed)), 1)[0])
    elif not 0.0 < mark < 1.0:
        raise ValueError("palm mark must lie in (0, 1)")
    out = cloud.with_vertices(np.zeros((1, cloud.domain.d)), [mark])
    return PointCloud(out.domain, out.positions, out.marks, palm_origin=cloud.size)


def displacement(domain, a, b):
    """Componentwise b - a, wrapped to the nearest image on a torus."""
    diff = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    if domain.is_torus and domain.L > 0:
        diff = diff - domain.L * np.round(diff / domain.L)
    return diff


def distance(domain, a, b):
    """Euclidean (free) or wrap-around (torus) distance; broadcasts over rows."""
    diff = displacement(domain, a, b)
    return np.sqrt(np.sum(np.atleast_1d(diff) ** 2, axis=-1))
