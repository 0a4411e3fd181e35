"""Windows, marked configurations, set distances and the uniform-grid index."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels

# points with fewer than this many rows use pdist for the diameter, others the hull
_HULL_THRESHOLD = 2000


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lower and upper must be 1-D of equal length")
        if np.any(hi < lo):
            raise ValueError("upper corner below lower corner")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatch(f"point has dimension {x.shape[-1]}, box has {self.d}")
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def enlarged(self, b: float) -> "Box":
        return Box(self.lower - b, self.upper + b)


@dataclass(frozen=True)
class Window:
    """The cube of volume ``alpha`` centred at ``center``, with a buffer.

    Samplers draw on the simulation box: the same cube enlarged by ``buffer``
    on every side.
    """

    alpha: float
    d: int = 2
    center: tuple | None = None
    buffer: float = 0.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.alpha < 0 or self.buffer < 0:
            raise ValueError("alpha and buffer must be nonnegative")
        c = (0.0,) * self.d if self.center is None else tuple(float(v) for v in self.center)
        if len(c) != self.d:
            raise DimensionMismatch("center dimension does not match d")
        object.__setattr__(self, "center", c)

    @property
    def side(self) -> float:
        return self.alpha ** (1.0 / self.d)

    @property
    def volume(self) -> float:
        return float(self.alpha)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - self.side / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + self.side / 2

    @property
    def diam(self) -> float:
        return math.sqrt(self.d) * self.side

    def as_box(self) -> Box:
        return Box(self.lower, self.upper)

    def sim_box(self) -> "Window":
        """The buffered simulation box as a window of its own (no buffer)."""
        return Window((self.side + 2 * self.buffer) ** self.d, self.d, self.center, 0.0)

    def with_buffer(self, buffer: float) -> "Window":
        return Window(self.alpha, self.d, self.center, buffer)

    def translated(self, v) -> "Window":
        return Window(self.alpha, self.d, tuple(np.asarray(self.center) + np.asarray(v, float)), self.buffer)

    def contains(self, x) -> np.ndarray:
        return self.as_box().contains(x)


def window_contains(w: Window, x) -> bool:
    return bool(w.contains(x))


SetLike = Union[Box, Window, np.ndarray]


def _as_set(a):
    if isinstance(a, Window):
        return a.as_box()
    if isinstance(a, (Box, Configuration)):
        return a.points if isinstance(a, Configuration) else a
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise ValueError("empty point set")
    return arr


def _box_point_dist(box: Box, pts: np.ndarray) -> np.ndarray:
    gap = np.maximum(np.maximum(box.lower - pts, pts - box.upper), 0.0)
    return np.sqrt((gap * gap).sum(axis=1))


def set_distance(a: SetLike, b: SetLike) -> float:
    """Euclidean infimum distance between two boxes or point sets."""
    a, b = _as_set(a), _as_set(b)
    if isinstance(a, Box) and isinstance(b, Box):
        if a.d != b.d:
            raise DimensionMismatch("dimension mismatch")
        gap = np.maximum(np.maximum(a.lower - b.upper, b.lower - a.upper), 0.0)
        return float(math.sqrt((gap * gap).sum()))
    if isinstance(a, Box) or isinstance(b, Box):
        box, pts = (a, b) if isinstance(a, Box) else (b, a)
        if pts.shape[1] != box.d:
            raise DimensionMismatch("dimension mismatch")
        return float(_box_point_dist(box, pts).min())
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch("dimension mismatch")
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(b).query(a, k=1)
    return float(np.min(dist))


def diam(a: SetLike) -> float:
    """Largest pairwise distance; 0 for an empty set."""
    if isinstance(a, Window):
        return a.diam
    if isinstance(a, Box):
        return float(np.linalg.norm(a.upper - a.lower))
    pts = a.points if isinstance(a, Configuration) else np.asarray(a, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > _HULL_THRESHOLD and pts.shape[1] > 1:
        from scipy.spatial import ConvexHull

        pts = pts[ConvexHull(pts).vertices]
    return float(pdist(pts).max())


class GridIndex:
    """Uniform grid over the bounding box of a point set.

    Neighbour queries are exact: they return the same sets as a brute-force
    scan, with ties broken by (distance, lexicographic coordinates).
    """

    def __init__(self, points: np.ndarray, h: float | None = None, points_per_cell: float = 2.0):
        pts = np.asarray(points, dtype=float)
        n, d = pts.shape
        self.n, self.d = n, d
        self.p = np.zeros((n, 3))
        self.p[:, :d] = pts
        if n:
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
        else:
            lo = hi = np.zeros(d)
        extent = hi - lo
        if h is None:
            vol = float(np.prod(extent[extent > 0])) if np.any(extent > 0) else 1.0
            dims = max(int(np.count_nonzero(extent > 0)), 1)
            lam = max(n, 1) / vol
            h = (points_per_cell / lam) ** (1.0 / dims)
            # snap so an integer number of cells tiles the longest side
            longest = float(extent.max()) if n else 0.0
            if longest > 0:
                h = longest / max(1, math.floor(longest / h))
        self.h = float(h) if h > 0 else 1.0
        # degenerate (nearly flat) point sets would otherwise produce huge grids
        while np.prod(np.floor(extent / self.h) + 1) > 4 * n + 64:
            self.h *= 2.0
        self.origin = np.zeros(3)
        self.origin[:d] = lo
        shape = np.ones(3, dtype=np.int64)
        shape[:d] = np.maximum(np.floor(extent / self.h).astype(np.int64) + 1, 1)
        self.shape = shape
        cells = np.clip(np.floor((self.p - self.origin) / self.h).astype(np.int64), 0, shape - 1)
        cell_id = (cells[:, 0] * shape[1] + cells[:, 1]) * shape[2] + cells[:, 2]
        self.order = np.argsort(cell_id, kind="stable").astype(np.int64)
        ncell = int(np.prod(shape))
        self.cell_start = np.searchsorted(cell_id[self.order], np.arange(ncell + 1)).astype(np.int64)
        self.margin = 1e-9 * self.h

    def _pad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.d:
            raise DimensionMismatch(f"query has dimension {x.shape[1]}, index has {self.d}")
        q = np.zeros((x.shape[0], 3))
        q[:, : self.d] = x
        return q

    def knn(self, queries, k: int, exclude=None):
        """Indices (-1 padded) and squared distances of the k nearest points."""
        q = self._pad(queries)
        if exclude is None:
            exclude = np.full(q.shape[0], -1, dtype=np.int64)
        exclude = np.asarray(exclude, dtype=np.int64)
        if self.n == 0:
            return np.full((q.shape[0], k), -1, np.int64), np.full((q.shape[0], k), np.inf)
        return _kernels.knn_grid(self.p, self.origin, self.h, self.shape, self.cell_start,
                                 self.order, q, exclude, int(k), self.margin)

    def knn_self(self, k: int):
        """k nearest neighbours of every indexed point, excluding itself."""
        return self.knn(self.p[:, : self.d], k, np.arange(self.n, dtype=np.int64))

    def pairs_within(self, r: float):
        """Pairs ``(i, j)`` with ``i < j`` at distance ``<= r``, and their squared distances."""
        if self.n < 2:
            return np.empty((0, 2), np.int64), np.empty(0)
        return _kernels.pairs_within(self.p, self.origin, self.h, self.shape,
                                     self.cell_start, self.order, float(r))

    def count_within(self, r: float) -> np.ndarray:
        pairs, _ = self.pairs_within(r)
        return np.bincount(pairs.ravel(), minlength=self.n)

    def sector_t(self, queries, k: int, bounds: Box, rot: float, exclude=None) -> np.ndarray:
        if self.d != 2:
            raise UnsupportedDimension("sector construction needs d = 2")
        q = self._pad(queries)
        if exclude is None:
            exclude = np.full(q.shape[0], -1, dtype=np.int64)
        return _kernels.sector_t(self.p, self.origin, self.h, self.shape, self.cell_start, self.order,
                                 q, np.asarray(exclude, np.int64), int(k), bounds.lower, bounds.upper,
                                 float(rot), self.margin)


class UnsupportedDimension(ValueError):
    pass


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Configuration:
    """Finite marked point set; immutable after construction.

    ``species``/``noise`` are ``None`` for unmarked configurations. ``box`` is
    the region the configuration was sampled on, when known.
    """

    points: np.ndarray
    species: np.ndarray | None = None
    noise: np.ndarray | None = None
    box: Window | None = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 2) if pts.size == 0 else pts[:, None]
        if pts.ndim != 2 or pts.shape[1] not in (1, 2, 3):
            raise DimensionMismatch("points must be an (n, d) array with d in {1, 2, 3}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts, float))
        n = pts.shape[0]
        if (self.species is None) != (self.noise is None):
            raise ValueError("species and noise must be given together")
        if self.species is not None:
            sp = _frozen(self.species, np.int64)
            nz = _frozen(self.noise, float)
            if sp.shape != (n,) or nz.shape != (n,):
                raise ValueError("mark arrays must have one entry per point")
            object.__setattr__(self, "species", sp)
            object.__setattr__(self, "noise", nz)
        if self.box is not None and self.box.d != pts.shape[1] and n:
            raise DimensionMismatch("box dimension does not match points")

    @classmethod
    def empty(cls, d: int = 2, box: Window | None = None) -> "Configuration":
        return cls(np.empty((0, d)), box=box)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def marked(self) -> bool:
        return self.species is not None

    def __len__(self) -> int:
        return self.points.shape[0]

    @cached_property
    def index(self) -> GridIndex:
        return GridIndex(self.points)

    def subset(self, mask) -> "Configuration":
        mask = np.asarray(mask)
        if self.marked:
            return Configuration(self.points[mask], self.species[mask], self.noise[mask], self.box)
        return Configuration(self.points[mask], box=self.box)

    def restrict(self, w: Window) -> "Configuration":
        """Points inside the closed cube of ``w`` (its buffer is ignored)."""
        if len(self) == 0:
            return self
        if w.d != self.d:
            raise DimensionMismatch("window and configuration dimensions differ")
        return self.subset(w.contains(self.points))

    def with_points(self, extra, species=0, noise=0.0) -> "Configuration":
        """A new configuration with ``extra`` points appended."""
        extra = np.asarray(extra, dtype=float).reshape(-1, self.d)
        pts = np.vstack([self.points, extra])
        if self.marked:
            sp = np.concatenate([self.species, np.broadcast_to(species, len(extra))])
            nz = np.concatenate([self.noise, np.broadcast_to(noise, len(extra))])
            return Configuration(pts, sp, nz, self.box)
        return Configuration(pts, box=self.box)

    def translated(self, v) -> "Configuration":
        v = np.asarray(v, dtype=float)
        box = self.box.translated(v) if self.box is not None else None
        return Configuration(self.points + v, self.species, self.noise, box)

    def bounding_box(self) -> Box:
        if self.box is not None:
            return self.box.as_box()
        if len(self) == 0:
            return Box(np.zeros(self.d), np.zeros(self.d))
        return Box(self.points.min(axis=0), self.points.max(axis=0))

    # serialization

    def to_text(self) -> str:
        """One point per line: ``x1 ... xd species noise``."""
        sp = self.species if self.marked else np.zeros(len(self), np.int64)
        nz = self.noise if self.marked else np.zeros(len(self))
        lines = [" ".join(repr(float(v)) for v in p) + f" {int(s)} {float(e)!r}"
                 for p, s, e in zip(self.points, sp, nz)]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, d: int) -> "Configuration":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if any(len(r) != d + 2 for r in rows):
            raise ValueError(f"expected {d + 2} columns per line")
        if not rows:
            return cls.empty(d)
        arr = np.array(rows, dtype=float)
        return cls(arr[:, :d], arr[:, d].astype(np.int64), arr[:, d + 1])

    def to_json(self) -> str:
        marks = []
        if self.marked:
            marks = [[int(s), float(e)] for s, e in zip(self.species, self.noise)]
        return json.dumps({"d": self.d, "points": self.points.tolist(), "marks": marks})

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        obj = json.loads(text)
        d = int(obj["d"])
        pts = np.asarray(obj["points"], dtype=float).reshape(-1, d)
        marks = obj.get("marks") or []
        if marks:
            m = np.asarray(marks, dtype=float).reshape(-1, 2)
            return cls(pts, m[:, 0].astype(np.int64), m[:, 1])
        return cls(pts)


def knn_query(c: Configuration, x, k: int, exclude_self: bool = True) -> list[tuple[np.ndarray, float]]:
    """The ``min(k, available)`` nearest points of ``c`` to ``x``.

    Sorted by (distance, lexicographic coordinates). With ``exclude_self`` a
    point of ``c`` coinciding with ``x`` is skipped.
    """
    if len(c) == 0:
        raise ValueError("configuration is empty")
    x = np.asarray(x, dtype=float)
    if x.shape != (c.d,):
        raise DimensionMismatch("query point dimension does not match configuration")
    exclude = -1
    if exclude_self:
        hit = np.flatnonzero(np.all(c.points == x, axis=1))
        if hit.size:
            exclude = int(hit[0])
    idx, d2 = c.index.knn(x, k, np.array([exclude]))
    return [(c.points[i].copy(), math.sqrt(dd)) for i, dd in zip(idx[0], d2[0]) if i >= 0]
