"""Stabilizing score functions and the window statistics built from them.

Per-point k-NN scores are half the sum of incident edge lengths; the
statistic over a window is the (exactly rounded) sum over in-window points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin

from . import _kernels
from .geometry import Box, Configuration, GridIndex, UnsupportedDimension, Window

SECTOR_ROTATION = math.pi / 12
KINDS = ("knn_undirected", "knn_directed", "forest", "count")
MODES = ("restricted", "unrestricted")


class MissingMarks(ValueError):
    pass


class PreconditionViolated(ValueError):
    pass


@dataclass(frozen=True)
class ScoreSpec:
    kind: str = "knn_undirected"
    k: int = 1
    range_r: float = 1.0
    eta_max: float = 5.0
    mode: str = "restricted"
    base_intercept: float = 1.0
    base_slope: float = 0.2
    crowding: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.k < 1 or self.range_r <= 0 or self.eta_max <= 0:
            raise ValueError("need k >= 1, range_r > 0, eta_max > 0")

    @property
    def is_knn(self) -> bool:
        return self.kind.startswith("knn")


@dataclass
class StatisticValue:
    w: float
    per_point_scores: np.ndarray | None = None
    radii: np.ndarray | None = None
    points: np.ndarray | None = field(default=None, repr=False)


def default_buffer(lam: float, k: int, tail: float = 1e-6) -> float:
    """Buffer width for unrestricted k-NN statistics on a Poisson-like input.

    The squared sector time of one sector is Gamma(k + 1, 6 / (lam * pi)); the
    buffer is three times its upper ``tail`` quantile.
    """
    t2 = stats.gamma.ppf(1.0 - tail, k + 1, scale=6.0 / (lam * math.pi))
    return 3.0 * math.sqrt(t2)


def _knn_scores(points: np.ndarray, k: int, directed: bool, index: GridIndex | None = None) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    index = index or GridIndex(points)
    nbr, _ = index.knn_self(k)
    return _kernels.knn_point_scores(index.p, nbr, directed)


def _scoring_set(c: Configuration, w: Window, spec: ScoreSpec):
    """Points the graph is built on, and the mask of those inside the window."""
    if spec.mode == "restricted":
        sub = c.restrict(w)
        return sub, np.ones(len(sub), dtype=bool)
    inside = w.contains(c.points) if len(c) else np.zeros(0, dtype=bool)
    return c, inside


def _region(c: Configuration, w: Window, mode: str) -> Box:
    if mode == "restricted":
        return w.as_box()
    return c.bounding_box()


def point_scores(c: Configuration, w: Window, spec: ScoreSpec) -> tuple[Configuration, np.ndarray, np.ndarray]:
    """(scoring set, per-point scores on it, in-window mask)."""
    base, inside = _scoring_set(c, w, spec)
    if spec.kind == "count":
        scores = np.ones(len(base))
    elif spec.kind == "forest":
        scores = _forest_scores(base, spec)
    else:
        scores = _knn_scores(base.points, spec.k, spec.kind == "knn_directed", base.index)
    return base, scores, inside


def sector_radii(c: Configuration, w: Window, k: int, mode: str = "restricted") -> np.ndarray:
    """R = 3t for every in-window point of ``c``, in scoring-set order."""
    if c.d != 2:
        raise UnsupportedDimension("sector radii need d = 2")
    base, inside = _scoring_set(c, w, ScoreSpec(k=k, mode=mode))
    idx = np.flatnonzero(inside)
    t = base.index.sector_t(base.points[idx], k, _region(c, w, mode), SECTOR_ROTATION, exclude=idx)
    return 3.0 * t


def sector_radius(c: Configuration, x, w: Window, k: int, mode: str = "restricted") -> float:
    """Stabilization radius 3t of the point ``x`` (added to ``c`` if absent)."""
    if c.d != 2:
        raise UnsupportedDimension("sector radius needs d = 2")
    x = np.asarray(x, dtype=float)
    base, _ = _scoring_set(c, w, ScoreSpec(k=k, mode=mode))
    hit = np.flatnonzero(np.all(base.points == x, axis=1)) if len(base) else np.empty(0, int)
    exclude = [int(hit[0])] if hit.size else [-1]
    t = base.index.sector_t(x[None, :], k, _region(c, w, mode), SECTOR_ROTATION, exclude=exclude)
    return float(3.0 * t[0])


def knn_statistic(c: Configuration, w: Window, spec: ScoreSpec, with_radii: bool = False) -> StatisticValue:
    """Total k-NN score over the in-window points of ``c``."""
    if not spec.is_knn and spec.kind != "count":
        raise ValueError("knn_statistic needs a k-NN or count score")
    base, scores, inside = point_scores(c, w, spec)
    sel = scores[inside]
    radii = sector_radii(c, w, spec.k, spec.mode) if with_radii else None
    return StatisticValue(math.fsum(sel), sel, radii, base.points[inside])


def statistic(c: Configuration, w: Window, spec: ScoreSpec, with_radii: bool = False) -> StatisticValue:
    """Dispatch on the score kind."""
    if spec.kind == "forest":
        return forest_statistic(c, w, spec)
    return knn_statistic(c, w, spec, with_radii)


def truncated_statistic(c: Configuration, w: Window, spec: ScoreSpec, r: float,
                        full: StatisticValue | None = None) -> StatisticValue:
    """Sum of per-point scores over in-window points whose radius is at most ``r``.

    ``full`` may carry precomputed scores and radii of the same input.
    """
    if full is None or full.radii is None:
        full = statistic(c, w, spec, with_radii=spec.is_knn)
    if spec.kind == "forest":
        radii = np.full(len(full.per_point_scores), spec.range_r)
    elif spec.kind == "count":
        radii = np.zeros(len(full.per_point_scores))
    else:
        radii = full.radii
    keep = radii <= r
    return StatisticValue(math.fsum(full.per_point_scores[keep]), full.per_point_scores[keep], radii[keep])


def truncated_values(full: StatisticValue, radii_grid) -> list[float]:
    """Truncated statistic at each radius in ``radii_grid`` from one full evaluation."""
    s = full.per_point_scores
    return [math.fsum(s[full.radii <= r]) for r in radii_grid]


def _score_of(points: np.ndarray, i: int, spec: ScoreSpec, species=None, noise=None) -> float:
    if spec.kind == "count":
        return 1.0
    if spec.kind == "forest":
        conf = Configuration(points, species, noise)
        return float(_forest_scores(conf, spec)[i])
    return float(_knn_scores(points, spec.k, spec.kind == "knn_directed")[i])


def stabilization_check(c: Configuration, x, w: Window, spec: ScoreSpec, injected) -> bool:
    """True iff the score of ``x`` is bit-identical after adding ``injected``.

    ``injected`` must lie beyond the stabilization radius of ``x`` (and inside
    the window in restricted mode); otherwise :class:`PreconditionViolated`.
    """
    x = np.asarray(x, dtype=float)
    inj = np.asarray(injected, dtype=float).reshape(-1, c.d)
    if spec.kind == "forest":
        radius = spec.range_r
    elif spec.kind == "count":
        radius = 0.0
    else:
        radius = sector_radius(c, x, w, spec.k, spec.mode)
    if len(inj):
        dist = np.sqrt(((inj - x) ** 2).sum(axis=1))
        if np.any(dist <= radius):
            raise PreconditionViolated("injected point within the stabilization radius")
        if spec.is_knn and not np.all(_region(c, w, spec.mode).contains(inj)):
            raise PreconditionViolated("injected point outside the scoring region")
    base, _ = _scoring_set(c, w, spec)
    hit = np.flatnonzero(np.all(base.points == x, axis=1)) if len(base) else np.empty(0, int)
    if hit.size == 0:
        base = base.with_points(x)
        i = len(base) - 1
    else:
        i = int(hit[0])
    before = _score_of(base.points, i, spec, base.species, base.noise)
    grown = base.with_points(inj)
    after = _score_of(grown.points, i, spec, grown.species, grown.noise)
    return before == after


def score_bound_holds(c: Configuration, w: Window, k: int) -> np.ndarray:
    """Per in-window point: undirected and directed scores are at most 3.5 k t."""
    if c.d != 2:
        raise UnsupportedDimension("score bound needs d = 2")
    sub = c.restrict(w)
    if len(sub) == 0:
        return np.zeros(0, dtype=bool)
    t = sector_radii(sub, w, k) / 3.0
    und = _knn_scores(sub.points, k, False, sub.index)
    dirs = _knn_scores(sub.points, k, True, sub.index)
    cap = 3.5 * k * t
    return (und <= cap) & (dirs <= cap)


def score_bound_check(c: Configuration, x, w: Window, k: int) -> bool:
    """Score of ``x`` within the restricted configuration is at most 3.5 k t."""
    x = np.asarray(x, dtype=float)
    sub = c.restrict(w)
    hit = np.flatnonzero(np.all(sub.points == x, axis=1)) if len(sub) else np.empty(0, int)
    if hit.size == 0:
        sub = sub.with_points(x)
        i = len(sub) - 1
    else:
        i = int(hit[0])
    t = sector_radius(sub, x, w, k) / 3.0
    und = _knn_scores(sub.points, k, False)[i]
    dirs = _knn_scores(sub.points, k, True)[i]
    return bool(max(und, dirs) <= 3.5 * k * t)


def _forest_scores(c: Configuration, spec: ScoreSpec) -> np.ndarray:
    if not c.marked:
        raise MissingMarks("forest score needs species and noise marks")
    n = len(c)
    crowd = np.zeros(n, dtype=np.int64)
    if n > 1:
        pairs, d2 = c.index.pairs_within(spec.range_r)
        close = pairs[d2 < spec.range_r ** 2]
        crowd = np.bincount(close.ravel(), minlength=n)
    base = spec.base_intercept + spec.base_slope * c.species
    eta = np.clip(base - spec.crowding * crowd, 0.0, spec.eta_max)
    return np.maximum(eta + c.noise, 0.0)


def forest_statistic(c: Configuration, w: Window, spec: ScoreSpec) -> StatisticValue:
    """Total log volume: sum over in-window trees of (eta + noise) floored at 0.

    eta(x) = clamp(base(species) - crowding * #neighbours closer than
    ``range_r``, 0, eta_max); neighbours come from the scoring set.
    """
    if spec.kind != "forest":
        raise ValueError("forest_statistic needs kind='forest'")
    if not c.marked:
        raise MissingMarks("forest score needs species and noise marks")
    base, inside = _scoring_set(c, w, spec)
    scores = _forest_scores(base, spec)[inside]
    return StatisticValue(math.fsum(scores), scores, None, base.points[inside])


class StatisticTransformer(TransformerMixin, BaseEstimator):
    """Maps a sequence of configurations to their window statistic.

    Stateless: ``fit`` only validates parameters. ``transform`` returns an
    ``(n, 1)`` array of statistic values.
    """

    def __init__(self, alpha=64.0, d=2, kind="knn_undirected", k=1, mode="restricted",
                 range_r=1.0, eta_max=5.0):
        self.alpha = alpha
        self.d = d
        self.kind = kind
        self.k = k
        self.mode = mode
        self.range_r = range_r
        self.eta_max = eta_max

    def _spec(self) -> ScoreSpec:
        return ScoreSpec(kind=self.kind, k=self.k, range_r=self.range_r, eta_max=self.eta_max, mode=self.mode)

    def fit(self, X, y=None):
        self._spec()
        Window(self.alpha, self.d)
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        spec = self._spec()
        w = Window(self.alpha, self.d)
        return np.array([[statistic(c, w, spec).w] for c in X])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
