"""Replicated Monte Carlo experiments and the summaries fitted to them."""
from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .fitting import FitResult, ols_fit, rate_fit, variance_scaling_fit
from .geometry import Configuration, Window
from .rng import derive_seed, float_key
from .samplers import (BooleanSpec, GibbsSpec, MaternSpec, PoissonSpec, attach_marks, sample_boolean,
                       sample_gibbs, sample_matern, sample_poisson)
from .scores import ScoreSpec, default_buffer, statistic, truncated_values


class DegenerateSample(ValueError):
    pass


class UnpairedBatches(ValueError):
    pass


ProcessSpec = PoissonSpec | MaternSpec | BooleanSpec | GibbsSpec


@dataclass(frozen=True)
class Experiment:
    """A process, a score, and how to lay the window out.

    ``buffer=None`` picks a buffer from the process and score: none for
    restricted statistics, otherwise wide enough for the score to stabilize
    inside the simulation box with high probability.
    """

    process: ProcessSpec
    score: ScoreSpec
    d: int = 2
    buffer: float | None = None
    species_law: tuple = ()
    noise_law: tuple = ("none",)
    id: str = "experiment"

    def nominal_intensity(self) -> float:
        p = self.process
        if isinstance(p, PoissonSpec):
            return p.lam
        if isinstance(p, MaternSpec):
            half = p.r / 2
            ball = math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1) * half ** self.d
            return p.lam * math.exp(-p.lam * ball)
        if isinstance(p, BooleanSpec):
            return max(p.lam * p.grain_count_mean, 1e-12)
        return p.lambda_dom

    def resolved_buffer(self) -> float:
        if self.buffer is not None:
            return float(self.buffer)
        if self.score.mode == "restricted":
            return 0.0
        if self.score.kind == "forest":
            return self.score.range_r
        if self.score.kind == "count":
            return 0.0
        return default_buffer(self.nominal_intensity(), self.score.k)

    def window(self, alpha: float) -> Window:
        return Window(alpha, self.d, buffer=self.resolved_buffer())

    def sample(self, w: Window, seed: int) -> Configuration:
        p = self.process
        s = derive_seed(seed, 0)
        if isinstance(p, PoissonSpec):
            c = sample_poisson(p, w, s)
        elif isinstance(p, MaternSpec):
            c = sample_matern(p, w, s)
        elif isinstance(p, BooleanSpec):
            c = sample_boolean(p, w, s)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                c, _ = sample_gibbs(p, w, s)
        if self.species_law or self.score.kind == "forest":
            c = attach_marks(c, self.species_law or (1.0,), self.noise_law, derive_seed(seed, 1))
        return c


@dataclass
class ReplicateBatch:
    alpha: float
    m: int
    values: np.ndarray
    seeds: list[int]
    start: int = 0
    truncated: dict[float, np.ndarray] = field(default_factory=dict)
    errors: dict[int, str] = field(default_factory=dict)
    truncated_at: float | None = None

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.values)

    def truncated_batch(self, r: float) -> "ReplicateBatch":
        return ReplicateBatch(self.alpha, self.m, self.truncated[r], list(self.seeds), self.start,
                              errors=dict(self.errors), truncated_at=r)

    def summary(self) -> dict:
        v = self.values[self.ok]
        out = {"mean": float(v.mean()) if v.size else math.nan,
               "var": float(v.var(ddof=1)) if v.size > 1 else math.nan}
        try:
            out["w1"] = w1_to_normal(standardize(v))
        except (DegenerateSample, ValueError):
            out["w1"] = math.nan
        return out


def replicate_seed(master_seed: int, alpha: float, i: int) -> int:
    return derive_seed(master_seed, float_key(alpha), i)


def run_replicate(experiment: Experiment, alpha: float, seed: int, truncation_radii: Sequence[float] = ()):
    """One sample and its statistic; returns (value, truncated values)."""
    w = experiment.window(alpha)
    c = experiment.sample(w, seed)
    want_radii = bool(truncation_radii) and experiment.score.is_knn
    full = statistic(c, Window(alpha, experiment.d), experiment.score, with_radii=want_radii)
    if not truncation_radii:
        return full.w, []
    if experiment.score.kind == "forest":
        full.radii = np.full(len(full.per_point_scores), experiment.score.range_r)
    elif experiment.score.kind == "count":
        full.radii = np.zeros(len(full.per_point_scores))
    return full.w, truncated_values(full, truncation_radii)


def _run_chunk(args):
    experiment, alpha, seeds, radii = args
    out = []
    for s in seeds:
        try:
            out.append((*run_replicate(experiment, alpha, s, radii), None))
        except Exception as exc:  # recorded per replicate, not fatal
            out.append((math.nan, [math.nan] * len(radii), f"{type(exc).__name__}: {exc}"))
    return out


def run_batch(experiment: Experiment, alpha: float, m: int, master_seed: int, start: int = 0,
              threads: int = 1, truncation_radii: Sequence[float] = ()) -> ReplicateBatch:
    """Replicates ``start .. start + m - 1``; replicate i uses its own derived seed,
    so results do not depend on scheduling or on how the range is split."""
    radii = [float(r) for r in truncation_radii]
    seeds = [replicate_seed(master_seed, alpha, i) for i in range(start, start + m)]
    if threads > 1 and m > 1:
        chunks = [seeds[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(threads) as pool:
            parts = list(pool.map(_run_chunk, [(experiment, alpha, ch, radii) for ch in chunks]))
        results = [None] * m
        for t, part in enumerate(parts):
            results[t::threads] = part
    else:
        results = _run_chunk((experiment, alpha, seeds, radii))
    values = np.array([r[0] for r in results], dtype=float)
    trunc = {r: np.array([row[1][j] for row in results], dtype=float) for j, r in enumerate(radii)}
    errors = {start + i: r[2] for i, r in enumerate(results) if r[2] is not None}
    return ReplicateBatch(alpha, m, values, seeds, start, trunc, errors)


def concat_batches(parts: Sequence[ReplicateBatch]) -> ReplicateBatch:
    parts = sorted(parts, key=lambda b: b.start)
    for a, b in zip(parts, parts[1:]):
        if a.start + a.m != b.start or a.alpha != b.alpha:
            raise ValueError("batches are not contiguous ranges of one alpha")
    keys = parts[0].truncated.keys()
    return ReplicateBatch(
        parts[0].alpha, sum(p.m for p in parts), np.concatenate([p.values for p in parts]),
        [s for p in parts for s in p.seeds], parts[0].start,
        {r: np.concatenate([p.truncated[r] for p in parts]) for r in keys},
        {i: e for p in parts for i, e in p.errors.items()})


def values_digest(values) -> str:
    """sha256 of the float64 little-endian bytes of the values."""
    return hashlib.sha256(np.asarray(values, dtype="<f8").tobytes()).hexdigest()


def standardize(values) -> np.ndarray:
    """Subtract the sample mean, divide by the unbiased sample deviation."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DegenerateSample("need at least two values")
    sd = v.std(ddof=1)
    if not sd > 0:
        raise DegenerateSample("zero sample variance")
    return (v - v.mean()) / sd


def w1_to_normal(values, auto_standardize: bool = False) -> float:
    """Quantile-coupling W1 distance between the sample and N(0, 1):
    mean of |x_(i) - Phi^-1((i - 1/2) / m)|."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    if auto_standardize:
        v = standardize(v)
    m = v.size
    q = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return float(np.abs(np.sort(v) - q).mean())


def normal_vs_normal_bound(mu: float, sigma: float) -> float:
    """Upper bound on W1(N(mu, sigma^2), N(0, 1)): |mu| + 2 |sigma - 1| / sqrt(2 pi)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return abs(mu) + 2.0 / math.sqrt(2 * math.pi) * abs(sigma - 1.0)


def true_w1_normal(mu: float, sigma: float) -> float:
    """W1(N(mu, sigma^2), N(0, 1)) by quadrature of the quantile difference."""
    from scipy import integrate

    kinks = []
    if sigma != 1.0:
        u0 = stats.norm.cdf(-mu / (sigma - 1.0))
        if 0.0 < u0 < 1.0:
            kinks = [u0]
    val, _ = integrate.quad(lambda u: abs(mu + (sigma - 1.0) * stats.norm.ppf(u)), 0.0, 1.0,
                            limit=200, points=kinks or None)
    return val


def batch_variance_fit(batches: Sequence[ReplicateBatch]) -> FitResult:
    return variance_scaling_fit([(b.alpha, b.summary()["var"]) for b in batches])


def batch_rate_fit(batches: Sequence[ReplicateBatch], log_correction_power: float = 0) -> FitResult:
    return rate_fit([(b.alpha, b.summary()["w1"]) for b in batches], log_correction_power)


def truncation_defect(batch_full: ReplicateBatch, batch_truncated: ReplicateBatch):
    """Fraction of paired replicates whose truncated value differs from the full one.

    Returns (rate, table) with one table row ``{alpha, r, defect_rate, m}``.
    """
    if batch_full.seeds != batch_truncated.seeds or batch_full.alpha != batch_truncated.alpha:
        raise UnpairedBatches("batches must share alpha and replicate seeds")
    ok = batch_full.ok & np.isfinite(batch_truncated.values)
    n = int(ok.sum())
    rate = float(np.mean(batch_full.values[ok] != batch_truncated.values[ok])) if n else math.nan
    row = {"alpha": batch_full.alpha, "r": batch_truncated.truncated_at, "defect_rate": rate, "m": n}
    return rate, [row]


def defect_table(batch: ReplicateBatch) -> list[dict]:
    """Defect rates for every truncation radius stored on the batch."""
    rows = []
    for r in sorted(batch.truncated):
        rows += truncation_defect(batch, batch.truncated_batch(r))[1]
    return rows


def defect_slope_fit(rows: Sequence[dict]) -> FitResult:
    """Slope of log defect rate on r, over rows with a positive rate."""
    pts = [(row["r"], math.log(row["defect_rate"])) for row in rows if row["defect_rate"] > 0]
    if len(pts) < 3:
        raise ValueError("need at least three radii with positive defect rate")
    x, y = zip(*pts)
    return ols_fit(x, y)


def moment_growth_check(batches: Sequence[ReplicateBatch], order: int) -> dict:
    """Empirical E|W|^order per alpha and the fitted log-log growth exponent.

    ``flag`` is set when the exponent exceeds 2 * order - 1 by more than two
    standard errors.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    rows = []
    for b in batches:
        v = b.values[b.ok]
        rows.append({"alpha": b.alpha, "moment": float(np.mean(np.abs(v) ** order))})
    fit = ols_fit(np.log([r["alpha"] for r in rows]), np.log([r["moment"] for r in rows]))
    limit = 2 * order - 1
    se = fit.stderr if math.isfinite(fit.stderr) else 0.0
    return {"order": order, "rows": rows, "fit": fit, "limit": limit,
            "flag": bool(fit.exponent > limit + 2 * se)}


def tail_decay_fit(samples, grid=None, min_count: int = 10) -> FitResult:
    """Slope of log P(X >= s) on s over a grid where at least ``min_count``
    samples exceed s."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    if grid is None:
        hi = x[max(m - min_count, 0)]
        grid = np.linspace(0.0, hi, 12)
    surv = np.array([(m - np.searchsorted(x, s, side="left")) / m for s in grid])
    keep = surv * m >= min_count
    if keep.sum() < 3:
        raise ValueError("too few grid points with enough tail samples")
    return ols_fit(np.asarray(grid)[keep], np.log(surv[keep]))
