"""Seeded samplers for Poisson, Matérn hard-core, Boolean and Gibbs processes.

Every sampler is a pure function of ``(spec, box, seed)``. Points are drawn on
the window's simulation box (the cube enlarged by its buffer).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, Configuration, GridIndex, Window, diam
from .rng import derive_seed, make_rng

MAX_EXPECTED_POINTS = 1e7
# exponential grain radii are cut at this upper-tail mass
GRAIN_TAIL_MASS = 1e-9


class TooManyPoints(ValueError):
    pass


class HorizonExhausted(UserWarning):
    """Coupling from the past did not close within the horizon budget."""


@dataclass(frozen=True)
class PoissonSpec:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("intensity must be positive")


@dataclass(frozen=True)
class MaternSpec:
    lam: float
    r: float

    def __post_init__(self):
        if not (self.lam > 0 and self.r > 0):
            raise ValueError("intensity and hard-core range must be positive")


@dataclass(frozen=True)
class GrainLaw:
    """Radius law of a grain: ``bounded`` (fixed rho) or ``exponential``
    (r0 plus an Exp(rate) excess, truncated far in the tail)."""

    kind: str = "bounded"
    rho: float = 1.0
    rate: float = 1.0
    r0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bounded", "exponential"):
            raise ValueError(f"unknown grain law {self.kind!r}")
        if self.kind == "bounded" and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.kind == "exponential" and not (self.rate > 0 and self.r0 >= 0):
            raise ValueError("rate must be positive and r0 nonnegative")

    @property
    def reach(self) -> float:
        if self.kind == "bounded":
            return self.rho
        return self.r0 + math.log(1.0 / GRAIN_TAIL_MASS) / self.rate

    def draw_radii(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bounded":
            return np.full(n, self.rho)
        cap = math.log(1.0 / GRAIN_TAIL_MASS) / self.rate
        return self.r0 + np.minimum(rng.exponential(1.0 / self.rate, n), cap)


@dataclass(frozen=True)
class BooleanSpec:
    lam: float
    grain_count_mean: float
    grain: GrainLaw = GrainLaw()

    def __post_init__(self):
        if not self.lam > 0 or self.grain_count_mean < 0:
            raise ValueError("germ intensity must be positive, grain mean nonnegative")


@dataclass(frozen=True)
class PairPotential:
    """Finite-range pair potential.

    ``zero``: phi = 0. ``hardcore``: phi = inf below r0. ``step``: phi = inf
    below r0 (if r0 > 0) and ``height`` on [r0, r_phi).
    """

    kind: str = "zero"
    r0: float = 0.0
    r_phi: float = 0.0
    height: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "hardcore", "step"):
            raise ValueError(f"unknown potential {self.kind!r}")
        if self.r0 < 0 or self.r_phi < 0 or self.height < 0:
            raise ValueError("potential parameters must be nonnegative")
        if self.kind == "hardcore" and not self.r0 > 0:
            raise ValueError("hard-core potential needs r0 > 0")
        if self.kind == "step" and not self.r_phi > self.r0:
            raise ValueError("step potential needs r_phi > r0")

    @property
    def support(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "hardcore":
            return self.r0
        return self.r_phi

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.kind == "step":
            out[r < self.r_phi] = self.height
        if self.kind in ("hardcore", "step") and self.r0 > 0:
            out[r < self.r0] = np.inf
        return out


@dataclass(frozen=True)
class GibbsSpec:
    beta: float
    lambda_dom: float
    potential: PairPotential = PairPotential()
    horizon: float | None = None
    max_doublings: int = 3
    burn_in: float | None = None

    def __post_init__(self):
        if not (self.lambda_dom > 0 and self.beta >= 0):
            raise ValueError("lambda_dom must be positive and beta nonnegative")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def initial_horizon(self) -> float:
        return self.horizon if self.horizon is not None else 20.0 / self.lambda_dom

    @property
    def burn_in_time(self) -> float:
        return self.burn_in if self.burn_in is not None else 50.0 / self.lambda_dom


@dataclass(frozen=True)
class ClanRecord:
    clan_points: np.ndarray
    clan_diameter: float
    converged: bool


def _uniform_in(rng: np.random.Generator, n: int, box: Box) -> np.ndarray:
    return box.lower + (box.upper - box.lower) * rng.random((n, box.d))


def _poisson_in(rng: np.random.Generator, lam: float, box: Box) -> np.ndarray:
    mean = lam * box.volume
    if mean > MAX_EXPECTED_POINTS:
        raise TooManyPoints(f"expected {mean:.3g} points exceeds {MAX_EXPECTED_POINTS:.0e}")
    return _uniform_in(rng, int(rng.poisson(mean)), box)


def sample_poisson(spec: PoissonSpec, box: Window, seed: int) -> Configuration:
    region = box.sim_box()
    pts = _poisson_in(make_rng(seed), spec.lam, region.as_box())
    return Configuration(pts, box=region)


def sample_matern(spec: MaternSpec, box: Window, seed: int) -> Configuration:
    """Matérn hard-core thinning: a primary Poisson point survives iff no other
    primary point lies at distance < r/2."""
    region = box.sim_box()
    primary = _poisson_in(make_rng(seed), spec.lam, region.as_box().enlarged(spec.r / 2))
    keep = np.ones(len(primary), dtype=bool)
    if len(primary) > 1:
        pairs, d2 = GridIndex(primary).pairs_within(spec.r / 2)
        close = pairs[d2 < (spec.r / 2) ** 2]
        keep[close.ravel()] = False
    pts = primary[keep]
    return Configuration(pts[region.contains(pts)] if len(pts) else pts, box=region)


def _uniform_in_balls(rng, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    n, d = centers.shape
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = radii * rng.random(n) ** (1.0 / d)
    return centers + direction * radius[:, None]


def sample_boolean(spec: BooleanSpec, box: Window, seed: int, return_germs: bool = False):
    """Germ-grain union with Poisson germs; each germ carries Poisson(mean)
    points uniform in a ball whose radius follows the grain law."""
    rng = make_rng(seed)
    region = box.sim_box()
    germs = _poisson_in(rng, spec.lam, region.as_box().enlarged(spec.grain.reach))
    counts = rng.poisson(spec.grain_count_mean, len(germs))
    radii = spec.grain.draw_radii(rng, len(germs))
    owner = np.repeat(np.arange(len(germs)), counts)
    pts = _uniform_in_balls(rng, germs[owner], radii[owner]) if owner.size else np.empty((0, box.d))
    inside = region.contains(pts) if len(pts) else np.zeros(0, bool)
    conf = Configuration(pts[inside], box=region)
    if return_germs:
        return conf, germs
    return conf


def attach_marks(c: Configuration, species_law: Sequence[float] = (1.0,), noise_law: tuple = ("none",),
                 seed: int = 0) -> Configuration:
    """Attach i.i.d. marks independent of positions.

    ``species_law`` holds category probabilities; ``noise_law`` is
    ``("none",)``, ``("gaussian", sigma)`` or ``("uniform", a, b)``.
    """
    probs = np.asarray(species_law, dtype=float)
    if probs.ndim != 1 or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-9):
        raise ValueError("species_law must be a probability vector")
    rng = make_rng(seed)
    n = len(c)
    species = rng.choice(len(probs), size=n, p=probs)
    kind = noise_law[0]
    if kind == "none":
        noise = np.zeros(n)
    elif kind == "gaussian":
        noise = rng.normal(0.0, float(noise_law[1]), n)
    elif kind == "uniform":
        noise = rng.uniform(float(noise_law[1]), float(noise_law[2]), n)
    else:
        raise ValueError(f"unknown noise law {kind!r}")
    return Configuration(c.points, species, noise, c.box)


def restrict(c: Configuration, w: Window) -> Configuration:
    return c.restrict(w)


class _DominatingProcess:
    """Free birth-death process on a box, generated backwards from time 0.

    Births arrive at rate ``lambda_dom`` per unit volume, lifetimes are Exp(1).
    Points alive at time 0 come first; earlier points are generated in
    horizon chunks of death times, so extending the horizon never changes
    what has already been drawn.
    """

    def __init__(self, spec: GibbsSpec, region: Box, seed: int):
        self.spec = spec
        self.region = region
        self.seed = seed
        rng = make_rng(derive_seed(seed, 0))
        pos = _poisson_in(rng, spec.lambda_dom, region)
        n = len(pos)
        self.pos = [pos]
        self.birth = [-rng.exponential(1.0, n)]
        self.death = [np.full(n, np.inf)]
        self.u = [rng.random(n)]
        self.horizon = 0.0
        self.chunks = 0
        self.n_alive0 = n
        self._pairs = None

    def extend(self, new_horizon: float):
        rng = make_rng(derive_seed(self.seed, 1 + self.chunks))
        length = new_horizon - self.horizon
        mean = self.spec.lambda_dom * self.region.volume * length
        if mean > MAX_EXPECTED_POINTS:
            raise TooManyPoints("dominating process too large")
        n = int(rng.poisson(mean))
        death = -self.horizon - length * rng.random(n)
        self.pos.append(_uniform_in(rng, n, self.region))
        self.death.append(death)
        self.birth.append(death - rng.exponential(1.0, n))
        self.u.append(rng.random(n))
        self.horizon = new_horizon
        self.chunks += 1
        self._pairs = None

    def arrays(self):
        return (np.concatenate(self.pos), np.concatenate(self.birth),
                np.concatenate(self.death), np.concatenate(self.u))

    def neighbours(self):
        """CSR adjacency (start, nbr) of points closer than the potential's support."""
        if self._pairs is None:
            pos = np.concatenate(self.pos)
            n = len(pos)
            support = self.spec.potential.support
            pairs = np.empty((0, 2), np.int64)
            if support > 0 and n > 1:
                pairs, d2 = GridIndex(pos).pairs_within(support)
                pairs = pairs[d2 < support * support]
            both = np.concatenate([pairs, pairs[:, ::-1]])
            both = both[np.argsort(both[:, 0], kind="stable")]
            start = np.searchsorted(both[:, 0], np.arange(n + 1))
            self._pairs = (start, both[:, 1].copy())
        return self._pairs

    def clan(self, targets: np.ndarray):
        """Ancestor clan of the given points alive at time 0.

        Returns (member indices, closed) where ``closed`` is False if some
        member was born before the current horizon.
        """
        _, birth, death, _ = self.arrays()
        start, nbr = self.neighbours()
        seen = set(int(t) for t in targets)
        stack = list(seen)
        closed = True
        while stack:
            p = stack.pop()
            b = birth[p]
            if b < -self.horizon:
                closed = False
                continue
            for q in nbr[start[p]:start[p + 1]].tolist():
                if q not in seen and birth[q] < b < death[q]:
                    seen.add(q)
                    stack.append(q)
        return np.array(sorted(seen), dtype=np.int64), closed

    def resolve(self, members: np.ndarray, beta: float) -> np.ndarray:
        """Accept/reject clan members forward in time; returns acceptance flags."""
        pos, birth, death, u = self.arrays()
        start, nbr = self.neighbours()
        phi = self.spec.potential
        accepted = {}
        for p in sorted(members.tolist(), key=lambda i: birth[i]):
            b = birth[p]
            live = [q for q in nbr[start[p]:start[p + 1]].tolist() if accepted.get(q, False) and birth[q] < b < death[q]]
            if live:
                r = np.sqrt(((pos[live] - pos[p]) ** 2).sum(axis=1))
                energy = float(phi(r).sum())
            else:
                energy = 0.0
            prob = 0.0 if math.isinf(energy) else math.exp(-beta * energy)
            accepted[p] = bool(u[p] < prob)
        return np.array([accepted[int(p)] for p in members], dtype=bool)

    def run_clan(self, target_region: Box):
        """Extend the horizon until the clan of ``target_region`` closes.

        Returns (members, closed).
        """
        horizon = self.spec.initial_horizon
        for attempt in range(self.spec.max_doublings + 1):
            if self.horizon < horizon:
                self.extend(horizon)
            pos0 = self.pos[0]
            targets = np.flatnonzero(target_region.contains(pos0)) if len(pos0) else np.empty(0, np.int64)
            members, closed = self.clan(targets)
            if closed:
                return members, True
            horizon *= 2
        return members, False


def _forward_burn_in(spec: GibbsSpec, region: Box, seed: int) -> np.ndarray:
    """Forward birth-death simulation from the empty configuration."""
    rng = make_rng(derive_seed(seed, 10_000))
    phi = spec.potential
    vol = region.volume
    birth_rate = spec.lambda_dom * vol
    pts = np.empty((0, region.d))
    t = 0.0
    while True:
        total = birth_rate + len(pts)
        t += rng.exponential(1.0 / total)
        if t > spec.burn_in_time:
            return pts
        if rng.random() * total < birth_rate:
            x = _uniform_in(rng, 1, region)
            if len(pts):
                r = np.sqrt(((pts - x) ** 2).sum(axis=1))
                energy = float(phi(r).sum())
            else:
                energy = 0.0
            prob = 0.0 if math.isinf(energy) else math.exp(-spec.beta * energy)
            if rng.random() < prob:
                pts = np.vstack([pts, x])
        else:
            pts = np.delete(pts, rng.integers(len(pts)), axis=0)


def sample_gibbs(spec: GibbsSpec, box: Window, seed: int) -> tuple[Configuration, ClanRecord]:
    """Perfect simulation of the finite-volume Gibbs process on the simulation box.

    Dominated coupling from the past through ancestor clans: a dominating birth
    at x is accepted with probability exp(-beta * Delta(x, accepted points alive
    at that moment)). If the clan does not close after the allowed horizon
    doublings, a forward burn-in sample is returned with ``converged=False``
    and a :class:`HorizonExhausted` warning.
    """
    region = box.sim_box().as_box()
    dom = _DominatingProcess(spec, region, seed)
    members, closed = dom.run_clan(region)
    pos = np.concatenate(dom.pos)
    clan_pts = pos[members]
    if not closed:
        warnings.warn(f"ancestor clan not closed within horizon {dom.horizon:g}; "
                      "falling back to forward burn-in", HorizonExhausted, stacklevel=2)
        pts = _forward_burn_in(spec, region, seed)
        return (Configuration(pts, box=box.sim_box()),
                ClanRecord(clan_pts, diam(clan_pts) if len(clan_pts) else 0.0, False))
    acc = dom.resolve(members, spec.beta)
    alive0 = members < dom.n_alive0
    pts = pos[members[acc & alive0]]
    conf = Configuration(pts if len(pts) else np.empty((0, region.d)), box=box.sim_box())
    return conf, ClanRecord(clan_pts, diam(clan_pts) if len(clan_pts) else 0.0, True)


def ancestor_clan(spec: GibbsSpec, target: Box | Window, box: Window, seed: int) -> ClanRecord:
    """Ancestor clan of the points alive at time 0 inside ``target``."""
    target = target.as_box() if isinstance(target, Window) else target
    dom = _DominatingProcess(spec, box.sim_box().as_box(), seed)
    members, closed = dom.run_clan(target)
    pts = np.concatenate(dom.pos)[members]
    return ClanRecord(pts, diam(pts) if len(pts) else 0.0, closed)
