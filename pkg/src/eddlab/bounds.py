"""Closed-form beta-mixing bounds and the exponential-decay dependence predicate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import Box, Window, diam, set_distance
from .rng import derive_seed
from .samplers import GibbsSpec, HorizonExhausted, _DominatingProcess


class DistBelowEnvelope(ValueError):
    pass


class SeparationTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class EDDParams:
    """Constants of the diameter-form decay bound
    theta1 (diam(A)^theta0 v 1)(diam(B)^theta0 v 1) exp(-theta2 d(A, B)),
    valid once d(A, B) >= theta3 ln(diam(A) v diam(B) v theta4)."""

    theta0: float
    theta1: float
    theta2: float
    theta3: float
    theta4: float

    def __post_init__(self):
        if self.theta0 < 0 or min(self.theta1, self.theta2, self.theta3, self.theta4) <= 0:
            raise ValueError("need theta0 >= 0 and theta1..theta4 > 0")


@dataclass(frozen=True)
class DPPKernelEnvelope:
    """Kernel sup-norm and the envelope omega(r) <= c1 exp(-c2 exp(c3 r)), r >= c4."""

    k_sup: float
    c1: float
    c2: float
    c3: float
    c4: float = 0.0

    def __post_init__(self):
        if min(self.k_sup, self.c1, self.c2, self.c3) <= 0 or self.c4 < 0:
            raise ValueError("envelope constants must be positive")

    def omega(self, r: float) -> float:
        return self.c1 * math.exp(-self.c2 * math.exp(self.c3 * r))


def ball_volume_constant(d: int) -> float:
    """kappa_d with Vol(A) <= kappa_d diam(A)^d (ball of diameter 1)."""
    return math.pi ** (d / 2) / (2 ** d * math.gamma(d / 2 + 1))


def ball_volume(r: float, d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


def ball_surface(d: int) -> float:
    """Surface measure of the unit sphere in R^d (dV/dr = this * r^(d-1))."""
    return d * math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def edd_from_volume(t0: float, t1: float, t2: float, t3: float, t4: float, d: int) -> EDDParams:
    """Diameter-form constants implied by volume-form constants.

    Uses Vol <= kappa_d diam^d with kappa_d <= 1 for d <= 3:
    (Vol^t0 v 1) <= max(1, kappa_d^t0) (diam^(d t0) v 1), and
    t3 ln(Vol v t4) <= d t3 ln(diam v t4^(1/d)). theta4 is raised to at least e.
    """
    if t0 < 0 or min(t1, t2, t3, t4) <= 0:
        raise ValueError("need t0 >= 0 and positive t1..t4")
    kappa = ball_volume_constant(d)
    scale = max(1.0, kappa ** t0)
    return EDDParams(d * t0, t1 * scale * scale, t2, d * t3, max(t4 ** (1.0 / d), math.e))


def edd_bound(p: EDDParams, diam_a: float, diam_b: float, dist: float) -> tuple[bool, float]:
    diam_a, diam_b = sorted((diam_a, diam_b))  # exact symmetry in (A, B)
    applies = dist >= p.theta3 * math.log(max(diam_a, diam_b, p.theta4))
    value = (p.theta1 * max(diam_a ** p.theta0, 1.0) * max(diam_b ** p.theta0, 1.0)
             * math.exp(-p.theta2 * dist))
    return applies, (value if applies else math.nan)


def edd_predicate(p: EDDParams, a, b) -> tuple[bool, float]:
    """(separation condition holds, bound value or nan) for two boxes or point sets."""
    return edd_bound(p, diam(a), diam(b), set_distance(a, b))


def volume_form_bound(t0, t1, t2, t3, t4, vol_a, vol_b, dist) -> tuple[bool, float]:
    vol_a, vol_b = sorted((vol_a, vol_b))
    applies = dist >= t3 * math.log(max(vol_a, vol_b, t4))
    value = t1 * max(vol_a ** t0, 1.0) * max(vol_b ** t0, 1.0) * math.exp(-t2 * dist)
    return applies, (value if applies else math.nan)


def dpp_log_bound(env: DPPKernelEnvelope, vol_a: float, vol_b: float, dist: float) -> float:
    """Natural log of :func:`dpp_beta_bound` (-inf when a volume is zero)."""
    if dist < env.c4:
        raise DistBelowEnvelope(f"dist {dist} below envelope threshold {env.c4}")
    if vol_a < 0 or vol_b < 0:
        raise ValueError("volumes must be nonnegative")
    if vol_a == 0 or vol_b == 0:
        return -math.inf
    vol_a, vol_b = sorted((vol_a, vol_b))
    k = env.k_sup
    return (math.log(2 * vol_a * vol_b) + math.log1p(2 * vol_a * k) + math.log1p(2 * vol_b * k)
            + 2 * (vol_a + vol_b) * k + 2 * (math.log(env.c1) - env.c2 * math.exp(env.c3 * dist)))


def dpp_beta_bound(env: DPPKernelEnvelope, vol_a: float, vol_b: float, dist: float) -> float:
    """2 pA pB (1 + 2 pA K)(1 + 2 pB K) exp(2 (pA + pB) K) omega(dist)^2.

    Reported raw; values above 1 carry no information beyond beta <= 1.
    """
    return math.exp(dpp_log_bound(env, vol_a, vol_b, dist))


def _tail_moment(n: int, a: float, c: float) -> float:
    """int_a^inf r^n exp(-c r) dr / exp(-c a) = sum_j n!/(n-j)! a^(n-j) / c^(j+1)."""
    total = 0.0
    fall = 1.0
    for j in range(n + 1):
        total += fall * a ** (n - j) / c ** (j + 1)
        fall *= n - j
    return total


def _check_boolean(c2, r0, r_a, r_b, sep, d):
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if c2 <= 0 or r0 < 0 or r_a < 0 or r_b < 0:
        raise ValueError("need c2 > 0 and nonnegative radii")
    if sep < 4 * r0:
        raise SeparationTooSmall(f"separation {sep} below 4 * r0 = {4 * r0}")


def boolean_beta_bound(lam: float, c1: float, c2: float, r0: float, r_a: float, r_b: float,
                       sep: float, d: int) -> float:
    """Two-term bound for a Boolean model with grain tail c1 exp(-c2 r).

    sum_i [c1 lam exp(-c2 R/4) V(r_i + R/4)
           + c1 lam int_{r_i + R/4}^inf exp(-c2 (r - r_i)) dV(r)]
    over the two balls of radii r_a, r_b at separation R, with the integral in
    closed form.
    """
    _check_boolean(c2, r0, r_a, r_b, sep, d)
    s = ball_surface(d)
    total = 0.0
    for r in sorted((r_a, r_b)):
        a = r + sep / 4
        first = math.exp(-c2 * sep / 4) * ball_volume(a, d)
        # exp(c2 r) * exp(-c2 a) = exp(-c2 R/4)
        second = math.exp(-c2 * sep / 4) * s * _tail_moment(d - 1, a, c2)
        total += c1 * lam * (first + second)
    return total


def boolean_beta_bound_quad(lam, c1, c2, r0, r_a, r_b, sep, d) -> float:
    """Same bound with the tail integral done by adaptive quadrature."""
    _check_boolean(c2, r0, r_a, r_b, sep, d)
    s = ball_surface(d)
    total = 0.0
    for r in (r_a, r_b):
        a = r + sep / 4
        tail, _ = integrate.quad(lambda u: math.exp(-c2 * u) * s * (a + u) ** (d - 1), 0, math.inf,
                                 epsabs=0.0, epsrel=1e-12, limit=200)
        total += c1 * lam * math.exp(-c2 * sep / 4) * (ball_volume(a, d) + tail)
    return total


def _share_members(members_a, members_b) -> bool:
    return bool(np.intersect1d(members_a, members_b).size)


def gibbs_clan_overlap(spec: GibbsSpec, a: Box, b: Box, m: int, seed: int,
                       box: Window | None = None) -> tuple[float, float, float]:
    """Monte Carlo probability that the ancestor clans of A and B intersect.

    Returns (estimate, binomial stderr, fraction of replicates excluded because
    a clan did not close within the horizon budget).
    """
    if box is None:
        lo = np.minimum(a.lower, b.lower)
        hi = np.maximum(a.upper, b.upper)
        pad = 2 * spec.potential.support + 1.0
        region = Box(lo - pad, hi + pad)
    else:
        region = box.sim_box().as_box()
    hits = 0
    used = 0
    for i in range(m):
        dom = _DominatingProcess(spec, region, derive_seed(seed, i))
        ma, ok_a = dom.run_clan(a)
        mb, ok_b = dom.run_clan(b)
        if not (ok_a and ok_b):
            continue
        used += 1
        hits += _share_members(ma, mb)
    excluded = (m - used) / m if m else 0.0
    if used == 0:
        return math.nan, math.nan, excluded
    p = hits / used
    return p, math.sqrt(p * (1 - p) / used), excluded


__all__ = [
    "DistBelowEnvelope", "SeparationTooSmall", "EDDParams", "DPPKernelEnvelope", "HorizonExhausted",
    "ball_volume_constant", "edd_from_volume", "edd_bound", "edd_predicate", "volume_form_bound",
    "dpp_beta_bound", "dpp_log_bound", "boolean_beta_bound", "boolean_beta_bound_quad", "gibbs_clan_overlap",
]
