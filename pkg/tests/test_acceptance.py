"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""
import json
import math
import sys
import time
from importlib import resources

import mpmath
import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import pdist

from eddlab import cli
from eddlab.bounds import DPPKernelEnvelope, boolean_beta_bound, dpp_beta_bound, dpp_log_bound
from eddlab.config import ExperimentConfig
from eddlab.engine import (batch_rate_fit, batch_variance_fit, defect_slope_fit, defect_table, moment_growth_check,
                           normal_vs_normal_bound, run_batch, tail_decay_fit, truncation_defect, w1_to_normal)
from eddlab.geometry import Box, Configuration, Window
from eddlab.rng import derive_seed, make_rng
from eddlab.samplers import (GibbsSpec, MaternSpec, PairPotential, PoissonSpec, ancestor_clan, sample_gibbs,
                             sample_matern, sample_poisson)
from eddlab.scores import ScoreSpec, knn_statistic, score_bound_holds, sector_radius, stabilization_check
from oracles import dense_scores, mp_boolean, mp_dpp

BUNDLED = resources.files("eddlab") / "configs" / "poisson_knn_k1.json"
TRUNCATION_ALPHA = 256


@pytest.fixture(scope="module")
def poisson_run():
    """The bundled Poisson k=1 experiment at full size, shared by several criteria."""
    cfg = ExperimentConfig.load(BUNDLED)
    exp = cfg.experiment()
    cap = 3 * Window(TRUNCATION_ALPHA, cfg.d).diam
    radii = sorted(set(cfg.truncation_radii) | {cap})
    batches = [run_batch(exp, a, cfg.m, cfg.master_seed, truncation_radii=radii if a == TRUNCATION_ALPHA else ())
               for a in cfg.alphas]
    return cfg, batches, cap


def test_criterion_01_oracle_equivalence(verdict):
    rng = make_rng(101)
    t0 = time.perf_counter()
    mismatches = 0
    for trial in range(1000):
        alpha = rng.uniform(4, 400)
        side = math.sqrt(alpha)
        n = int(rng.integers(0, 501))
        if trial % 5 == 0:  # lattice points exercise the tie-breaking order
            pts = rng.integers(-int(side), int(side) + 1, (n, 2)).astype(float)
        else:
            pts = rng.uniform(-0.75 * side, 0.75 * side, (n, 2))
        c = Configuration(pts)
        w = Window(alpha, 2)
        inside = w.contains(pts) if n else np.zeros(0, bool)
        k = int(rng.integers(1, 4))
        for kind in ("knn_undirected", "knn_directed"):
            directed = kind == "knn_directed"
            got_r = knn_statistic(c, w, ScoreSpec(kind=kind, k=k, mode="restricted")).w
            got_u = knn_statistic(c, w, ScoreSpec(kind=kind, k=k, mode="unrestricted")).w
            want_r = math.fsum(dense_scores(pts[inside], k, directed))
            want_u = math.fsum(dense_scores(pts, k, directed)[inside]) if n else 0.0
            mismatches += (got_r != want_r) + (got_u != want_u)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    verdict(1, ok, f"{mismatches} mismatches over 4000 statistics, {elapsed:.1f}s")
    assert ok


def test_criterion_02_stabilization(verdict):
    rng = make_rng(202)
    t0 = time.perf_counter()
    failures = nontrivial = 0
    for trial in range(10_000):
        alpha = 64.0
        w = Window(alpha, 2, buffer=2.0)
        c = sample_poisson(PoissonSpec(rng.uniform(1, 4)), w, derive_seed(202, trial))
        mode = "restricted" if trial % 2 else "unrestricted"
        spec = ScoreSpec(kind=("knn_undirected", "knn_directed")[trial % 4 // 2], k=int(rng.integers(1, 4)),
                         mode=mode)
        inside = np.flatnonzero(w.contains(c.points))
        if inside.size and rng.random() < 0.7:
            x = c.points[rng.choice(inside)]
        else:
            x = rng.uniform(-3.5, 3.5, 2)
        r = sector_radius(c, x, w, spec.k, mode)
        region = w.as_box() if mode == "restricted" else c.bounding_box()
        cand = rng.uniform(region.lower, region.upper, (int(rng.integers(1, 16)), 2))
        cand = cand[np.hypot(*(cand - x).T) > r]
        nontrivial += bool(len(cand))
        failures += not stabilization_check(c, x, w, spec, cand)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 60
    verdict(2, ok, f"{failures} failures in 10000 trials ({nontrivial} with injections), {elapsed:.1f}s")
    assert ok


def test_criterion_03_score_bound(verdict):
    w = Window(100, 2)
    bad = points = 0
    for i in range(1000):
        spec = PoissonSpec(2.0) if i % 2 else MaternSpec(3.0, 0.4)
        sampler = sample_poisson if i % 2 else sample_matern
        c = sampler(spec, w, derive_seed(303, i))
        for k in (1, 2, 3):
            held = score_bound_holds(c, w, k)
            bad += int((~held).sum())
            points += held.size
    ok = bad == 0
    verdict(3, ok, f"{bad} violations over {points} point checks")
    assert ok


def test_criterion_04_variance_scaling(verdict, poisson_run):
    _, batches, _ = poisson_run
    fit = batch_variance_fit(batches)
    ok = 0.85 <= fit.exponent <= 1.15
    verdict(4, ok, f"variance exponent {fit.exponent:.3f} (stderr {fit.stderr:.3f}), band [0.85, 1.15]")
    assert ok


def test_criterion_05_wasserstein_rate(verdict, poisson_run):
    _, batches, _ = poisson_run
    w1 = [b.summary()["w1"] for b in batches]
    fit = batch_rate_fit(batches, 0)
    monotone = cli.decreasing_with_inversions(w1, 1)
    ok = monotone and fit.exponent <= -0.3
    verdict(5, ok, f"rate exponent {fit.exponent:.3f} (need <= -0.3), W1 decreasing: {monotone}, "
                   f"W1 = {', '.join(f'{v:.4f}' for v in w1)}")
    assert ok


def test_criterion_06_matern_invariants(verdict):
    spec, w = MaternSpec(2.0, 1.0), Window(64, 2)
    a, b = Box([-4, -4], [-1.5, 4]), Box([1.5, -4], [4, 4])  # 3 apart, r = 1
    too_close = 0
    na, nb = [], []
    for i in range(5000):
        c = sample_matern(spec, w, derive_seed(606, i))
        if len(c) > 1 and pdist(c.points).min() < spec.r / 2:
            too_close += 1
        na.append(a.contains(c.points).sum())
        nb.append(b.contains(c.points).sum())
    rho = np.corrcoef(na, nb)[0, 1]
    ok = too_close == 0 and abs(rho) <= 3 / math.sqrt(5000)
    verdict(6, ok, f"{too_close} samples below r/2, count correlation {rho:+.4f} (tol {3 / math.sqrt(5000):.4f})")
    assert ok


def test_criterion_07_gibbs(verdict):
    w = Window(25, 2)
    n = np.array([len(sample_gibbs(GibbsSpec(1.0, 2.0), w, derive_seed(707, i))[0]) for i in range(5000)])
    support = np.arange(n.max() + 1)
    emp = np.bincount(n) / n.size
    tv = 0.5 * np.abs(emp - stats.poisson.pmf(support, 50)).sum() + 0.5 * stats.poisson.sf(n.max(), 50)

    hard = GibbsSpec(1.0, 1.5, PairPotential("hardcore", r0=0.5))
    violations = 0
    for i in range(200):
        c, _ = sample_gibbs(hard, w, derive_seed(708, i))
        violations += len(c) > 1 and pdist(c.points).min() < 0.5

    clan_spec = GibbsSpec(1.0, 1.0, PairPotential("hardcore", r0=0.5))
    box = Box([-0.5, -0.5], [0.5, 0.5])
    diams = [ancestor_clan(clan_spec, box, Window(100, 2), derive_seed(709, i)).clan_diameter for i in range(500)]
    tail = tail_decay_fit(diams)
    ok = tv < 0.05 and violations == 0 and tail.exponent < 0 and tail.r_squared >= 0.8
    verdict(7, ok, f"TV {tv:.4f}, hard-core violations {violations}, clan-diameter tail slope "
                   f"{tail.exponent:.3f} with r2 {tail.r_squared:.3f}")
    assert ok


def test_criterion_08_truncation_cost(verdict, poisson_run):
    _, batches, cap = poisson_run
    b = next(x for x in batches if x.alpha == TRUNCATION_ALPHA)
    at_cap, _ = truncation_defect(b, b.truncated_batch(cap))
    rows = defect_table(b)
    fit = defect_slope_fit(rows)
    ok = at_cap == 0.0 and fit.exponent < 0 and fit.r_squared >= 0.8
    verdict(8, ok, f"defect at r = 3 diam = {cap:.2f}: {at_cap}, log-defect slope {fit.exponent:.3f} "
                   f"with r2 {fit.r_squared:.3f}")
    assert ok


def test_criterion_09_formula_evaluators(verdict):
    rng = make_rng(909)
    worst_dpp = worst_bool = 0.0
    in_log = 0
    for _ in range(100):
        k, c1, c2, c3 = rng.uniform(0.1, 3, 4)
        va, vb = rng.uniform(0.01, 5, 2)
        dist = rng.uniform(0, 3)
        ref = mp_dpp(k, c1, c2, c3, va, vb, dist)
        env = DPPKernelEnvelope(k, c1, c2, c3)
        if ref < sys.float_info.min:
            # below double range: relative error of the value is the absolute error of its log
            worst_dpp = max(worst_dpp, abs(dpp_log_bound(env, va, vb, dist) - float(mpmath.log(ref))))
            in_log += 1
        else:
            worst_dpp = max(worst_dpp, abs(dpp_beta_bound(env, va, vb, dist) - float(ref)) / float(ref))
    for _ in range(100):
        d = int(rng.integers(1, 4))
        lam, c1 = rng.uniform(0.1, 3, 2)
        c2, r0 = rng.uniform(0.2, 4), rng.uniform(0, 1)
        ra, rb = rng.uniform(0, 3, 2)
        sep = 4 * r0 + rng.uniform(0, 10)
        ref = float(mp_boolean(lam, c1, c2, ra, rb, sep, d))
        got = boolean_beta_bound(lam, c1, c2, r0, ra, rb, sep, d)
        worst_bool = max(worst_bool, abs(got - ref) / ref)
    nvn = normal_vs_normal_bound(0.5, 2)
    ok = worst_dpp <= 1e-10 and worst_bool <= 1e-8 and abs(nvn - 1.297885) <= 1e-6
    verdict(9, ok, f"max rel error dpp {worst_dpp:.1e} ({in_log} compared as logs), boolean {worst_bool:.1e}; normal-vs-normal {nvn:.6f}")
    assert ok


def test_criterion_10_w1_calibration(verdict):
    worst_ratio = 0.0
    worst_exact = 0.0
    for m in (100, 1000, 10_000):
        for seed in range(100):
            x = make_rng(derive_seed(1010, m, seed)).standard_normal(m)
            worst_ratio = max(worst_ratio, w1_to_normal(x) * math.sqrt(m) / 5)
        worst_exact = max(worst_exact, w1_to_normal(stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)))
    ok = worst_ratio <= 1 and worst_exact <= 1e-12
    verdict(10, ok, f"max W1 / (5/sqrt m) = {worst_ratio:.3f}, exact-quantile W1 {worst_exact:.1e}")
    assert ok


def test_criterion_11_moment_growth(verdict, poisson_run):
    _, batches, _ = poisson_run
    checks = [moment_growth_check(batches, k) for k in (1, 2, 3)]
    ok = not any(c["flag"] for c in checks)
    desc = ", ".join(f"k={c['order']}: {c['fit'].exponent:.3f} (limit {c['limit']})" for c in checks)
    verdict(11, ok, desc)
    assert ok


def test_criterion_12_reproducibility(verdict, tmp_path):
    obj = json.loads(BUNDLED.read_text())
    obj.update(alphas=[32, 64, 128], m=200, truncation_radii=[8, 16], truncation_alphas=[64])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(obj))
    digests = []
    for run in ("a", "b"):
        assert cli.main(["run", str(path), "--out", str(tmp_path / run)]) == 0
        digests.append(json.loads((tmp_path / run / "result.json").read_text())["values_digest"])
    ok = digests[0] == digests[1]
    verdict(12, ok, f"digests {digests[0][:16]}... and {digests[1][:16]}...")
    assert ok
