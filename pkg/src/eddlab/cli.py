"""Command-line front end: ``run``, ``bounds`` and ``report``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (DistBelowEnvelope, DPPKernelEnvelope, EDDParams, SeparationTooSmall, boolean_beta_bound,
                     dpp_beta_bound, edd_bound)
from .config import ConfigError, ExperimentConfig
from .engine import (batch_rate_fit, batch_variance_fit, defect_slope_fit, defect_table, moment_growth_check,
                     run_batch, values_digest)
from .geometry import Window
from .scores import sector_radii, point_scores

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
VARIANCE_BAND = (0.85, 1.15)
RATE_CEILING = -0.3


def decreasing_with_inversions(seq, allowed: int = 1) -> bool:
    """True if ``seq`` strictly decreases except for at most ``allowed`` steps."""
    steps = [b >= a for a, b in zip(seq, seq[1:])]
    return sum(steps) <= allowed


def _fit_or_none(fn, *args):
    try:
        return fn(*args).to_dict()
    except (ValueError, ZeroDivisionError):
        return None


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _dump_replicate(cfg: ExperimentConfig, alpha: float, seed: int, out: Path, scores: bool, samples: bool):
    exp = cfg.experiment()
    c = exp.sample(exp.window(alpha), seed)
    tag = f"alpha_{alpha:g}"
    if samples:
        (out / f"sample_{tag}.txt").write_text(c.to_text())
    if scores:
        w = Window(alpha, cfg.d)
        base, s, inside = point_scores(c, w, cfg.score)
        pts = base.points[inside]
        radii = sector_radii(c, w, cfg.score.k, cfg.score.mode) if cfg.d == 2 and cfg.score.is_knn \
            else np.full(len(pts), math.nan)
        cols = ["x", "y", "z"][: cfg.d]
        _write_csv(out / f"scores_{tag}.csv", cols + ["score", "radius"],
                   [[*map(_fmt, p), _fmt(v), _fmt(r)] for p, v, r in zip(pts, s[inside], radii)])


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or cfg.outputs)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    exp = cfg.experiment()
    batches, failure = [], None
    trunc_alphas = set(cfg.truncation_alphas or (cfg.alphas if cfg.truncation_radii else ()))
    try:
        for alpha in cfg.alphas:
            radii = cfg.truncation_radii if alpha in trunc_alphas else ()
            batches.append(run_batch(exp, alpha, cfg.m, cfg.master_seed, threads=args.threads,
                                     truncation_radii=radii))
    except Exception as exc:  # anything past config validation is a runtime failure
        failure = f"{type(exc).__name__}: {exc}"
    out.mkdir(parents=True, exist_ok=True)

    per_alpha, trunc_rows, summary_rows = [], [], []
    for b in batches:
        s = b.summary()
        rows = defect_table(b)
        trunc_rows += rows
        defect = rows[-1]["defect_rate"] if rows else None
        per_alpha.append({"alpha": b.alpha, "m": b.m, "values_digest": values_digest(b.values),
                          "summary": s, "errors": len(b.errors),
                          "defect_rates": [{"r": r["r"], "rate": r["defect_rate"]} for r in rows]})
        summary_rows.append([_fmt(b.alpha), _fmt(s["mean"]), _fmt(s["var"]), _fmt(s["w1"]), _fmt(defect)])
        if args.raw:
            _write_csv(out / f"values_alpha_{b.alpha:g}.csv", ["replicate", "seed", "value"],
                       [[b.start + i, seed, _fmt(v)] for i, (seed, v) in enumerate(zip(b.seeds, b.values))])
        if args.dump_scores or args.dump_samples:
            _dump_replicate(cfg, b.alpha, b.seeds[0], out, args.dump_scores, args.dump_samples)

    fits = {
        "variance": _fit_or_none(batch_variance_fit, batches),
        "rate": _fit_or_none(batch_rate_fit, batches, 0),
        "rate_log_corrected": _fit_or_none(batch_rate_fit, batches, 5 * cfg.d),
        "defect_slopes": {f"{b.alpha:g}": _fit_or_none(defect_slope_fit, defect_table(b))
                          for b in batches if b.truncated},
    }
    moments = []
    for k in (1, 2, 3):
        try:
            mc = moment_growth_check(batches, k)
            moments.append({"order": k, "exponent": mc["fit"].exponent, "stderr": mc["fit"].stderr,
                            "limit": mc["limit"], "flag": mc["flag"]})
        except ValueError:
            pass
    n_errors = sum(len(b.errors) for b in batches)
    partial = failure is not None or n_errors > 0
    w1_seq = [row["summary"]["w1"] for row in per_alpha]
    result = {
        "tool": "eddlab", "version": __version__, "environment": {"version": __version__},
        "experiment_id": cfg.id, "master_seed": cfg.master_seed, "config": cfg.to_dict(),
        "alphas": per_alpha,
        "values_digest": values_digest(np.concatenate([b.values for b in batches]) if batches else []),
        "fits": fits, "moment_checks": moments,
        "w1_decreasing": decreasing_with_inversions(w1_seq) if len(w1_seq) > 1 else None,
        "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "partial": partial, "failure": failure, "replicate_errors": n_errors,
    }
    (out / "result.json").write_text(json.dumps(result, indent=2, allow_nan=True))
    _write_csv(out / "summary.csv", ["alpha", "mean", "var", "w1", "defect_rate"], summary_rows)
    if trunc_rows:
        _write_csv(out / "truncation.csv", ["alpha", "r", "defect_rate", "m"],
                   [[_fmt(r["alpha"]), _fmt(r["r"]), _fmt(r["defect_rate"]), r["m"]] for r in trunc_rows])
    if partial:
        print(f"run incomplete: {failure or f'{n_errors} replicate errors'}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out / "result.json")
    return EXIT_OK


def _dist_grid(args):
    if args.dist is not None:
        return [args.dist]
    if args.dist_max <= args.dist_min:
        raise ValueError("--dist-max must exceed --dist-min")
    return list(np.linspace(args.dist_min, args.dist_max, args.steps))


def cmd_bounds(args) -> int:
    try:
        grid = _dist_grid(args)
        rows = []
        if args.which == "dpp":
            env = DPPKernelEnvelope(args.ksup, args.c1, args.c2, args.c3, args.c4)
            header = ["vol_a", "vol_b", "dist", "bound"]
            for dist in grid:
                rows.append([args.va, args.vb, dist, dpp_beta_bound(env, args.va, args.vb, dist)])
        elif args.which == "boolean":
            header = ["r_a", "r_b", "dist", "bound"]
            for dist in grid:
                rows.append([args.r1, args.r2, dist,
                             boolean_beta_bound(args.lam, args.c1, args.c2, args.r0, args.r1, args.r2, dist, args.d)])
        else:
            p = EDDParams(args.theta0, args.theta1, args.theta2, args.theta3, args.theta4)
            header = ["diam_a", "diam_b", "dist", "applies", "bound"]
            for dist in grid:
                applies, val = edd_bound(p, args.diam_a, args.diam_b, dist)
                rows.append([args.diam_a, args.diam_b, dist, str(applies).lower(), val])
    except DistBelowEnvelope as exc:
        print(f"--dist: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SeparationTooSmall as exc:
        print(f"--dist/--r0: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid flags: {exc}", file=sys.stderr)
        return EXIT_USAGE
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_fmt(v) if not isinstance(v, str) else v for v in row] for row in rows])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _report_row(path: str, res: dict) -> dict:
    var = (res.get("fits") or {}).get("variance") or {}
    rate = (res.get("fits") or {}).get("rate") or {}
    ve, re_ = var.get("exponent"), rate.get("exponent")
    var_pass = ve is not None and VARIANCE_BAND[0] <= ve <= VARIANCE_BAND[1]
    rate_pass = re_ is not None and re_ <= RATE_CEILING and bool(res.get("w1_decreasing"))
    return {"experiment": res["experiment_id"], "path": path, "variance_exponent": ve, "variance_target": 1.0,
            "variance_pass": var_pass, "rate_exponent": re_, "rate_target": -0.5, "rate_pass": rate_pass,
            "values_digest": res.get("values_digest", "")}


def cmd_report(args) -> int:
    rows, problems = [], []
    for p in args.paths:
        try:
            res = json.loads(Path(p).read_text())
            rows.append(_report_row(p, res))
        except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
            problems.append(p)
            print(f"warning: skipping {p}: {exc}", file=sys.stderr)
    if not rows:
        print("no valid results to report", file=sys.stderr)
        return EXIT_RUNTIME
    fields = list(rows[0])
    md = ["| experiment | variance exponent (target 1) | pass | rate exponent (target -0.5) | pass |",
          "|---|---|---|---|---|"]
    for r in rows:
        ve = "n/a" if r["variance_exponent"] is None else f"{r['variance_exponent']:.3f}"
        re_ = "n/a" if r["rate_exponent"] is None else f"{r['rate_exponent']:.3f}"
        md.append(f"| {r['experiment']} | {ve} | {'PASS' if r['variance_pass'] else 'FAIL'} | {re_} | "
                  f"{'PASS' if r['rate_pass'] else 'FAIL'} |")
    text = "\n".join(md) + "\n"
    if problems:
        text += "\nSkipped invalid inputs: " + ", ".join(problems) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(text)
        _write_csv(out / "report.csv", fields, [[_fmt(r[f]) if not isinstance(r[f], (str, bool)) else r[f]
                                                 for f in fields] for r in rows])
    return EXIT_RUNTIME if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eddlab", description="Stabilizing statistics of dependent point processes.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("config")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")
    run.add_argument("--raw", action="store_true", help="write raw replicate values as CSV")
    run.add_argument("--dump-scores", action="store_true", help="per-point scores of replicate 0 per alpha")
    run.add_argument("--dump-samples", action="store_true", help="configuration of replicate 0 per alpha")
    run.set_defaults(func=cmd_run)

    bounds = sub.add_parser("bounds", help="tabulate mixing bounds over distances")
    bsub = bounds.add_subparsers(dest="which", required=True)

    def grid_flags(p):
        p.add_argument("--dist", type=float)
        p.add_argument("--dist-min", type=float, default=1.0)
        p.add_argument("--dist-max", type=float, default=10.0)
        p.add_argument("--steps", type=int, default=10)
        p.add_argument("--out", help="also write the table to this CSV file")
        p.set_defaults(func=cmd_bounds)

    dpp = bsub.add_parser("dpp")
    for flag in ("--ksup", "--c1", "--c2", "--c3", "--va", "--vb"):
        dpp.add_argument(flag, type=float, required=True)
    dpp.add_argument("--c4", type=float, default=0.0)
    grid_flags(dpp)

    boo = bsub.add_parser("boolean")
    for flag in ("--lam", "--c1", "--c2", "--r1", "--r2"):
        boo.add_argument(flag, type=float, required=True)
    boo.add_argument("--r0", type=float, default=0.0)
    boo.add_argument("--d", type=int, default=2)
    grid_flags(boo)

    edd = bsub.add_parser("edd")
    edd.add_argument("--theta0", type=float, default=0.0)
    for flag in ("--theta1", "--theta2", "--theta3", "--theta4"):
        edd.add_argument(flag, type=float, default=1.0)
    edd.add_argument("--diam-a", type=float, required=True)
    edd.add_argument("--diam-b", type=float, required=True)
    grid_flags(edd)

    rep = sub.add_parser("report", help="summarize run results")
    rep.add_argument("paths", nargs="+")
    rep.add_argument("--out", help="directory for report.md and report.csv")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
