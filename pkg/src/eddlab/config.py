"""Strict JSON experiment configuration."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .engine import Experiment
from .samplers import BooleanSpec, GibbsSpec, GrainLaw, MaternSpec, PairPotential, PoissonSpec
from .scores import ScoreSpec

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


_PROCESS_KEYS = {
    "poisson": ({"kind", "lambda"}, set()),
    "matern": ({"kind", "lambda", "r"}, set()),
    "boolean": ({"kind", "lambda", "grain_count_mean", "grain"}, set()),
    "gibbs": ({"kind", "beta", "lambda_dom", "potential"}, {"horizon"}),
}
_GRAIN_KEYS = {"bounded": {"kind", "rho"}, "exponential": {"kind", "rate", "r0"}}
_POTENTIAL_KEYS = {"zero": {"kind"}, "hardcore": {"kind", "r0"}, "step": {"kind", "height", "r_phi", "r0"}}
_SCORE_KEYS = {"kind", "k", "mode", "range_r", "eta_max"}
_TOP_REQUIRED = {"version", "id", "process", "score", "alphas", "m", "master_seed", "d"}
_TOP_OPTIONAL = {"truncation_radii", "truncation_alphas", "outputs", "buffer", "marks"}


def _keys(obj, required, optional=frozenset(), where="config"):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _num(v, where, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where} must be a finite number")
    if positive and not v > 0:
        raise ConfigError(f"{where} must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{where} must be nonnegative")
    return float(v)


def _int(v, where, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where} must be at least {minimum}")
    return v


def _kind(obj, table, where):
    if not isinstance(obj, dict) or obj.get("kind") not in table:
        raise ConfigError(f"{where}.kind must be one of {sorted(table)}")
    return obj["kind"]


def _parse_process(obj):
    kind = _kind(obj, _PROCESS_KEYS, "process")
    req, opt = _PROCESS_KEYS[kind]
    _keys(obj, req, opt, "process")
    try:
        if kind == "poisson":
            return PoissonSpec(_num(obj["lambda"], "process.lambda"))
        if kind == "matern":
            return MaternSpec(_num(obj["lambda"], "process.lambda"), _num(obj["r"], "process.r"))
        if kind == "boolean":
            g = obj["grain"]
            gk = _kind(g, _GRAIN_KEYS, "process.grain")
            _keys(g, _GRAIN_KEYS[gk], where="process.grain")
            grain = GrainLaw(gk, **{k: _num(v, f"process.grain.{k}") for k, v in g.items() if k != "kind"})
            return BooleanSpec(_num(obj["lambda"], "process.lambda"),
                               _num(obj["grain_count_mean"], "process.grain_count_mean"), grain)
        pot = obj["potential"]
        pk = _kind(pot, _POTENTIAL_KEYS, "process.potential")
        _keys(pot, {"kind"}, _POTENTIAL_KEYS[pk], "process.potential")
        potential = PairPotential(pk, **{k: _num(v, f"process.potential.{k}") for k, v in pot.items() if k != "kind"})
        horizon = obj.get("horizon")
        return GibbsSpec(_num(obj["beta"], "process.beta"), _num(obj["lambda_dom"], "process.lambda_dom"),
                         potential, None if horizon is None else _num(horizon, "process.horizon"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"process: {exc}") from exc


def _process_dict(p) -> dict:
    if isinstance(p, PoissonSpec):
        return {"kind": "poisson", "lambda": p.lam}
    if isinstance(p, MaternSpec):
        return {"kind": "matern", "lambda": p.lam, "r": p.r}
    if isinstance(p, BooleanSpec):
        g = p.grain
        grain = {"kind": "bounded", "rho": g.rho} if g.kind == "bounded" else \
            {"kind": "exponential", "rate": g.rate, "r0": g.r0}
        return {"kind": "boolean", "lambda": p.lam, "grain_count_mean": p.grain_count_mean, "grain": grain}
    pot = p.potential
    pd = {"kind": pot.kind}
    if pot.kind == "hardcore":
        pd["r0"] = pot.r0
    elif pot.kind == "step":
        pd.update(height=pot.height, r_phi=pot.r_phi, r0=pot.r0)
    out = {"kind": "gibbs", "beta": p.beta, "lambda_dom": p.lambda_dom, "potential": pd}
    if p.horizon is not None:
        out["horizon"] = p.horizon
    return out


def _parse_score(obj) -> ScoreSpec:
    _keys(obj, {"kind"}, _SCORE_KEYS, "score")
    kw = {}
    for key in ("kind", "mode"):
        if key in obj:
            if not isinstance(obj[key], str):
                raise ConfigError(f"score.{key} must be a string")
            kw[key] = obj[key]
    if "k" in obj:
        kw["k"] = _int(obj["k"], "score.k", 1)
    for key in ("range_r", "eta_max"):
        if key in obj:
            kw[key] = _num(obj[key], f"score.{key}", positive=True)
    try:
        return ScoreSpec(**kw)
    except ValueError as exc:
        raise ConfigError(f"score: {exc}") from exc


def _score_dict(s: ScoreSpec) -> dict:
    return {"kind": s.kind, "k": s.k, "mode": s.mode, "range_r": s.range_r, "eta_max": s.eta_max}


def _num_list(v, where, increasing=False, nonneg=True) -> tuple:
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where} must be a nonempty list")
    out = tuple(_num(x, f"{where}[]", nonneg=nonneg) for x in v)
    if increasing and any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{where} must be strictly increasing")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    process: object
    score: ScoreSpec
    alphas: tuple
    m: int
    master_seed: int
    d: int = 2
    truncation_radii: tuple = ()
    truncation_alphas: tuple = ()
    outputs: str = "results"
    buffer: float | None = None
    species_law: tuple = ()
    noise_law: tuple = ("none",)
    version: int = CONFIG_VERSION

    @classmethod
    def from_dict(cls, obj) -> "ExperimentConfig":
        _keys(obj, _TOP_REQUIRED, _TOP_OPTIONAL)
        if obj["version"] != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {obj['version']!r}")
        if not isinstance(obj["id"], str) or not obj["id"]:
            raise ConfigError("id must be a nonempty string")
        d = _int(obj["d"], "d", 1)
        if d > 3:
            raise ConfigError("d must be 1, 2 or 3")
        alphas = _num_list(obj["alphas"], "alphas", increasing=True)
        if any(a <= 0 for a in alphas):
            raise ConfigError("alphas must be positive")
        m = _int(obj["m"], "m", 2)
        seed = _int(obj["master_seed"], "master_seed", 0)
        radii = _num_list(obj["truncation_radii"], "truncation_radii", increasing=True) \
            if "truncation_radii" in obj else ()
        talphas = _num_list(obj["truncation_alphas"], "truncation_alphas", increasing=True) \
            if "truncation_alphas" in obj else ()
        if set(talphas) - set(alphas):
            raise ConfigError("truncation_alphas must be a subset of alphas")
        outputs = obj.get("outputs", "results")
        if not isinstance(outputs, str):
            raise ConfigError("outputs must be a path string")
        buffer = obj.get("buffer")
        if buffer is not None:
            buffer = _num(buffer, "buffer", nonneg=True)
        species, noise = (), ("none",)
        if "marks" in obj:
            marks = obj["marks"]
            _keys(marks, {"species", "noise"}, where="marks")
            species = _num_list(marks["species"], "marks.species")
            if abs(sum(species) - 1.0) > 1e-9:
                raise ConfigError("marks.species must sum to 1")
            nz = marks["noise"]
            if not isinstance(nz, list) or not nz or nz[0] not in ("none", "gaussian", "uniform"):
                raise ConfigError("marks.noise must be ['none'], ['gaussian', s] or ['uniform', a, b]")
            arity = {"none": 1, "gaussian": 2, "uniform": 3}[nz[0]]
            if len(nz) != arity:
                raise ConfigError("marks.noise has the wrong number of parameters")
            noise = (nz[0], *(_num(v, "marks.noise[]") for v in nz[1:]))
        score = _parse_score(obj["score"])
        if score.kind == "forest" and not species:
            species = (1.0,)
        return cls(obj["id"], _parse_process(obj["process"]), score, alphas, m, seed, d, radii,
                   talphas, outputs, buffer, species, noise, CONFIG_VERSION)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_json(text)

    def to_dict(self) -> dict:
        out = {"version": self.version, "id": self.id, "process": _process_dict(self.process),
               "score": _score_dict(self.score), "alphas": list(self.alphas), "m": self.m,
               "master_seed": self.master_seed, "d": self.d, "outputs": self.outputs}
        if self.truncation_radii:
            out["truncation_radii"] = list(self.truncation_radii)
        if self.truncation_alphas:
            out["truncation_alphas"] = list(self.truncation_alphas)
        if self.buffer is not None:
            out["buffer"] = self.buffer
        if self.species_law:
            out["marks"] = {"species": list(self.species_law), "noise": list(self.noise_law)}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def experiment(self) -> Experiment:
        return Experiment(self.process, self.score, self.d, self.buffer, self.species_law, self.noise_law, self.id)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        obj = self.to_dict()
        obj["master_seed"] = seed
        return ExperimentConfig.from_dict(obj)
