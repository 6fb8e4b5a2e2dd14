"""Command-line front end: ``alloctrack run --experiment NAME [options]``.

Each invocation runs one experiment and writes ``metadata.json`` plus one
or more CSV tables into ``--out``. Exit status is 0 on success, 1 for an
invalid configuration and 2 for a runtime failure; on failure every file
written by the run is removed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from importlib import metadata as _md
from pathlib import Path
from typing import Dict, List, Optional

import jsonschema
import numpy as np

from . import allocators as al
from . import harness as hs
from .distributions import RNG_ALGORITHM, DiscreteDistribution, DistanceKind, RngStream
from .errors import ConfigError
from .objectives import c_for, objective

EXPERIMENTS = ("alloc", "simulate", "risk", "regret", "figure2", "table1", "rates", "lowerbound", "coverage")
DISTANCES = ("l2", "l1", "tv", "kl", "chi2", "hellinger", "sep")
DEFAULT_DISTS = [[0.5, 0.5], [0.9, 0.1]]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "distance": {"enum": list(DISTANCES)},
        "distances": {"type": "array", "items": {"enum": list(DISTANCES)}, "minItems": 1},
        "n": {"type": "integer", "minimum": 1},
        "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "dists": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "minItems": 2, "items": {"type": "number"}},
        },
        "family": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"name": {"const": "eps"}, "l": {"type": "integer", "minimum": 2}},
        },
        "eps_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                     "minItems": 1},
        "delta": {"oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}]},
        "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "scheme": {"enum": ["uniform", "oracle", "adaptive"]},
        "p0": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
        "reps": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "verbose": {"type": "boolean"},
    },
}

# fields that never change results; kept out of the hash and the echo
_VOLATILE = ("threads", "out", "verbose")


def _version() -> str:
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:  # pragma: no cover
        from . import __version__

        return __version__


def _path(err: jsonschema.ValidationError) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return parts.lstrip(".") or "<root>"


def validate_config(cfg: dict) -> dict:
    """Schema check plus semantic checks; raises ConfigError naming the field."""
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)
    if "dists" in cfg:
        ls = set()
        for i, masses in enumerate(cfg["dists"]):
            for j, m in enumerate(masses):
                if not math.isfinite(m) or m < 0:
                    raise ConfigError(f"dists[{i}][{j}]", f"mass {m} must be finite and nonnegative")
            s = math.fsum(masses)
            if abs(s - 1.0) > 1e-9:
                raise ConfigError(f"dists[{i}]", f"masses sum to {s:.17g}, expected 1")
            ls.add(len(masses))
        if len(ls) > 1:
            raise ConfigError("dists", "all distributions must have the same number of masses")
    if cfg["experiment"] == "alloc" and "dists" not in cfg:
        raise ConfigError("dists", "the alloc experiment needs explicit distributions")
    if cfg["experiment"] == "alloc" and "n" not in cfg:
        raise ConfigError("n", "the alloc experiment needs a budget")
    return cfg


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in _VOLATILE}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "{:.17g}".format(float(v))
    return str(v)


class _Writer:
    def __init__(self, out: Path, seed: int, chash: str):
        self.out = out
        self.seed = seed
        self.chash = chash
        self.written: List[Path] = []
        self.created_dir = False

    def prepare(self):
        if not self.out.exists():
            self.out.mkdir(parents=True)
            self.created_dir = True

    def table(self, name: str, columns: List[str], rows: List[dict]):
        path = self.out / name
        self.written.append(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "config_hash"] + columns)
            for r in rows:
                w.writerow([self.seed, self.chash] + [_fmt(r[c]) for c in columns])

    def json(self, name: str, obj):
        path = self.out / name
        self.written.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def jsonl(self, name: str, records):
        path = self.out / name
        self.written.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                self.out.rmdir()
            except OSError:
                pass


# -- experiments -------------------------------------------------------------


def _instance(cfg):
    dists = cfg.get("dists", DEFAULT_DISTS)
    return hs.ProblemInstance(tuple(DiscreteDistribution(p) for p in dists), cfg.get("eta"))


def _delta(cfg):
    d = cfg.get("delta", "auto")
    return None if d == "auto" else float(d)


def _distances(cfg, default):
    if "distances" in cfg:
        return list(cfg["distances"])
    if "distance" in cfg:
        return [cfg["distance"]]
    return list(default)


def _n_list(cfg, default):
    if "n_list" in cfg:
        return list(cfg["n_list"])
    if "n" in cfg:
        return [cfg["n"]]
    return list(default)


def _exp_alloc(cfg, rng, w, threads):
    inst = _instance(cfg)
    n = cfg["n"]
    rows = []
    for dname in _distances(cfg, ["l2"]):
        kind = DistanceKind.parse(dname)
        frac = al.approx_oracle(kind, inst.distributions, n)
        rnd = frac.rounded().counts
        spec = objective(kind, inst.l)
        for i, P in enumerate(inst.distributions):
            c = c_for(kind, P)
            rows.append({"distance": kind.value, "arm": i, "c": c, "oracle_T": frac.counts[i],
                         "oracle_T_rounded": rnd[i], "phi": spec.value(c, frac.counts[i]) if frac.counts[i] > 0 else math.inf})
    w.table("alloc.csv", ["distance", "arm", "c", "oracle_T", "oracle_T_rounded", "phi"], rows)


def _exp_simulate(cfg, rng, w, threads):
    inst = _instance(cfg)
    n = cfg.get("n", 1000)
    kind = DistanceKind.parse(_distances(cfg, ["l2"])[0])
    delta = _delta(cfg) or hs.resolve_delta(hs.Scheme("adaptive"), kind, inst, n)
    traj = al.optimistic_tracking(inst.distributions, objective(kind, inst.l), kind, n, delta, rng)
    orc = al.approx_oracle(kind, inst.distributions, n).counts
    rows = [{"distance": kind.value, "arm": a.arm_id, "pulls": a.pulls, "oracle_T": orc[a.arm_id],
             "counts": " ".join(str(int(x)) for x in a.counts)} for a in traj.arms]
    w.table("simulate.csv", ["distance", "arm", "pulls", "oracle_T", "counts"], rows)
    if cfg.get("verbose"):
        w.jsonl("trajectory.jsonl", ({"t": r.t, "arm": r.arm, "u": r.u, "phi": r.phi, "pulls": r.pulls}
                                     for r in traj.records))


def _exp_risk(cfg, rng, w, threads):
    inst = _instance(cfg)
    reps = cfg.get("reps", 1000)
    rows = []
    for dname in _distances(cfg, ["l2"]):
        kind = DistanceKind.parse(dname)
        for ni, n in enumerate(_n_list(cfg, [1000])):
            scheme = hs.Scheme(cfg.get("scheme", "adaptive"), _delta(cfg), cfg.get("eta"))
            est = hs.estimate_risk(scheme, inst, kind, n, reps, rng.spawn(ni), threads)
            for i in range(inst.K):
                rows.append({"distance": kind.value, "scheme": scheme.name, "n": n, "arm": i,
                             "mean": est.per_arm_mean[i], "stderr": est.per_arm_stderr[i], "risk": est.risk,
                             "max_then_mean": est.max_then_mean, "reps": reps})
    w.table("risk.csv", ["distance", "scheme", "n", "arm", "mean", "stderr", "risk", "max_then_mean", "reps"], rows)


def _exp_regret(cfg, rng, w, threads):
    inst = _instance(cfg)
    reps = cfg.get("reps", 1000)
    rows = []
    for dname in _distances(cfg, ["l2"]):
        kind = DistanceKind.parse(dname)
        for ni, n in enumerate(_n_list(cfg, [1000])):
            scheme = hs.Scheme(cfg.get("scheme", "adaptive"), _delta(cfg), cfg.get("eta"))
            rep = hs.regret(scheme, inst, kind, n, reps, rng.spawn(ni), threads)
            rows.append({"distance": kind.value, "scheme": scheme.name, "n": n, "scheme_risk": rep.scheme_risk,
                         "oracle_risk": rep.oracle_risk, "regret": rep.regret, "stderr": rep.stderr,
                         "theory_M": rep.overlay.get("M", math.nan),
                         "theory_leading_term": rep.overlay.get("leading_term", math.nan),
                         "approx_level": rep.decomposition.get("level", math.nan),
                         "max_abs_remainder": rep.decomposition.get("max_abs_remainder", math.nan),
                         "reps": reps})
    w.table("regret.csv", ["distance", "scheme", "n", "scheme_risk", "oracle_risk", "regret", "stderr", "theory_M",
                           "theory_leading_term", "approx_level", "max_abs_remainder", "reps"], rows)


def _family(cfg):
    fam = cfg.get("family", {})
    return hs.EpsFamily(fam.get("l", 10))


def _exp_figure2(cfg, rng, w, threads):
    recs = hs.figure2_sweep(_family(cfg), _distances(cfg, ["l2", "l1", "kl", "sep"]),
                            _n_list(cfg, [200, 500, 1000, 2000]), cfg.get("eps_list", hs.DEFAULT_EPS),
                            cfg.get("reps", 100), rng, threads)
    cols = ["distance", "n", "epsilon", "approx_oracle_T2", "adaptive_T2_mean", "adaptive_T2_std"]
    w.table("figure2.csv", cols, [r.__dict__ for r in recs])


def _exp_table1(cfg, rng, w, threads):
    n = _n_list(cfg, [500])[0]
    recs = hs.table1_gaps(_family(cfg), _distances(cfg, ["l2", "l1", "kl", "sep"]), n,
                          cfg.get("eps_list", hs.DEFAULT_EPS), cfg.get("reps", 2000), rng, threads)
    cols = ["distance", "epsilon", "n", "uniform_risk", "adaptive_risk", "gap", "stderr", "reps"]
    w.table("table1.csv", cols, [r.__dict__ for r in recs])


def _exp_rates(cfg, rng, w, threads):
    inst = _instance(cfg)
    n_list = _n_list(cfg, [500, 1000, 2000, 4000, 8000])
    reps = cfg.get("reps", 500)
    rows, slopes = [], []
    for di, dname in enumerate(_distances(cfg, ["l2", "l1"])):
        kind = DistanceKind.parse(dname)
        dev = hs.deviation_rates(inst, kind, n_list, reps, rng.spawn(di).spawn(0), _delta(cfg), threads)
        reg = hs.regret_rates(inst, kind, n_list, reps, rng.spawn(di).spawn(1), _delta(cfg), threads)
        for d, r in zip(dev, reg):
            rows.append({"distance": kind.value, "n": d.n, "max_mean_abs_dev": d.max_mean_abs_dev,
                         "dev_stderr": d.stderr, "regret": r.regret, "regret_stderr": r.stderr,
                         "theory_leading_term": r.theory_leading_term})
        ns = [d.n for d in dev]
        if len(ns) > 1:
            positive = all(r.regret > 0 for r in reg)
            slopes.append({"distance": kind.value,
                           "deviation_slope": hs.loglog_slope(ns, [d.max_mean_abs_dev for d in dev]),
                           "regret_slope": hs.loglog_slope(ns, [r.regret for r in reg]) if positive else math.nan})
    w.table("rates.csv", ["distance", "n", "max_mean_abs_dev", "dev_stderr", "regret", "regret_stderr",
                          "theory_leading_term"], rows)
    if slopes:
        w.table("slopes.csv", ["distance", "deviation_slope", "regret_slope"], slopes)


def _exp_lowerbound(cfg, rng, w, threads):
    recs = hs.lower_bound_experiment(cfg.get("p0", 0.75), _n_list(cfg, [500, 1000, 2000, 4000, 8000]),
                                     _distances(cfg, ["l2", "l1", "sep"]), cfg.get("reps", 200), rng,
                                     threads=threads)
    cols = ["scheme", "distance", "n", "epsilon", "max_mean_abs_dev", "stderr"]
    w.table("lowerbound.csv", cols, [r.__dict__ for r in recs])


def _exp_coverage(cfg, rng, w, threads):
    inst = _instance(cfg) if "dists" in cfg else hs.ProblemInstance(
        (DiscreteDistribution.bernoulli(0.5), DiscreteDistribution.bernoulli(0.8)))
    n = _n_list(cfg, [200])[0]
    delta = _delta(cfg) or 0.1
    rows = []
    for di, dname in enumerate(_distances(cfg, ["l2", "l1", "kl", "sep"])):
        res = hs.coverage_audit(dname, inst, n, delta, cfg.get("reps", 2000), rng.spawn(di), threads)
        rows.append({"distance": res.distance, "n": n, "delta": delta, "coverage": res.coverage,
                     "threshold": res.threshold, "passed": res.passed, "finite_checks": res.finite_checks,
                     "runs_with_finite": res.runs_with_finite, "reps": res.reps})
    w.table("coverage.csv", ["distance", "n", "delta", "coverage", "threshold", "passed", "finite_checks",
                             "runs_with_finite", "reps"], rows)


_RUNNERS = {
    "alloc": _exp_alloc,
    "simulate": _exp_simulate,
    "risk": _exp_risk,
    "regret": _exp_regret,
    "figure2": _exp_figure2,
    "table1": _exp_table1,
    "rates": _exp_rates,
    "lowerbound": _exp_lowerbound,
    "coverage": _exp_coverage,
}


# -- argument handling -------------------------------------------------------


def _csv_ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _csv_floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alloctrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", help="JSON config file; flags override its values")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--distance", help="one of %s, or a comma-separated list" % "|".join(DISTANCES))
    r.add_argument("--n", type=int)
    r.add_argument("--n-list", dest="n_list", help="comma-separated budgets")
    r.add_argument("--dists", help="JSON list of mass lists, one per arm")
    r.add_argument("--eps-list", dest="eps_list", help="comma-separated epsilons for the eps family")
    r.add_argument("--delta", help="confidence level in (0,1) or 'auto' for the per-distance default")
    r.add_argument("--eta", type=float)
    r.add_argument("--scheme", choices=["uniform", "oracle", "adaptive"])
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out", help="output directory (default: current directory)")
    r.add_argument("--verbose", action="store_true", default=None)
    return p


def _merge(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("--config", str(e))
        if not isinstance(cfg, dict):
            raise ConfigError("<root>", "config must be a JSON object")
    try:
        if args.experiment:
            cfg["experiment"] = args.experiment
        if args.distance:
            names = [x.strip() for x in args.distance.split(",") if x.strip()]
            cfg.pop("distance", None)
            cfg.pop("distances", None)
            if len(names) == 1:
                cfg["distance"] = names[0]
            else:
                cfg["distances"] = names
        if args.n is not None:
            cfg["n"] = args.n
        if args.n_list:
            cfg["n_list"] = _csv_ints(args.n_list)
        if args.dists:
            try:
                cfg["dists"] = json.loads(args.dists)
            except json.JSONDecodeError as e:
                raise ConfigError("dists", f"not valid JSON ({e.msg})")
        if args.eps_list:
            cfg["eps_list"] = _csv_floats(args.eps_list)
        if args.delta is not None:
            cfg["delta"] = "auto" if args.delta == "auto" else float(args.delta)
    except ValueError as e:
        raise ConfigError("flags", str(e))
    for key in ("eta", "scheme", "reps", "seed", "threads", "out", "verbose"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    if "seed" not in cfg and os.environ.get("ALLOCTRACK_SEED"):
        try:
            cfg["seed"] = int(os.environ["ALLOCTRACK_SEED"])
        except ValueError:
            raise ConfigError("ALLOCTRACK_SEED", "must be an integer")
    cfg.setdefault("seed", 0)
    return cfg


def run(cfg: dict, threads: Optional[int] = None) -> Dict[str, str]:
    """Validate ``cfg``, run the experiment and write outputs. Returns file paths."""
    validate_config(cfg)
    threads = threads or cfg.get("threads") or (os.cpu_count() or 1)
    out = Path(cfg.get("out", "."))
    chash = config_hash(cfg)
    seed = int(cfg.get("seed", 0))
    w = _Writer(out, seed, chash)
    try:
        w.prepare()
        rng = RngStream(seed)
        _RUNNERS[cfg["experiment"]](cfg, rng, w, threads)
        meta = {
            "config": {k: v for k, v in cfg.items() if k not in _VOLATILE},
            "config_hash": chash,
            "seed": seed,
            "rng_algorithm": RNG_ALGORITHM,
            "library": "artifact",
            "library_version": _version(),
            "outputs": [p.name for p in w.written],
        }
        w.json("metadata.json", meta)
    except BaseException:
        w.cleanup()
        raise
    return {p.name: str(p) for p in w.written}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge(args)
        if "experiment" not in cfg:
            raise ConfigError("experiment", "is required")
        run(cfg)
    except ConfigError as e:
        print(f"alloctrack: invalid config: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        print(f"alloctrack: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
