"""Batch driver: configs, runs, manifests and the ``ma-lab`` command.

    ma-lab solve    -c config.json -o sol.json
    ma-lab atlas    -i sol.json -o atlas.json
    ma-lab verify   --lemma {hessmean|hesssupermean|levelsets|main|reg} -i sol.json -o report.csv
    ma-lab estimate --k 0..2 -i sol.json
    ma-lab report   manifest.json ... [-o summary.csv]
    ma-lab run      -c config.json --out DIR

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 violated
inequality.
"""
import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import SCHEMA, __version__
from .errors import MALabError, MixedSchema, ValidationError
from .lab.pipeline import STAGES, run_instance, stage_order
from .lab.report import CSV_FIELDS, EstimateReport
from .solver.catalog import CATALOG, analytic_catalog
from .solver.problem import Density, MAProblem
from .solver.solve import MASolution, solve

log = logging.getLogger("ma_lab")

LEMMAS = {
    "hessmean": ("hessmean", ("hessmean", "v1", "v3", "divergence")),
    "hesssupermean": ("hesssupermean", ("A", "hesssupermean", "abp_chain",
                                        "envelope")),
    "levelsets": ("levelsets", ("levelsets", "levelsets_replay", "maximalineq")),
    "main": ("main", ("keyestimate", "main", "layer_cake")),
    "reg": ("reg", ("comp", "reg_reduction")),
}


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    """One experiment: a problem (or catalog entry), a grid and stages.

    ``seeds`` turns a rough density into an ensemble, one instance per seed.
    """
    domain: dict = field(default_factory=lambda: {"kind": "disc"})
    f: dict = field(default_factory=lambda: {"kind": "random", "lambda": 0.5,
                                             "Lambda": 2.0, "seed": 0})
    catalog: str = None
    grid: float = 64
    stages: list = field(default_factory=lambda: list(STAGES))
    k: list = field(default_factory=lambda: [0, 1, 2])
    samples: int = 100
    seeds: list = None
    out: str = "ma-lab-out"
    jobs: int = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.catalog is None:
            lam = float(self.f.get("lambda", 1.0))
            Lam = float(self.f.get("Lambda", lam))
            if not 0 < lam <= Lam:
                raise ValidationError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
        elif self.catalog not in CATALOG:
            raise ValidationError(f"unknown catalog entry {self.catalog!r}")
        if not float(self.grid) > 0:
            raise ValidationError("grid must be positive")
        if not self.stages:
            raise ValidationError("empty stage list")
        pos = {}
        for s in self.stages:
            if s not in STAGES:
                raise ValidationError(f"unknown stage {s!r}")
            pos[s] = len(pos)
        # listed stages must respect the pipeline order (solve before verify)
        order = [STAGES.index(s) for s in self.stages]
        if order != sorted(order):
            raise ValidationError(f"stages out of dependency order: {self.stages}")
        if any(int(k) < 0 for k in self.k):
            raise ValidationError("k must be nonnegative")
        if int(self.samples) < 1:
            raise ValidationError("samples must be positive")
        return self

    @classmethod
    def from_json(cls, doc):
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known - {"schema"}
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        return cls(**{k: v for k, v in doc.items() if k in known})

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(doc)

    def to_json(self):
        doc = asdict(self)
        doc["schema"] = SCHEMA
        return doc

    def digest(self):
        doc = self.to_json()
        doc.pop("out"), doc.pop("jobs")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def instances(self):
        """(instance_id, seed, problem or None) per instance."""
        if self.catalog is not None:
            return [(f"{self.catalog}-grid{self.grid:g}", 0, None)]
        seeds = self.seeds if self.seeds is not None else [self.f.get("seed", 0)]
        out = []
        for s in seeds:
            f = dict(self.f, seed=int(s))
            prob = MAProblem(self.domain, Density.from_json(f))
            out.append((f"seed{int(s)}-grid{self.grid:g}", int(s), prob))
        return out

    def make_solution(self, seed, problem):
        if self.catalog is not None:
            return analytic_catalog(self.catalog, grid=self.grid)
        return solve(problem, self.grid)


@dataclass
class RunManifest:
    config_hash: str
    versions: dict
    stage_times: dict         # instance -> stage -> seconds
    digests: dict             # file name -> sha256
    outputs: list
    failures: dict            # instance -> failing inequality ids
    schema: str = SCHEMA

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc):
        if doc.get("schema") != SCHEMA:
            raise MixedSchema(f"manifest schema {doc.get('schema')!r}, "
                              f"expected {SCHEMA!r}")
        return cls(**doc)

    @property
    def exit_code(self):
        return 4 if any(self.failures.values()) else 0


def versions():
    import numba
    import scipy
    import shapely
    return {"ma_lab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "shapely": shapely.__version__, "numba": numba.__version__}


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
    return str(path)


def atlas_doc(report):
    c = report.constants
    return {"schema": SCHEMA, "instance_id": report.instance_id,
            "rho": c.get("rho"), "beta_half": c.get("beta_half"),
            "theta": c.get("theta"), "eps0": 0.1, "eps1": c.get("eps1"),
            "eps2": c.get("eps2"), "K": c.get("K")}


def _dumps(doc):
    return json.dumps(doc, indent=1, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _run_one(config, iid, seed, problem):
    t0 = time.perf_counter()
    sol = config.make_solution(seed, problem)
    t_solve = time.perf_counter() - t0
    stages = stage_order(config.stages)
    res = run_instance(problem, config.grid, stages, config.samples, seed,
                       tuple(int(k) for k in config.k), iid, solution=sol)
    res.timings["solve"] = t_solve
    # prerequisite stages that were not asked for are booked on the next one
    times, carry = {}, 0.0
    for s in stages:
        carry += res.timings.get(s, 0.0)
        if s in config.stages:
            times[s], carry = carry, 0.0
    rep = res.report
    rep.info.pop("timings", None)
    return iid, sol, rep, times


def run(config, jobs=None):
    """Run every instance of ``config`` and write its artifacts.

    Per instance: ``<id>.solution.json``, ``<id>.atlas.json`` (when the
    sections were built), ``<id>.report.json`` and ``<id>.report.csv``.
    Returns the RunManifest, also written to ``manifest.json``.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_json(config)
    config.validate()
    out = Path(config.out)
    inst = config.instances()
    if jobs is None:
        jobs = config.jobs or int(os.environ.get("MA_LAB_JOBS", "1"))
    if jobs > 1 and len(inst) > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=jobs)(delayed(_run_one)(config, *a) for a in inst)
    else:
        results = [_run_one(config, *a) for a in inst]
    outputs, digests, times, failures = [], {}, {}, {}
    for iid, sol, rep, t in results:
        files = [_write(out / f"{iid}.solution.json", _dumps(sol.to_json()))]
        if "rho" in rep.constants:
            files.append(_write(out / f"{iid}.atlas.json", _dumps(atlas_doc(rep))))
        files.append(_write(out / f"{iid}.report.json", _dumps(rep.to_json())))
        files.append(_write(out / f"{iid}.report.csv", rep.to_csv()))
        for f in files:
            digests[Path(f).name] = _sha(f)
        outputs += [Path(f).name for f in files]
        times[iid] = t
        failures[iid] = rep.failures()
    man = RunManifest(config.digest(), versions(), times, digests, outputs, failures)
    _write(out / "manifest.json", _dumps(man.to_json()))
    return man


# ---------------------------------------------------------------- report

def _load_reports(manifests):
    reps = []
    for m in manifests:
        if isinstance(m, (str, Path)):
            path = Path(m)
            try:
                doc = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot read manifest {m}: {exc}") from exc
            man, base = RunManifest.from_json(doc), path.parent
        else:
            man, base = m, Path(".")
        for name in man.outputs:
            if name.endswith(".report.json"):
                reps.append(EstimateReport.from_json(
                    json.loads((base / name).read_text())))
    return reps


def summarize(reports):
    """Per constant: (count, min, median, max) across reports."""
    keys = sorted({k for r in reports for k in r.constants})
    rows = []
    for k in keys:
        v = np.array([r.constants[k] for r in reports
                      if isinstance(r.constants.get(k), (int, float))], float)
        v = v[np.isfinite(v)]
        if len(v):
            rows.append((k, len(v), v.min(), float(np.median(v)), v.max()))
        else:
            rows.append((k, 0, np.nan, np.nan, np.nan))
    return rows


def report(manifests, fmt="text"):
    """Aggregate the constants of one or more runs.

    Parameters
    ----------
    manifests : list of RunManifest or paths to manifest.json
    fmt : {"text", "csv"}

    Raises
    ------
    ValidationError
        If no manifest is given.
    MixedSchema
        If manifests disagree on the schema version.
    """
    if not manifests:
        raise ValidationError("no manifest to report on")
    schemas = {m.schema if isinstance(m, RunManifest)
               else json.loads(Path(m).read_text()).get("schema") for m in manifests}
    if len(schemas) > 1:
        raise MixedSchema(f"manifests mix schema versions {sorted(map(str, schemas))}")
    rows = summarize(_load_reports(manifests))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("schema", "constant", "count", "min", "median", "max"))
        for k, c, lo, med, hi in rows:
            w.writerow((SCHEMA, k, c, repr(float(lo)), repr(float(med)),
                        repr(float(hi))))
        return buf.getvalue()
    lines = [f"# {SCHEMA}", f"{'constant':<16}{'n':>4}{'min':>14}{'median':>14}"
             f"{'max':>14}"]
    for k, c, lo, med, hi in rows:
        lines.append(f"{k:<16}{c:>4}{lo:>14.6g}{med:>14.6g}{hi:>14.6g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- command line

def _parse_k(text):
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k range {text!r}") from None


def _config(args):
    doc = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
    for key in ("grid", "out", "jobs"):
        if getattr(args, key, None) is not None:
            doc[key] = getattr(args, key)
    if getattr(args, "seed", None) is not None:
        doc.setdefault("f", ExperimentConfig().f)
        doc["f"] = dict(doc["f"], seed=args.seed)
        doc.pop("seeds", None)
    if getattr(args, "k", None) is not None:
        doc["k"] = args.k
    return ExperimentConfig.from_json(doc)


def _load_solution(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read solution {path}: {exc}") from exc
    if doc.get("schema") != SCHEMA:
        raise MixedSchema(f"solution schema {doc.get('schema')!r}")
    return MASolution.from_json(doc)


def _emit(text, out):
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def cmd_solve(args):
    cfg = _config(args)
    iid, seed, prob = cfg.instances()[0]
    sol = cfg.make_solution(seed, prob)
    _emit(_dumps(sol.to_json()), args.output)
    log.info("%s: residual %.3e after %d iterations (%s)", iid, sol.residual,
             sol.iterations, sol.method)
    return 0


def _verify(sol, stages, k=(0, 1, 2), samples=100, seed=0):
    grid = sol.u.lattice.h if sol.u.lattice is not None else 0
    res = run_instance(sol.problem, grid, stages, samples, seed, tuple(k),
                       "solution", solution=sol)
    res.report.info.pop("timings", None)
    return res.report


def cmd_atlas(args):
    sol = _load_solution(args.input)
    rep = _verify(sol, ("atlas",), samples=args.samples, seed=args.seed)
    _emit(_dumps(atlas_doc(rep)), args.output)
    bad = [i for i in rep.failures()
           if i.split(":")[0] in ("secprop_i", "secprop_ii", "secprop_iii",
                                  "secprop_iv", "dilation_chain", "covering")]
    return 4 if bad else 0


def cmd_verify(args):
    sol = _load_solution(args.input)
    stage, ids = LEMMAS[args.lemma]
    rep = _verify(sol, (stage,), samples=args.samples, seed=args.seed)
    text = rep.to_csv() if (args.output or "").endswith(".csv") or not args.json \
        else _dumps(rep.to_json())
    _emit(text, args.output)
    bad = [i for i in rep.failures() if i.split(":")[0] in ids]
    for i in bad:
        log.error("violated: %s", i)
    return 4 if bad else 0


def cmd_estimate(args):
    sol = _load_solution(args.input)
    rep = _verify(sol, ("main",), k=args.k or [0, 1, 2])
    lines = [f"# {SCHEMA}", f"{'k':>3}{'I_k+1(U/2)':>16}{'I_k(3U/4)':>16}"
             f"{'ratio':>12}{'verdict':>9}"]
    for r in rep.rows:
        if r["inequality_id"].startswith("main:"):
            k = r["inequality_id"].split("=")[1]
            lines.append(f"{k:>3}{r['lhs']:>16.8g}{r['rhs']:>16.8g}"
                         f"{r['constant']:>12.6g}{'pass' if r['verdict'] else 'fail':>9}")
    _emit("\n".join(lines) + "\n", None)
    if args.output:
        _write(args.output, rep.to_csv())
    bad = [i for i in rep.failures()
           if i.split(":")[0] in ("keyestimate", "main", "layer_cake")]
    return 4 if bad else 0


def cmd_report(args):
    _emit(report(args.manifests, "csv" if args.csv else "text"), args.output)
    return 0


def cmd_run(args):
    man = run(_config(args), jobs=args.jobs)
    sys.stdout.write(_dumps(man.to_json()) + "\n")
    return man.exit_code


def build_parser():
    p = argparse.ArgumentParser(prog="ma-lab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"ma-lab {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, config=False, inp=False):
        if config:
            q.add_argument("-c", "--config", help="JSON experiment config")
            q.add_argument("--grid", type=float)
            q.add_argument("--seed", type=int)
        if inp:
            q.add_argument("-i", "--input", required=True, help="solution JSON")
            q.add_argument("--samples", type=int, default=100)
            q.add_argument("--seed", type=int, default=0)
        q.add_argument("-o", "--output")

    q = sub.add_parser("solve", help="solve one problem")
    common(q, config=True)
    q.set_defaults(func=cmd_solve)
    q = sub.add_parser("atlas", help="section constants of a solution")
    common(q, inp=True)
    q.set_defaults(func=cmd_atlas)
    q = sub.add_parser("verify", help="check one lemma on a solution")
    q.add_argument("--lemma", required=True, choices=sorted(LEMMAS))
    q.add_argument("--json", action="store_true", help="JSON instead of CSV")
    common(q, inp=True)
    q.set_defaults(func=cmd_verify)
    q = sub.add_parser("estimate", help="L log^k L ratios of a solution")
    q.add_argument("-i", "--input", required=True)
    q.add_argument("--k", type=_parse_k, default=None, help="e.g. 0..2")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_estimate)
    q = sub.add_parser("report", help="aggregate run manifests")
    q.add_argument("manifests", nargs="*")
    q.add_argument("--csv", action="store_true")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_report)
    q = sub.add_parser("run", help="full pipeline from a config")
    common(q, config=True)
    q.add_argument("--k", type=_parse_k, default=None)
    q.add_argument("--out")
    q.add_argument("--jobs", type=int, default=None,
                   help="parallel instances (default MA_LAB_JOBS or 1)")
    q.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MALabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
