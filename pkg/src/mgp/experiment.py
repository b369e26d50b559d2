"""Config-driven experiment runner: repeated-sampling coverage studies over
(setup x rule) grids, diagnostics emission, and population-functional
computation. Configs are JSON, validated against a schema before any compute;
all outputs are deterministic functions of (config, seed)."""

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import __version__
from .data import (CATEGORICAL, CONTINUOUS, ColumnSpec, DataSchema,
                   StratumSpec, fit_standardization, encode, load_csv,
                   stratified_split)
from .dgp import (HETERO_PRESETS, SyntheticSetup, analytic_standardization,
                  draw_beta0, default_n, generate, make_setup,
                  population_theta, setup_manifest)
from .diagnostics import acid_cumsum, l1_trace
from .engine import (DEFAULT_CHECKPOINT_STRIDE, checkpoint_steps,
                     default_forward_steps, dump_draws_csv, run_mgp)
from .functionals import (LossSpec, MULTINOMIAL_NLL, SQUARED_ERROR,
                          fit_for_loss, prune_collinear)
from .rng import RngStream
from .rules import normalize_rule_config
from .uq import (UQError, contains, joint_credible_set, marginal_interval,
                 size_metric, winkler_score)

SYNTHETIC_KINDS = ("gaussian", "student", "heteroscedastic", "logistic", "gmm")

# Stream tags for derived randomness (arbitrary fixed constants).
TAG_BETA0 = 0xB0
TAG_ORACLE = 0x0E
TAG_DATA = 0xDA
TAG_RUN = 0x36
TAG_DIAG = 0xD1


class ConfigError(ValueError):
    pass


EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["seed", "repetitions", "setups", "rules"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "repetitions": {"type": "integer", "minimum": 1},
        "draws": {"type": "integer", "minimum": 1},
        "forward_steps": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "save_draws": {"enum": ["none", "first", "all"]},
        "condition_threshold": {"type": "number", "exclusiveMinimum": 1},
        "logistic_damping": {"type": "number", "minimum": 0},
        "cutoff": {"enum": ["empirical", "chi2"]},
        "setups": {"type": "array", "minItems": 1,
                   "items": {"type": "object", "required": ["kind"]}},
        "rules": {"type": "array", "minItems": 1,
                  "items": {"type": "object", "required": ["kind"]}},
    },
}

DIAG_SCHEMA = {
    "type": "object",
    "required": ["seed", "mode", "setup", "rule"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["trace", "acid"]},
        "setup": {"type": "object", "required": ["kind"]},
        "rule": {"type": "object", "required": ["kind"]},
        "draws": {"type": "integer", "minimum": 1},
        "forward_steps": {"type": "integer", "minimum": 0},
        "checkpoint_stride": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "mc_draws": {"type": "integer", "minimum": 2},
        "x_star": {"type": "array", "items": {"type": "number"}},
        "logistic_damping": {"type": "number", "minimum": 0},
    },
}

RESULT_COLUMNS = [
    ("setup", "setup name"),
    ("rule", "rule name"),
    ("repetitions", "configured repetition count"),
    ("valid_repetitions", "repetitions with at least two usable draws"),
    ("coverage", "fraction of valid repetitions whose joint credible set contains theta0"),
    ("size_median", "median over repetitions of the posterior covariance trace"),
    ("marginal_coverage", "per-coordinate marginal CI coverage, ';'-joined"),
    ("winkler_median", "per-coordinate median Winkler score, ';'-joined"),
    ("failed_trajectories", "total errored trajectories (kept and excluded, never resampled)"),
    ("nonconverged_trajectories", "total optimizer non-convergences among completed trajectories"),
    ("artifact_version", "package version"),
    ("config_hash", "sha256 of the semantic config"),
]


def canonical_config(cfg: dict) -> str:
    sem = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    return json.dumps(sem, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_config(cfg).encode()).hexdigest()


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def validate_config(cfg, schema):
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid: {exc.message}") from exc


def _schema_from_cfg(schema_cfg) -> DataSchema:
    def col(c):
        levels = c.get("levels")
        return ColumnSpec(c["name"], c["kind"],
                          tuple(levels) if levels is not None else None)
    try:
        feats = tuple(col(c) for c in schema_cfg["features"])
        resp = col(schema_cfg["response"])
    except KeyError as exc:
        raise ConfigError(f"csv setup schema missing {exc}") from None
    return DataSchema(features=feats, response=resp)


@dataclass
class PreparedSetup:
    name: str
    cfg: dict
    loss: LossSpec
    params: object
    theta0: np.ndarray
    n: int
    response_kind: str
    n_classes: int | None
    setup: SyntheticSetup | None = None      # synthetic
    population: object = None                # csv
    strata: tuple = ()
    n_train: int | None = None

    def make_repetition(self, rng):
        if self.setup is not None:
            return generate(self.setup, rng)
        return stratified_split(self.population, self.n_train, self.strata, rng)


def _prepare_setup(s_idx, scfg, cfg, master):
    name = scfg.get("name") or f"{scfg['kind']}-{s_idx}"
    damping = float(cfg.get("logistic_damping", 1e-8))
    threshold = float(cfg.get("condition_threshold", 1e8))
    if scfg["kind"] in SYNTHETIC_KINDS:
        beta0 = draw_beta0(master.child(TAG_BETA0, s_idx))
        setup = make_setup(scfg["kind"], beta0, n=scfg.get("n"),
                           df=scfg.get("df"), s=scfg.get("s"), a=scfg.get("a"))
        params = analytic_standardization(setup)
        mask = np.ones(setup.d + 1, dtype=bool)
        if setup.binary:
            loss = LossSpec(MULTINOMIAL_NLL, mask, n_classes=2, damping=damping)
        else:
            loss = LossSpec(SQUARED_ERROR, mask)
        theta0 = population_theta(setup, loss,
                                  oracle_rng=master.child(TAG_ORACLE, s_idx))
        return PreparedSetup(name=name, cfg=scfg, loss=loss, params=params,
                             theta0=theta0, n=setup.n,
                             response_kind=CATEGORICAL if setup.binary else CONTINUOUS,
                             n_classes=2 if setup.binary else None, setup=setup)
    if scfg["kind"] != "csv":
        raise ConfigError(f"unknown setup kind {scfg['kind']!r}")
    for key in ("path", "n_train", "schema"):
        if key not in scfg:
            raise ConfigError(f"csv setup {name!r} missing {key!r}")
    schema = _schema_from_cfg(scfg["schema"])
    population = load_csv(scfg["path"], schema)
    params = fit_standardization(population)
    design = encode(population, params)
    mask = prune_collinear(design.X, threshold)
    if population.response_kind == CATEGORICAL:
        k = population.schema.n_classes
        loss = LossSpec(MULTINOMIAL_NLL, mask, n_classes=k, damping=damping)
    else:
        k = None
        loss = LossSpec(SQUARED_ERROR, mask)
    y = design.y_enc if k is None else design.y_enc.astype(np.int64)
    theta0 = fit_for_loss(loss, design.X, y).theta
    strata = tuple(StratumSpec(s["column"], s.get("bins"))
                   for s in scfg.get("strata", ()))
    return PreparedSetup(name=name, cfg=scfg, loss=loss, params=params,
                         theta0=theta0, n=int(scfg["n_train"]),
                         response_kind=population.response_kind, n_classes=k,
                         population=population, strata=strata,
                         n_train=int(scfg["n_train"]))


def _check_compatibility(prepared, rules):
    """Setup/rule incompatibilities are reported before any compute."""
    for su in prepared:
        for rcfg in rules:
            kind, opts = normalize_rule_config(rcfg)
            if kind == "copula" and su.response_kind == CATEGORICAL and su.n_classes != 2:
                raise ConfigError(
                    f"rule 'copula' is not applicable to the {su.n_classes}-class "
                    f"response of setup {su.name!r}")
            if kind == "conjugate-ppd" and su.response_kind != CONTINUOUS:
                raise ConfigError(
                    f"rule 'conjugate-ppd' needs a continuous response "
                    f"(setup {su.name!r})")
            if kind == "plugin":
                model = opts.get("model")
                if model == "gaussian-linear" and su.response_kind != CONTINUOUS:
                    raise ConfigError(
                        f"plug-in model 'gaussian-linear' mismatches setup {su.name!r}")
                if model == "logistic" and su.response_kind != CATEGORICAL:
                    raise ConfigError(
                        f"plug-in model 'logistic' mismatches setup {su.name!r}")


def _rule_name(rcfg, k):
    kind, _ = normalize_rule_config(rcfg)
    return rcfg.get("name") or f"{kind}-{k}"


def _rule_steps(rcfg, cfg):
    if "forward_steps" in rcfg:
        return int(rcfg["forward_steps"])
    if "forward_steps" in cfg:
        return int(cfg["forward_steps"])
    return default_forward_steps(dict(rcfg))


# Worker context (inherited by forked pool processes).
_EXP = None


def _rep_task(args):
    s_idx, r = args
    cfg = _EXP["cfg"]
    su = _EXP["prepared"][s_idx]
    master = RngStream(_EXP["seed"])
    dataset = su.make_repetition(master.child(TAG_DATA, s_idx, r))
    alpha = float(cfg.get("alpha", 0.05))
    L = int(cfg.get("draws", 100))
    cutoff = cfg.get("cutoff", "empirical")
    records = []
    for k, rcfg in enumerate(cfg["rules"]):
        steps = _rule_steps(rcfg, cfg)
        seed_run = master.child(TAG_RUN, s_idx, k, r).derive_seed()
        rule_cfg = {key: v for key, v in rcfg.items() if key != "name"}
        res = run_mgp(dataset, rule_cfg, loss=su.loss, N=dataset.n + steps,
                      L=L, seed=seed_run, params=su.params, workers=1)
        rec = {"failed": res.n_failed,
               "nonconverged": int((~res.converged & ~res.failed).sum())}
        try:
            ell = joint_credible_set(res, alpha, cutoff=cutoff)
            rec["covered"] = bool(contains(ell, su.theta0))
            rec["size"] = size_metric(res)
            mcov, wink = [], []
            for j in range(len(su.theta0)):
                ci = marginal_interval(res, j, alpha)
                mcov.append(bool(ci.lower <= su.theta0[j] <= ci.upper))
                wink.append(winkler_score(ci, su.theta0[j]))
            rec["marginal_covered"] = mcov
            rec["winkler"] = wink
            rec["valid"] = True
        except UQError as exc:
            rec.update(valid=False, error=str(exc))
        policy = cfg.get("save_draws", "first")
        if policy == "all" or (policy == "first" and r == 0):
            path = os.path.join(_EXP["outdir"], "draws",
                                f"{su.name}__{_rule_name(rcfg, k)}__rep{r}.csv")
            dump_draws_csv(res, path)
        records.append(rec)
    return s_idx, r, records


def run_experiment(cfg, workers=None, seed_override=None, out_override=None):
    """Execute the full (setup x rule x repetition) grid; returns the run
    directory containing manifest.json, results.csv, schema.json, draws/."""
    global _EXP
    validate_config(cfg, EXPERIMENT_SCHEMA)
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    seed = int(cfg["seed"])
    workers = int(workers if workers is not None else cfg.get("workers", 1))
    out_base = out_override or cfg.get("out", "out")
    chash = config_hash(cfg)
    outdir = os.path.join(out_base, chash[:12])
    os.makedirs(os.path.join(outdir, "draws"), exist_ok=True)

    master = RngStream(seed)
    prepared = [_prepare_setup(i, s, cfg, master) for i, s in enumerate(cfg["setups"])]
    names = [su.name for su in prepared]
    if len(set(names)) != len(names):
        raise ConfigError("setup names must be unique")
    rule_names = [_rule_name(r, k) for k, r in enumerate(cfg["rules"])]
    if len(set(rule_names)) != len(rule_names):
        raise ConfigError("rule names must be unique")
    _check_compatibility(prepared, cfg["rules"])

    R = int(cfg["repetitions"])
    tasks = [(s, r) for s in range(len(prepared)) for r in range(R)]
    _EXP = {"cfg": cfg, "prepared": prepared, "seed": seed, "outdir": outdir}
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                done = list(pool.map(_rep_task, tasks, chunksize=1))
        else:
            done = [_rep_task(t) for t in tasks]
    finally:
        _EXP = None

    by_key = {}
    for s_idx, r, records in done:
        for k, rec in enumerate(records):
            by_key.setdefault((s_idx, k), {})[r] = rec

    rows = []
    for s_idx, su in enumerate(prepared):
        for k in range(len(cfg["rules"])):
            recs = [by_key[(s_idx, k)][r] for r in range(R)]
            valid = [rec for rec in recs if rec.get("valid")]
            if valid:
                cov = float(np.mean([rec["covered"] for rec in valid]))
                size_med = float(np.median([rec["size"] for rec in valid]))
                mcov = np.mean([rec["marginal_covered"] for rec in valid], axis=0)
                wink = np.median([rec["winkler"] for rec in valid], axis=0)
                mcov_s = ";".join(repr(float(v)) for v in mcov)
                wink_s = ";".join(repr(float(v)) for v in wink)
            else:
                cov, size_med, mcov_s, wink_s = float("nan"), float("nan"), "", ""
            rows.append([
                su.name, rule_names[k], R, len(valid),
                repr(cov), repr(size_med), mcov_s, wink_s,
                sum(rec["failed"] for rec in recs),
                sum(rec["nonconverged"] for rec in recs),
                __version__, chash,
            ])

    with open(os.path.join(outdir, "results.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([c for c, _ in RESULT_COLUMNS])
        wr.writerows(rows)

    manifest = {
        "artifact_version": __version__,
        "config": cfg,
        "config_hash": chash,
        "seed": seed,
        "setups": [_setup_manifest_entry(su) for su in prepared],
        "rules": rule_names,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_schema_doc(outdir)
    return outdir


def _setup_manifest_entry(su: PreparedSetup):
    entry = {"name": su.name, "n": su.n,
             "response_kind": su.response_kind,
             "theta0": [float(v) for v in su.theta0],
             "mask": [bool(b) for b in su.loss.mask]}
    if su.setup is not None:
        entry.update(setup_manifest(su.setup, None, su.theta0))
    else:
        entry["path"] = su.cfg.get("path")
    return entry


def _write_schema_doc(outdir):
    doc = {
        "results.csv": {"columns": [{"name": c, "description": d}
                                    for c, d in RESULT_COLUMNS]},
        "draws/*.csv": {"columns": [
            {"name": "trajectory", "description": "trajectory index"},
            {"name": "theta_j", "description": "functional draw coordinates"},
            {"name": "converged", "description": "1 when the trajectory completed and its optimizer converged"},
        ]},
        "diagnostics/trace__*.csv": {"columns": [
            {"name": "step", "description": "forward-sampling step m"},
            {"name": "value", "description": "scaled L1 distance |theta(F_n) - theta(F_m)|_1 / p"},
            {"name": "trajectory", "description": "trajectory index, or 'mean'"},
        ]},
        "diagnostics/acid__*.csv": {"columns": [
            {"name": "step", "description": "conditioning size i"},
            {"name": "term", "description": "L1 gap between averaged one-step-later and current predictive mass"},
            {"name": "cumulative", "description": "running sum of terms"},
        ]},
    }
    with open(os.path.join(outdir, "schema.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_diagnostics(cfg, workers=None, seed_override=None, out_override=None):
    """Emit trace or martingale-gap series for one (setup, rule) pair."""
    validate_config(cfg, DIAG_SCHEMA)
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    seed = int(cfg["seed"])
    workers = int(workers if workers is not None else cfg.get("workers", 1))
    out_base = out_override or cfg.get("out", "out")
    chash = config_hash(cfg)
    outdir = os.path.join(out_base, chash[:12], "diagnostics")
    os.makedirs(outdir, exist_ok=True)

    master = RngStream(seed)
    exp_like = {"logistic_damping": cfg.get("logistic_damping", 1e-8),
                "condition_threshold": 1e8}
    su = _prepare_setup(0, cfg["setup"], exp_like, master)
    _check_compatibility([su], [cfg["rule"]])
    dataset = su.make_repetition(master.child(TAG_DATA, 0, 0))
    rule_cfg = {k: v for k, v in cfg["rule"].items() if k != "name"}
    rname = _rule_name(cfg["rule"], 0)

    if cfg["mode"] == "trace":
        steps = int(cfg.get("forward_steps", _rule_steps(cfg["rule"], {})))
        stride = int(cfg.get("checkpoint_stride", DEFAULT_CHECKPOINT_STRIDE))
        L = int(cfg.get("draws", 30))
        N = dataset.n + steps
        design = encode(dataset, su.params)
        y = design.y_enc if su.n_classes is None else design.y_enc.astype(np.int64)
        theta_ref = fit_for_loss(su.loss, design.X, y).theta
        res = run_mgp(dataset, rule_cfg, loss=su.loss, N=N, L=L,
                      seed=master.child(TAG_DIAG).derive_seed(), params=su.params,
                      checkpoints=checkpoint_steps(dataset.n, N, stride),
                      workers=workers)
        tr = l1_trace(res.trajectories, theta_ref)
        path = os.path.join(outdir, f"trace__{su.name}__{rname}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["step", "value", "trajectory"])
            for row, tid in zip(tr.per_trajectory, tr.trajectory_ids):
                for m, v in zip(tr.steps, row):
                    wr.writerow([m, repr(float(v)), tid])
            for m, v in zip(tr.steps, tr.mean):
                wr.writerow([m, repr(float(v)), "mean"])
        return path

    horizon = int(cfg.get("horizon", 100))
    M = int(cfg.get("mc_draws", 500))
    x_star = cfg.get("x_star")
    if x_star is None:
        x_star = [0.0] * len(dataset.schema.features)
    ac = acid_cumsum(rule_cfg, dataset, np.asarray(x_star, dtype=float),
                     N=dataset.n + horizon, M=M,
                     rng=master.child(TAG_DIAG), params=su.params)
    path = os.path.join(outdir, f"acid__{su.name}__{rname}.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "term", "cumulative"])
        for m, t, c in zip(ac.steps, ac.terms, ac.cumulative):
            wr.writerow([m, repr(float(t)), repr(float(c))])
    return path


def run_theta0(cfg, seed_override=None, out_override=None):
    """Compute the population functional for every configured setup."""
    validate_config(cfg, EXPERIMENT_SCHEMA)
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    master = RngStream(int(cfg["seed"]))
    prepared = [_prepare_setup(i, s, cfg, master) for i, s in enumerate(cfg["setups"])]
    out_base = out_override or cfg.get("out", "out")
    outdir = os.path.join(out_base, config_hash(cfg)[:12])
    os.makedirs(outdir, exist_ok=True)
    entries = [_setup_manifest_entry(su) for su in prepared]
    path = os.path.join(outdir, "theta0.json")
    with open(path, "w") as fh:
        json.dump({"seed": int(cfg["seed"]), "setups": entries}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    return path
