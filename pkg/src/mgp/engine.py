"""Predictive resampling: generate L independent trajectories of depth N
(features drawn from the growing empirical pool, responses from the rule),
evaluate the risk functional on each augmented sample, and collect posterior
draws. Trajectories parallelize across processes with per-trajectory random
streams keyed by trajectory index, so results are identical for any worker
count."""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL, Dataset, encode, fit_standardization
from .functionals import FitError, LossSpec, MULTINOMIAL_NLL, SQUARED_ERROR, fit_for_loss
from .rng import RngStream
from .rules import RuleError, rule_init
from .rules.external import ExternalRuleState

DEFAULT_FORWARD_STEPS = 2000
DEFAULT_FORWARD_STEPS_EXTERNAL = 500
DEFAULT_DRAWS = 100
DEFAULT_CHECKPOINT_STRIDE = 25
DEFAULT_LOGISTIC_DAMPING = 1e-8


class EngineError(RuntimeError):
    pass


@dataclass
class Trajectory:
    index: int
    gen_X: np.ndarray | None
    gen_y: np.ndarray | None
    checkpoints: list
    theta: np.ndarray | None
    converged: bool
    error: str | None = None


@dataclass
class PosteriorDraws:
    draws: np.ndarray          # (L, p); failed rows are NaN and flagged
    converged: np.ndarray      # optimizer flag per trajectory
    failed: np.ndarray         # trajectory errored (kept, never dropped)
    errors: tuple              # messages for failed trajectories
    rule_kind: str
    n: int
    N: int
    L: int
    seed: int
    column_names: tuple
    trajectories: list | None = None

    @property
    def ok(self):
        return self.converged & ~self.failed

    @property
    def ok_draws(self):
        return self.draws[self.ok]

    @property
    def n_failed(self):
        return int(self.failed.sum())


def feature_pool_sample(pool, rng: RngStream) -> int:
    """Uniform index into the current (growing) feature pool."""
    size = len(pool)
    if size < 1:
        raise EngineError("feature pool is empty")
    return int(rng.gen.integers(size))


def default_loss(dataset: Dataset, design_width, damping=DEFAULT_LOGISTIC_DAMPING,
                 mask=None) -> LossSpec:
    if mask is None:
        mask = np.ones(design_width, dtype=bool)
    if dataset.response_kind == CATEGORICAL:
        return LossSpec(MULTINOMIAL_NLL, mask, n_classes=dataset.schema.n_classes,
                        damping=damping)
    return LossSpec(SQUARED_ERROR, mask)


def default_forward_steps(rule_config):
    kind = rule_config if isinstance(rule_config, str) else rule_config.get("kind")
    return DEFAULT_FORWARD_STEPS_EXTERNAL if kind == "external" else DEFAULT_FORWARD_STEPS


@dataclass
class _Context:
    state0: object
    X0: np.ndarray
    y0: np.ndarray
    loss: LossSpec
    n: int
    N: int
    d: int
    seed: int
    checkpoints: tuple
    categorical: bool
    keep_pairs: bool


_CTX: _Context | None = None


def _fit_theta(ctx: _Context, state, gen_X, gen_y, rng):
    pairs = state.functional_pairs(rng)
    if pairs is None:
        X = np.vstack([ctx.X0, gen_X]) if len(gen_X) else ctx.X0
        y = np.concatenate([ctx.y0, gen_y]) if len(gen_y) else ctx.y0
    else:
        X, y = pairs
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    y = y.astype(np.int64) if ctx.categorical else y.astype(float)
    res = fit_for_loss(ctx.loss, design, y)
    return res.theta, res.converged


def _simulate(l: int) -> Trajectory:
    ctx = _CTX
    rng = RngStream(ctx.seed, stream_id=l)
    state = ctx.state0.clone()
    n, N, d = ctx.n, ctx.N, ctx.d
    steps = N - n
    gen_X = np.empty((steps, d))
    gen_y = np.empty(steps)
    cps = set(ctx.checkpoints)
    checkpoints = []
    try:
        if n in cps:
            theta_n, _ = _fit_theta(ctx, state, gen_X[:0], gen_y[:0], rng)
            checkpoints.append((n, theta_n))
        if state.samples_pairs:
            for i in range(n, N):
                x, y = state.sample_pair(rng)
                state.update(x, y)
                gen_X[i - n] = x
                gen_y[i - n] = y
                if i + 1 in cps:
                    th, _ = _fit_theta(ctx, state, gen_X[:i + 1 - n],
                                       gen_y[:i + 1 - n], rng)
                    checkpoints.append((i + 1, th))
        else:
            pool = np.empty((N, d))
            pool[:n] = ctx.X0
            for i in range(n, N):
                j = feature_pool_sample(pool[:i], rng)
                x = pool[j]
                y = state.sample_and_update(x, rng)
                pool[i] = x
                gen_X[i - n] = x
                gen_y[i - n] = y
                if i + 1 in cps:
                    th, _ = _fit_theta(ctx, state, gen_X[:i + 1 - n],
                                       gen_y[:i + 1 - n], rng)
                    checkpoints.append((i + 1, th))
        theta, converged = _fit_theta(ctx, state, gen_X, gen_y, rng)
    except (RuleError, FitError, np.linalg.LinAlgError) as exc:
        return Trajectory(l, None, None, [], None, False,
                          error=f"{type(exc).__name__}: {exc}")
    finally:
        if isinstance(state, ExternalRuleState):
            state.close()
    if not ctx.keep_pairs:
        gen_X = gen_y = None
    return Trajectory(l, gen_X, gen_y, checkpoints, theta, converged)


def run_mgp(dataset: Dataset, rule_config, loss: LossSpec | None = None,
            N: int | None = None, L: int = DEFAULT_DRAWS, seed: int = 0,
            params=None, checkpoints=None, workers: int = 1,
            keep_trajectories: bool = False) -> PosteriorDraws:
    """Sample the finite martingale posterior of the risk functional.

    checkpoints: optional iterable of steps m (n <= m <= N) at which the
    functional is also evaluated along each trajectory.
    """
    global _CTX
    if params is None:
        params = fit_standardization(dataset)
    design = encode(dataset, params)
    X0 = design.X[:, 1:]
    y0 = design.y_enc.astype(float)
    n, d = X0.shape
    if N is None:
        N = n + default_forward_steps(rule_config)
    if N < n:
        raise EngineError(f"depth N={N} below the observed count n={n}")
    if L < 1:
        raise EngineError("need at least one posterior draw")
    if checkpoints is not None:
        checkpoints = tuple(sorted(set(int(m) for m in checkpoints)))
        if checkpoints and (checkpoints[0] < n or checkpoints[-1] > N):
            raise EngineError("checkpoints must lie in [n, N]")
        if not checkpoints or checkpoints[-1] != N:
            checkpoints = checkpoints + (N,)
    else:
        checkpoints = ()

    state0 = rule_init(rule_config, dataset, params)
    if hasattr(state0, "reserve"):
        state0.reserve(N + 1)
    if loss is None:
        loss = default_loss(dataset, design.X.shape[1])

    kind, _ = _normalized_kind(rule_config)
    ctx = _Context(state0=state0, X0=X0, y0=y0, loss=loss, n=n, N=int(N), d=d,
                   seed=int(seed), checkpoints=checkpoints,
                   categorical=dataset.response_kind == CATEGORICAL,
                   keep_pairs=keep_trajectories)
    _CTX = ctx
    try:
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunk = max(1, L // (4 * workers))
                trajectories = list(pool.map(_simulate, range(L), chunksize=chunk))
        else:
            trajectories = [_simulate(l) for l in range(L)]
    finally:
        _CTX = None

    p = loss.dim
    draws = np.full((L, p), np.nan)
    converged = np.zeros(L, dtype=bool)
    failed = np.zeros(L, dtype=bool)
    errors = []
    for t in trajectories:
        if t.error is not None:
            failed[t.index] = True
            errors.append(f"trajectory {t.index}: {t.error}")
        else:
            draws[t.index] = t.theta
            converged[t.index] = t.converged
    names = tuple(nm for nm, keep in zip(design.column_names, loss.mask) if keep)
    if loss.kind == MULTINOMIAL_NLL:
        names = tuple(f"{nm}[class={c}]" for c in range(1, loss.n_classes)
                      for nm in names)
    return PosteriorDraws(
        draws=draws, converged=converged, failed=failed, errors=tuple(errors),
        rule_kind=kind, n=n, N=int(N), L=int(L), seed=int(seed),
        column_names=names,
        trajectories=trajectories if (keep_trajectories or checkpoints) else None)


def _normalized_kind(rule_config):
    from .rules import normalize_rule_config
    return normalize_rule_config(rule_config)


def checkpoint_steps(n, N, stride=DEFAULT_CHECKPOINT_STRIDE):
    """Checkpoint grid n, n+stride, ..., N (N always included)."""
    steps = list(range(n, N, int(stride)))
    if not steps or steps[-1] != N:
        steps.append(N)
    return steps


def dump_draws_csv(result: PosteriorDraws, path):
    """draws CSV: one row per trajectory (trajectory, theta_1..theta_p, converged)."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trajectory"] + [f"theta_{j + 1}" for j in range(result.draws.shape[1])]
                    + ["converged"])
        for l in range(result.L):
            row = [l] + [repr(float(v)) for v in result.draws[l]]
            row.append(int(bool(result.converged[l]) and not bool(result.failed[l])))
            wr.writerow(row)


def dump_trajectories_csv(result: PosteriorDraws, path):
    """Generated-pair CSV: (trajectory, step, x..., y)."""
    if result.trajectories is None:
        raise EngineError("run_mgp(..., keep_trajectories=True) required for a dump")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        d = 0
        for t in result.trajectories:
            if t.gen_X is not None:
                d = t.gen_X.shape[1]
                break
        wr.writerow(["trajectory", "step"] + [f"x{j + 1}" for j in range(d)] + ["y"])
        for t in result.trajectories:
            if t.gen_X is None:
                continue
            for s in range(t.gen_X.shape[0]):
                wr.writerow([t.index, result.n + s + 1]
                            + [repr(float(v)) for v in t.gen_X[s]]
                            + [repr(float(t.gen_y[s]))])
