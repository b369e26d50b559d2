"""Convergence and validity diagnostics: the scaled L1 trace of the
functional along trajectories, the cumulative martingale-gap sums at a fixed
query point, and concentration sweeps over the sample size."""

from dataclasses import dataclass

import numpy as np

from .engine import checkpoint_steps, run_mgp
from .rng import RngStream
from .rules import RuleError, rule_init
from .rules.base import Categorical


class DiagnosticsError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceResult:
    steps: tuple                 # checkpoint steps m
    mean: np.ndarray             # mean over trajectories of |theta_n - theta_m|_1 / p
    per_trajectory: np.ndarray   # one row per trajectory (grey lines)
    trajectory_ids: tuple


def l1_trace(trajectories, theta_ref) -> TraceResult:
    """Scaled L1 distance between the reference functional value and the
    checkpointed values, per checkpoint, averaged over trajectories."""
    theta_ref = np.asarray(theta_ref, dtype=float)
    p = len(theta_ref)
    ok = [t for t in trajectories if t.error is None and t.checkpoints]
    if not ok:
        raise DiagnosticsError("no successful trajectories with checkpoints")
    steps = tuple(m for m, _ in ok[0].checkpoints)
    rows = []
    for t in ok:
        if tuple(m for m, _ in t.checkpoints) != steps:
            raise DiagnosticsError("trajectories carry different checkpoint grids")
        rows.append([np.abs(theta_ref - th).sum() / p for _, th in t.checkpoints])
    per = np.asarray(rows)
    return TraceResult(steps=steps, mean=per.mean(axis=0), per_trajectory=per,
                       trajectory_ids=tuple(t.index for t in ok))


@dataclass(frozen=True)
class AcidResult:
    steps: tuple       # i = n .. N
    terms: np.ndarray  # L1 gap between the averaged one-step-later and the
                       # current predictive mass at x_star
    cumulative: np.ndarray
    mc_se: np.ndarray  # Monte Carlo standard error of each term


DEFAULT_ACID_MC = 500
DEFAULT_ACID_HORIZON = 100


def acid_cumsum(rule_config, dataset, x_star, N=None, M=DEFAULT_ACID_MC,
                rng: RngStream | None = None, params=None) -> AcidResult:
    """Cumulative sum over i of sum_y |E[p_{i+1}(y|x*)] - p_i(y|x*)|.

    All future covariates are pinned to x_star. The expectation over the
    next response is estimated from M update-and-evaluate draws; since the
    updated mass is a deterministic function of the drawn class, the K
    distinct updates are evaluated once and weighted by their draw counts.
    """
    from .data import fit_standardization
    if params is None:
        params = fit_standardization(dataset)
    state = rule_init(rule_config, dataset, params)
    if hasattr(state, "reserve"):
        horizon = (N if N is not None else state.step + DEFAULT_ACID_HORIZON)
        state.reserve(horizon + 2)
    n = state.step
    if N is None:
        N = n + DEFAULT_ACID_HORIZON
    if rng is None:
        rng = RngStream(0)
    x_star = np.asarray(x_star, dtype=float)

    dist = state.predicted_distribution(x_star)
    if not isinstance(dist, Categorical):
        raise RuleError(
            f"rule {state.kind!r} does not expose an evaluable categorical "
            "predictive distribution")

    steps, terms, ses = [], [], []
    for i in range(n, N + 1):
        base = state.predicted_distribution(x_star).probs
        K = len(base)
        nxt = np.empty((K, K))
        for y in range(K):
            st2 = state.clone()
            st2.update(x_star, y)
            nxt[y] = st2.predicted_distribution(x_star).probs
        draws = rng.gen.random(M)
        ys = np.searchsorted(np.cumsum(base), draws, side="right")
        samples = nxt[ys]               # (M, K) update-and-evaluate draws
        est = samples.mean(axis=0)
        term = float(np.abs(est - base).sum())
        se = float((samples.std(axis=0, ddof=1) / np.sqrt(M)).sum())
        steps.append(i)
        terms.append(term)
        ses.append(se)
        y_next = int(np.searchsorted(np.cumsum(base), rng.gen.random(), side="right"))
        state.update(x_star, y_next)
    terms = np.asarray(terms)
    return AcidResult(steps=tuple(steps), terms=terms,
                      cumulative=np.cumsum(terms), mc_se=np.asarray(ses))


@dataclass(frozen=True)
class SweepPoint:
    n: int
    mean: np.ndarray
    sd: np.ndarray | None  # None when a single draw was requested
    draws: np.ndarray


def concentration_sweep(make_dataset, rule_config, n_grid, forward_steps,
                        L, seed, loss=None, params=None, workers=1):
    """Posterior draws for increasing sample sizes n with a fixed number of
    forward steps; make_dataset(n, rng) -> Dataset supplies the data."""
    n_grid = list(n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise DiagnosticsError("n grid must be strictly increasing")
    base = RngStream(seed)
    points = []
    for idx, n in enumerate(n_grid):
        dataset = make_dataset(int(n), base.child(0xDA7A, idx))
        res = run_mgp(dataset, rule_config, loss=loss,
                      N=dataset.n + int(forward_steps), L=L,
                      seed=base.child(0x5EED, idx).derive_seed(),
                      params=params, workers=workers)
        mat = res.ok_draws
        sd = mat.std(axis=0, ddof=1) if mat.shape[0] > 1 else None
        points.append(SweepPoint(n=int(n), mean=mat.mean(axis=0), sd=sd,
                                 draws=mat))
    return points
