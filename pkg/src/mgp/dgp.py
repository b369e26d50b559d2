"""Synthetic data-generating setups and the population risk minimizer.

Features are i.i.d. uniform on [-1, 1]^10; the response is linear with
Gaussian, Student-t, or covariate-dependent heteroscedastic noise, or
Bernoulli through a logistic or Gaussian-mixture link. Standardization uses
the analytic population moments so the functional lives on a common scale
across repetitions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import (CATEGORICAL, CONTINUOUS, ColumnSpec, DataSchema, Dataset,
                   StandardizationParams)
from .functionals import (LossSpec, MULTINOMIAL_NLL, SQUARED_ERROR,
                          fit_linear, fit_logistic)
from .rng import RngStream

GAUSSIAN = "gaussian"
STUDENT = "student"
HETEROSCEDASTIC = "heteroscedastic"
LOGISTIC_LINK = "logistic"
GMM_LINK = "gmm"

BINARY_KINDS = (LOGISTIC_LINK, GMM_LINK)
DIMENSION = 10
BETA0_RANGE = (-2.0, 3.0)
DEFAULT_N_CONTINUOUS = 20
DEFAULT_N_BINARY = 100
ORACLE_SIZE = 10 ** 6

# Heteroscedasticity presets (s_left, s_mid), weak to strong.
HETERO_PRESETS = {"s1": (0.25, 0.5), "s2": (0.05, 0.25), "s3": (0.01, 0.1)}


class DgpError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSetup:
    kind: str
    beta0: np.ndarray
    n: int
    df: int | None = None        # student
    s_left: float | None = None  # heteroscedastic
    s_mid: float | None = None
    a: float | None = None       # gmm mixture location

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, STUDENT, HETEROSCEDASTIC,
                             LOGISTIC_LINK, GMM_LINK):
            raise DgpError(f"unknown setup kind {self.kind!r}")
        object.__setattr__(self, "beta0", np.asarray(self.beta0, dtype=float))
        if self.n < 1:
            raise DgpError("n must be >= 1")
        if self.kind == STUDENT and (self.df is None or self.df < 3):
            raise DgpError("student setup needs df >= 3")
        if self.kind == HETEROSCEDASTIC:
            if not (self.s_left and self.s_mid and self.s_left > 0 and self.s_mid > 0):
                raise DgpError("heteroscedastic setup needs positive s_left, s_mid")
        if self.kind == GMM_LINK and self.a is None:
            raise DgpError("gmm setup needs the mixture location a")

    @property
    def d(self):
        return len(self.beta0)

    @property
    def binary(self):
        return self.kind in BINARY_KINDS


def draw_beta0(rng: RngStream, d=DIMENSION):
    """Coefficients drawn once per experiment and held fixed across
    repetitions."""
    lo, hi = BETA0_RANGE
    return rng.gen.uniform(lo, hi, size=d)


def default_n(kind):
    return DEFAULT_N_BINARY if kind in BINARY_KINDS else DEFAULT_N_CONTINUOUS


def make_setup(kind, beta0, n=None, df=None, s=None, a=None) -> SyntheticSetup:
    """Convenience constructor; `s` is a preset name or an (s_left, s_mid)
    pair for the heteroscedastic kind."""
    if n is None:
        n = default_n(kind)
    s_left = s_mid = None
    if kind == HETEROSCEDASTIC:
        if isinstance(s, str):
            if s not in HETERO_PRESETS:
                raise DgpError(f"unknown heteroscedasticity preset {s!r}")
            s_left, s_mid = HETERO_PRESETS[s]
        elif s is not None:
            s_left, s_mid = s
    return SyntheticSetup(kind=kind, beta0=beta0, n=n, df=df,
                          s_left=s_left, s_mid=s_mid, a=a)


def _schema(setup: SyntheticSetup) -> DataSchema:
    feats = tuple(ColumnSpec(f"x{j + 1}", CONTINUOUS) for j in range(setup.d))
    if setup.binary:
        resp = ColumnSpec("y", CATEGORICAL, levels=("0", "1"))
    else:
        resp = ColumnSpec("y", CONTINUOUS)
    return DataSchema(features=feats, response=resp)


def gmm_link(u, a):
    """0.7 Phi(u | a, 1) + 0.3 Phi(u | 2, 1)."""
    u = np.asarray(u, dtype=float)
    return 0.7 * ndtr(u - a) + 0.3 * ndtr(u - 2.0)


def logistic_link(u):
    return 1.0 / (1.0 + np.exp(-np.asarray(u, dtype=float)))


def generate(setup: SyntheticSetup, rng: RngStream, n=None) -> Dataset:
    """One sample of size n from the setup's data-generating distribution."""
    n = setup.n if n is None else int(n)
    g = rng.gen
    X = g.uniform(-1.0, 1.0, size=(n, setup.d))
    lin = X @ setup.beta0
    if setup.kind == GAUSSIAN:
        y = lin + g.standard_normal(n)
    elif setup.kind == STUDENT:
        y = lin + g.standard_t(setup.df, size=n)
    elif setup.kind == HETEROSCEDASTIC:
        # Noise level set by the first coordinate's empirical quartiles
        # within this sample.
        q25, q75 = np.quantile(X[:, 0], [0.25, 0.75])
        sigma = np.where(X[:, 0] < q25, setup.s_left,
                         np.where(X[:, 0] <= q75, setup.s_mid, 1.0))
        y = lin + sigma * g.standard_normal(n)
    elif setup.kind == LOGISTIC_LINK:
        y = (g.random(n) < logistic_link(lin)).astype(np.int64)
    else:
        y = (g.random(n) < gmm_link(lin, setup.a)).astype(np.int64)
    cols = tuple(X[:, j].copy() for j in range(setup.d))
    if setup.binary:
        return Dataset(schema=_schema(setup), feature_cols=cols, response=y)
    return Dataset(schema=_schema(setup), feature_cols=cols, response=y.astype(float))


def noise_variance(setup: SyntheticSetup) -> float:
    if setup.kind == GAUSSIAN:
        return 1.0
    if setup.kind == STUDENT:
        return setup.df / (setup.df - 2.0)
    if setup.kind == HETEROSCEDASTIC:
        # Quartile membership has probabilities (1/4, 1/2, 1/4).
        return 0.25 * setup.s_left ** 2 + 0.5 * setup.s_mid ** 2 + 0.25
    raise DgpError(f"{setup.kind} has no additive noise variance")


FEATURE_STD = 1.0 / math.sqrt(3.0)  # std of U[-1, 1]


def analytic_standardization(setup: SyntheticSetup) -> StandardizationParams:
    """Population moments of the setup (exact, not estimated)."""
    means = {f"x{j + 1}": 0.0 for j in range(setup.d)}
    stds = {f"x{j + 1}": FEATURE_STD for j in range(setup.d)}
    if setup.binary:
        return StandardizationParams(means, stds, {}, None, None)
    var_y = float(setup.beta0 @ setup.beta0) / 3.0 + noise_variance(setup)
    return StandardizationParams(means, stds, {}, 0.0, math.sqrt(var_y))


def default_loss_spec(setup: SyntheticSetup, damping=1e-8) -> LossSpec:
    mask = np.ones(setup.d + 1, dtype=bool)
    if setup.binary:
        return LossSpec(MULTINOMIAL_NLL, mask, n_classes=2, damping=damping)
    return LossSpec(SQUARED_ERROR, mask)


def population_theta(setup: SyntheticSetup, loss: LossSpec | None = None,
                     oracle_rng: RngStream | None = None,
                     oracle_size=ORACLE_SIZE) -> np.ndarray:
    """Risk minimizer under the true data distribution, on the standardized
    design scale.

    The Gaussian and logistic-link setups admit the exact value (zero
    intercept, slopes beta0 rescaled by the standardization); the remaining
    kinds are estimated by minimizing over a fresh oracle sample.
    """
    params = analytic_standardization(setup)
    if setup.kind == GAUSSIAN:
        sy = params.response_std
        return np.concatenate([[0.0], setup.beta0 * FEATURE_STD / sy])
    if setup.kind == LOGISTIC_LINK:
        return np.concatenate([[0.0], setup.beta0 * FEATURE_STD])
    if oracle_rng is None:
        oracle_rng = RngStream(0, 0, (0x0E,))
    data = generate(setup, oracle_rng, n=oracle_size)
    from .data import encode  # local import to avoid cycle at module load
    design = encode(data, params)
    if loss is None:
        loss = default_loss_spec(setup)
    if loss.kind == SQUARED_ERROR:
        return fit_linear(design.X, design.y_enc, loss.mask).theta
    return fit_logistic(design.X, design.y_enc, loss.mask,
                        damping=loss.damping, n_classes=loss.n_classes).theta


def setup_manifest(setup: SyntheticSetup, seed, theta0) -> dict:
    return {
        "kind": setup.kind,
        "beta0": [float(v) for v in setup.beta0],
        "n": setup.n,
        "df": setup.df,
        "s_left": setup.s_left,
        "s_mid": setup.s_mid,
        "a": setup.a,
        "seed": seed,
        "theta0": [float(v) for v in np.asarray(theta0)],
    }
