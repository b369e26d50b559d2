"""Predictive rules: construction and shared types."""

import numpy as np

from ..data import CATEGORICAL, CONTINUOUS, Dataset, StandardizationParams, encode
from .base import (AnalyticCDF, BinnedContinuous, Categorical,
                   PairCoupledRuleError, RuleError, RuleState,
                   UnsupportedRuleError, sample_distribution)
from .bootstrap import BootstrapState
from .conjugate import ConjugateGaussianState, batch_posterior
from .copula import (DEFAULT_BANDWIDTH, DEFAULT_FEATURE_BANDWIDTH,
                     CopulaBinaryState, CopulaContState, alpha_schedule,
                     copula_cdf, copula_update)
from .external import (CLASSIFICATION, REGRESSION, ExternalRuleState,
                       PredictiveServiceClient, ProtocolError, TransportError)
from .mock import (BetaBernoulliState, ConstantCategoricalState,
                   ConstantContinuousState, DriftingBernoulliState)
from .plugin import GAUSSIAN_LINEAR, LOGISTIC, PluginState

BINARY_P0_CLAMP = (0.01, 0.99)


def normalize_rule_config(config):
    if isinstance(config, str):
        config = {"kind": config}
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind == "bb":
        kind = "bayesian-bootstrap"
    if kind is None:
        raise RuleError("rule config needs a 'kind'")
    return kind, cfg


def rule_init(config, dataset: Dataset, params: StandardizationParams) -> RuleState:
    """Build a rule state conditioned on all observations of the dataset."""
    kind, cfg = normalize_rule_config(config)
    design = encode(dataset, params)
    feats = design.X[:, 1:]
    y = design.y_enc
    n, d = feats.shape
    resp_kind = dataset.response_kind
    n_classes = dataset.schema.n_classes

    if kind == "bayesian-bootstrap":
        return BootstrapState(feats, y)

    if kind == "copula":
        rho = float(cfg.get("bandwidth", DEFAULT_BANDWIDTH))
        rho_x = float(cfg.get("feature_bandwidth", DEFAULT_FEATURE_BANDWIDTH))
        if resp_kind == CONTINUOUS:
            state = CopulaContState(rho, d, rho_x=rho_x)
            state.reserve(n)
            for i in range(n):
                state.update(feats[i], float(y[i]))
            state.n_initial = n
            return state
        if n_classes != 2:
            raise UnsupportedRuleError(
                f"copula rule is not applicable to {n_classes}-class responses")
        lo, hi = BINARY_P0_CLAMP
        p0 = min(max(float(np.mean(y == 1)), lo), hi)
        state = CopulaBinaryState(rho, d, p0, rho_x=rho_x)
        state.reserve(n)
        for i in range(n):
            state.update(feats[i], int(y[i]))
        state.n_initial = n
        return state

    if kind == "plugin":
        model = cfg.get("model")
        if model is None:
            model = GAUSSIAN_LINEAR if resp_kind == CONTINUOUS else LOGISTIC
        if model == GAUSSIAN_LINEAR and resp_kind != CONTINUOUS:
            raise RuleError("gaussian-linear plug-in needs a continuous response")
        if model == LOGISTIC and resp_kind != CATEGORICAL:
            raise RuleError("logistic plug-in needs a categorical response")
        return PluginState(model, feats, y, n_classes=n_classes,
                           damping=float(cfg.get("damping", 0.0)))

    if kind == "conjugate-ppd":
        if resp_kind != CONTINUOUS:
            raise RuleError("conjugate PPD rule needs a continuous response")
        state = ConjugateGaussianState(
            mu0=float(cfg.get("mu0", 0.0)),
            tau2=float(cfg.get("tau2", 1.0)),
            sigma2=float(cfg.get("sigma2", 1.0)))
        for v in y:
            state.update(None, float(v))
        return state

    if kind == "external":
        task = cfg.get("task")
        if task is None:
            task = REGRESSION if resp_kind == CONTINUOUS else CLASSIFICATION
        return ExternalRuleState(cfg.get("host", "127.0.0.1"), int(cfg["port"]),
                                 task, feats, y.astype(float),
                                 timeout=float(cfg.get("timeout", 60.0)))

    if kind == "mock-constant-categorical":
        state = ConstantCategoricalState(cfg["probs"], step=n)
        return state
    if kind == "mock-drifting":
        return DriftingBernoulliState(step=n)
    if kind == "mock-beta-bernoulli":
        state = BetaBernoulliState(a=float(cfg.get("a", 1.0)), b=float(cfg.get("b", 1.0)))
        for v in y:
            state.update(None, int(v))
        return state
    if kind == "mock-constant-continuous":
        return ConstantContinuousState(value=float(cfg.get("value", 0.0)), step=n)

    raise RuleError(f"unknown rule kind {kind!r}")
