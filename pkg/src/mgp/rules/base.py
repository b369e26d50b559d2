"""Predictive-rule abstraction: one-step-ahead conditional distributions that
can be sampled, updated with a new observation, and (where available)
evaluated explicitly."""

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-9


class RuleError(Exception):
    pass


class UnsupportedRuleError(RuleError):
    pass


class PairCoupledRuleError(RuleError):
    """Raised when a joint-resampling rule is asked for a pointwise draw."""


@dataclass(frozen=True)
class Categorical:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if np.any(p < 0):
            raise RuleError("categorical probabilities must be >= 0")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise RuleError(f"categorical probabilities sum to {p.sum()}, not 1")


@dataclass(frozen=True)
class BinnedContinuous:
    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "probs", p)
        if len(e) != len(p) + 1:
            raise RuleError("need exactly one more edge than bin probabilities")
        if np.any(np.diff(e) <= 0):
            raise RuleError("bin edges must be strictly increasing")
        if np.any(p < 0):
            raise RuleError("bin probabilities must be >= 0")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise RuleError(f"bin probabilities sum to {p.sum()}, not 1")


@dataclass(frozen=True)
class AnalyticCDF:
    """Evaluable distribution on the real line."""

    cdf: object  # callable y -> P(Y <= y)
    pdf: object = None


def sample_distribution(dist, rng):
    """Draw one value from a predicted distribution."""
    u = rng.gen.random()
    if isinstance(dist, Categorical):
        return int(np.searchsorted(np.cumsum(dist.probs), u, side="right"))
    if isinstance(dist, BinnedContinuous):
        c = np.cumsum(dist.probs)
        j = int(np.searchsorted(c, u * c[-1], side="right"))
        j = min(j, len(dist.probs) - 1)
        lo, hi = dist.edges[j], dist.edges[j + 1]
        return float(lo + rng.gen.random() * (hi - lo))
    raise RuleError(f"cannot sample from {type(dist).__name__} generically")


class RuleState:
    """Conditioning state of a predictive rule.

    `step` counts absorbed observations; `update` increments it by exactly
    one and `sample_response` never mutates. States are single-owner values:
    the engine clones the initialized state once per trajectory.
    """

    kind = "abstract"
    samples_pairs = False

    def __init__(self):
        self.step = 0

    def clone(self):
        raise NotImplementedError

    def sample_response(self, x, rng):
        raise NotImplementedError

    def update(self, x, y):
        raise NotImplementedError

    def sample_pair(self, rng):
        raise PairCoupledRuleError(
            f"rule {self.kind!r} does not draw joint feature-response pairs")

    def sample_and_update(self, x, rng):
        """Draw a response at x and absorb it; rules may fuse the two to
        share work, with semantics identical to sample then update."""
        y = self.sample_response(x, rng)
        self.update(x, y)
        return y

    def predicted_distribution(self, x):
        """Explicit one-step-ahead distribution at x, or None if the rule
        only supports sampling."""
        return None

    def functional_pairs(self, rng):
        """Rule-specific sample used to evaluate the risk functional, or None
        to fit on original-plus-generated data."""
        return None
