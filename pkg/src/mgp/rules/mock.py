"""Deterministic toy rules used by the diagnostics and tests: a constant
categorical rule, a drifting rule that violates the martingale property on a
known schedule, a conjugate Beta-Bernoulli rule (exact martingale), and a
constant continuous emitter."""

import numpy as np

from .base import Categorical, RuleState


class ConstantCategoricalState(RuleState):
    """Ignores all updates; always predicts the same class probabilities."""

    kind = "mock-constant-categorical"

    def __init__(self, probs, step=0):
        super().__init__()
        self.dist = Categorical(np.asarray(probs, dtype=float))
        self.step = step

    def clone(self):
        return ConstantCategoricalState(self.dist.probs.copy(), self.step)

    def sample_response(self, x, rng):
        return int(np.searchsorted(np.cumsum(self.dist.probs), rng.gen.random(),
                                   side="right"))

    def update(self, x, y):
        self.step += 1

    def predicted_distribution(self, x):
        return self.dist


class DriftingBernoulliState(RuleState):
    """Data-ignoring rule with p_i(1) = 0.5 + 1/(i+2); deterministically
    drifts, so its martingale gap telescopes in closed form."""

    kind = "mock-drifting"

    def __init__(self, step=0):
        super().__init__()
        self.step = step

    def clone(self):
        return DriftingBernoulliState(self.step)

    def prob1(self):
        return 0.5 + 1.0 / (self.step + 2.0)

    def sample_response(self, x, rng):
        return int(rng.gen.random() < self.prob1())

    def update(self, x, y):
        self.step += 1

    def predicted_distribution(self, x):
        p = self.prob1()
        return Categorical(np.array([1.0 - p, p]))


class BetaBernoulliState(RuleState):
    """Conjugate Beta(a, b) Bernoulli posterior predictive; the update is the
    exact posterior-mean-preserving mixture, so the rule is a martingale."""

    kind = "mock-beta-bernoulli"

    def __init__(self, a=1.0, b=1.0, ones=0, step=0):
        super().__init__()
        if a <= 0 or b <= 0:
            raise ValueError("Beta parameters must be positive")
        self.a = float(a)
        self.b = float(b)
        self.ones = int(ones)
        self.step = step

    def clone(self):
        return BetaBernoulliState(self.a, self.b, self.ones, self.step)

    def prob1(self):
        return (self.a + self.ones) / (self.a + self.b + self.step)

    def sample_response(self, x, rng):
        return int(rng.gen.random() < self.prob1())

    def update(self, x, y):
        self.ones += int(y)
        self.step += 1

    def predicted_distribution(self, x):
        p = self.prob1()
        return Categorical(np.array([1.0 - p, p]))


class ConstantContinuousState(RuleState):
    """Always emits a fixed response value."""

    kind = "mock-constant-continuous"

    def __init__(self, value=0.0, step=0):
        super().__init__()
        self.value = float(value)
        self.step = step

    def clone(self):
        return ConstantContinuousState(self.value, self.step)

    def sample_response(self, x, rng):
        return self.value

    def update(self, x, y):
        self.step += 1
