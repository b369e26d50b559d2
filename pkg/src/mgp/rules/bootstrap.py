"""Bayesian bootstrap: the next observation is drawn uniformly from the pool
of all previous observations (original plus generated), feature and response
jointly."""

import numpy as np

from .base import RuleState


class BootstrapState(RuleState):
    kind = "bayesian-bootstrap"
    samples_pairs = True

    def __init__(self, X, y):
        super().__init__()
        self._cap = max(len(y), 1)
        self._X = np.empty((self._cap, X.shape[1]))
        self._y = np.empty(self._cap, dtype=y.dtype)
        self._X[:len(y)] = X
        self._y[:len(y)] = y
        self.step = len(y)

    @property
    def pool_X(self):
        return self._X[:self.step]

    @property
    def pool_y(self):
        return self._y[:self.step]

    def clone(self):
        out = BootstrapState.__new__(BootstrapState)
        RuleState.__init__(out)
        out._cap = self._cap
        out._X = self._X.copy()
        out._y = self._y.copy()
        out.step = self.step
        return out

    def reserve(self, total):
        if total > self._cap:
            X = np.empty((total, self._X.shape[1]))
            y = np.empty(total, dtype=self._y.dtype)
            X[:self.step] = self._X[:self.step]
            y[:self.step] = self._y[:self.step]
            self._X, self._y, self._cap = X, y, total

    def sample_pair(self, rng):
        j = int(rng.gen.integers(self.step))
        return self._X[j].copy(), self._y[j]

    def update(self, x, y):
        if self.step == self._cap:
            self.reserve(2 * self._cap)
        self._X[self.step] = x
        self._y[self.step] = y
        self.step += 1
