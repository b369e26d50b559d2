"""Parametric plug-in rule: the next observation is drawn from an assumed
model evaluated at the running point estimate, which is refit on all absorbed
observations after every update."""

import math

import numpy as np

from ..functionals import fit_linear, fit_logistic
from .base import Categorical, RuleError, RuleState

GAUSSIAN_LINEAR = "gaussian-linear"
LOGISTIC = "logistic"


class PluginState(RuleState):
    kind = "plugin"

    def __init__(self, model, X, y, n_classes=None, damping=0.0):
        super().__init__()
        if model not in (GAUSSIAN_LINEAR, LOGISTIC):
            raise RuleError(f"unknown plug-in model {model!r}")
        self.model = model
        self.damping = float(damping)
        n, d = X.shape
        self._cap = max(n, 1)
        self._X = np.empty((self._cap, d))
        self._y = np.empty(self._cap, dtype=float if model == GAUSSIAN_LINEAR else np.int64)
        self._X[:n] = X
        self._y[:n] = y
        self.step = n
        self.n_classes = n_classes
        if model == GAUSSIAN_LINEAR:
            D = self._design(self._X[:n])
            self._XtX = D.T @ D
            self._Xty = D.T @ self._y[:n].astype(float)
        self.theta = None
        self.converged = True
        self._refit()

    @staticmethod
    def _design(X):
        return np.hstack([np.ones((X.shape[0], 1)), X])

    def clone(self):
        out = PluginState.__new__(PluginState)
        RuleState.__init__(out)
        out.model = self.model
        out.damping = self.damping
        out._cap = self._cap
        out._X = self._X.copy()
        out._y = self._y.copy()
        out.step = self.step
        out.n_classes = self.n_classes
        if self.model == GAUSSIAN_LINEAR:
            out._XtX = self._XtX.copy()
            out._Xty = self._Xty.copy()
        out.theta = self.theta.copy()
        out.converged = self.converged
        return out

    def reserve(self, total):
        if total > self._cap:
            X = np.empty((total, self._X.shape[1]))
            y = np.empty(total, dtype=self._y.dtype)
            X[:self.step] = self._X[:self.step]
            y[:self.step] = self._y[:self.step]
            self._X, self._y, self._cap = X, y, total

    def _refit(self):
        if self.model == GAUSSIAN_LINEAR:
            self.theta = np.linalg.solve(self._XtX, self._Xty)
            self.converged = True
        else:
            D = self._design(self._X[:self.step])
            x0 = self.theta if self.theta is not None else None
            res = fit_logistic(D, self._y[:self.step], damping=self.damping,
                               n_classes=self.n_classes, x0=x0)
            self.theta = res.theta
            self.converged = res.converged

    def sample_response(self, x, rng):
        row = np.concatenate([[1.0], x])
        if self.model == GAUSSIAN_LINEAR:
            return float(row @ self.theta + rng.gen.standard_normal())
        probs = self._probs(row)
        return int(np.searchsorted(np.cumsum(probs), rng.gen.random(), side="right"))

    def _probs(self, row):
        K = self.n_classes
        a = len(row)
        logits = np.concatenate([[0.0], self.theta.reshape(K - 1, a) @ row])
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def predicted_distribution(self, x):
        if self.model != LOGISTIC:
            return None
        return Categorical(self._probs(np.concatenate([[1.0], x])))

    def update(self, x, y):
        if self.step == self._cap:
            self.reserve(2 * self._cap)
        self._X[self.step] = x
        self._y[self.step] = y
        self.step += 1
        if self.model == GAUSSIAN_LINEAR:
            row = np.concatenate([[1.0], x])
            self._XtX += np.outer(row, row)
            self._Xty += row * float(y)
        self._refit()
