"""Conjugate normal-normal posterior-predictive rule (intercept-only), used
as an exact oracle: forward sampling from the true Bayesian PPD makes the
resampled-mean posterior coincide with the analytic posterior."""

import math

from scipy.special import ndtr

from .base import AnalyticCDF, RuleState


class ConjugateGaussianState(RuleState):
    kind = "conjugate-ppd"

    def __init__(self, mu0, tau2, sigma2):
        super().__init__()
        if tau2 <= 0 or sigma2 <= 0:
            raise ValueError("prior and noise variances must be positive")
        self.mu0 = float(mu0)
        self.tau2 = float(tau2)
        self.sigma2 = float(sigma2)
        self.post_mean = float(mu0)
        self.post_var = float(tau2)

    def clone(self):
        out = ConjugateGaussianState(self.mu0, self.tau2, self.sigma2)
        out.post_mean = self.post_mean
        out.post_var = self.post_var
        out.step = self.step
        return out

    @property
    def predictive_mean(self):
        return self.post_mean

    @property
    def predictive_var(self):
        return self.sigma2 + self.post_var

    def sample_response(self, x, rng):
        return float(self.post_mean
                     + math.sqrt(self.predictive_var) * rng.gen.standard_normal())

    def update(self, x, y):
        prec = 1.0 / self.post_var + 1.0 / self.sigma2
        self.post_mean = (self.post_mean / self.post_var + y / self.sigma2) / prec
        self.post_var = 1.0 / prec
        self.step += 1

    def predicted_distribution(self, x):
        mu, sd = self.post_mean, math.sqrt(self.predictive_var)
        return AnalyticCDF(cdf=lambda y: ndtr((y - mu) / sd))


def batch_posterior(mu0, tau2, sigma2, ys):
    """Closed-form posterior (mean, variance) after observing ys."""
    n = len(ys)
    prec = 1.0 / tau2 + n / sigma2
    mean = (mu0 / tau2 + sum(ys) / sigma2) / prec
    return mean, 1.0 / prec
