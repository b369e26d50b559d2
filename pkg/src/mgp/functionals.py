"""Loss functions and risk minimizers for linear and multinomial-logistic
regression, with identifiability constraints (first-class coefficients fixed
at zero) and principal-component collinearity pruning."""

from dataclasses import dataclass, field

import numpy as np

SQUARED_ERROR = "squared-error"
MULTINOMIAL_NLL = "multinomial-nll"

GRAD_TOL = 1e-8
MAX_NEWTON_ITER = 200
ARMIJO_C = 1e-4


class FitError(ValueError):
    pass


class RankDeficientError(FitError):
    pass


@dataclass(frozen=True)
class LossSpec:
    kind: str
    mask: np.ndarray  # active design columns; intercept always retained
    n_classes: int | None = None  # for multinomial-nll
    damping: float = 0.0

    def __post_init__(self):
        if self.kind not in (SQUARED_ERROR, MULTINOMIAL_NLL):
            raise FitError(f"unknown loss kind {self.kind!r}")
        if not self.mask[0]:
            raise FitError("the intercept column cannot be masked out")
        if self.kind == MULTINOMIAL_NLL and (self.n_classes is None or self.n_classes < 2):
            raise FitError("multinomial loss needs n_classes >= 2")
        if self.damping < 0:
            raise FitError("damping must be >= 0")

    @property
    def dim(self):
        a = int(np.sum(self.mask))
        if self.kind == SQUARED_ERROR:
            return a
        return a * (self.n_classes - 1)


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    converged: bool
    grad_norm: float
    iterations: int


def condition_number(X):
    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= 0:
        return np.inf
    return float(s[0] / s[-1])


def prune_collinear(X, condition_threshold=1e8):
    """Drop nearly collinear columns one at a time.

    Repeatedly removes the column with the largest absolute loading on the
    least-important principal component of the non-intercept block until the
    active design's condition number is at or below the threshold. Returns a
    boolean mask over design columns (intercept always kept).
    """
    n, p = X.shape
    if p < 2:
        raise FitError("design needs at least two columns to prune")
    mask = np.ones(p, dtype=bool)
    while True:
        cond = condition_number(X[:, mask])
        if cond <= condition_threshold:
            return mask
        active = [j for j in range(1, p) if mask[j]]
        if not active:
            raise RankDeficientError(
                "all non-intercept columns pruned, design still ill-conditioned")
        block = X[:, active]
        cov = np.cov(block, rowvar=False, bias=True)
        cov = np.atleast_2d(cov)
        evals, evecs = np.linalg.eigh(cov)
        loading = np.abs(evecs[:, 0])  # smallest-eigenvalue component
        mask[active[int(np.argmax(loading))]] = False


def fit_linear(X, y, mask=None):
    """Exact squared-error minimizer over the masked columns (SVD lstsq)."""
    if mask is None:
        mask = np.ones(X.shape[1], dtype=bool)
    Xa = X[:, mask]
    theta, _, rank, _ = np.linalg.lstsq(Xa, y, rcond=None)
    if rank < Xa.shape[1]:
        raise RankDeficientError(
            f"design rank {rank} below active column count {Xa.shape[1]}")
    grad = Xa.T @ (Xa @ theta - y)
    gnorm = float(np.linalg.norm(grad))
    tol = GRAD_TOL * (1.0 + float(np.linalg.norm(y)))
    return FitResult(theta=theta, converged=gnorm <= tol, grad_norm=gnorm, iterations=1)


def softmax_probs(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def logistic_nll(Xa, labels, theta_mat, damping=0.0):
    """Sum of -log softmax probabilities plus the damping term; class-0
    logits are identically zero."""
    Z = np.hstack([np.zeros((Xa.shape[0], 1)), Xa @ theta_mat.T])
    Z = Z - Z.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    nll = -float(logp[np.arange(len(labels)), labels].sum())
    return nll + 0.5 * damping * float(np.sum(theta_mat ** 2))


def logistic_grad(Xa, labels, theta_mat, damping=0.0):
    n, a = Xa.shape
    K = theta_mat.shape[0] + 1
    Z = np.hstack([np.zeros((n, 1)), Xa @ theta_mat.T])
    P = softmax_probs(Z)
    Y = np.zeros((n, K))
    Y[np.arange(n), labels] = 1.0
    G = (P - Y)[:, 1:].T @ Xa + damping * theta_mat
    return G, P


def fit_logistic(X, labels, mask=None, damping=0.0, n_classes=None,
                 x0=None, max_iter=MAX_NEWTON_ITER):
    """Multinomial-logistic minimizer with theta_1 fixed at zero.

    Newton steps with Armijo backtracking; when the Hessian solve fails the
    step falls back to scaled gradient descent. Returns the best iterate with
    a convergence flag when the gradient-norm target is not met within the
    iteration cap.
    """
    if mask is None:
        mask = np.ones(X.shape[1], dtype=bool)
    labels = np.asarray(labels, dtype=np.int64)
    K = int(n_classes) if n_classes else int(labels.max()) + 1
    if K < 2:
        raise FitError("logistic fit needs at least two classes")
    if damping == 0.0:
        present = np.unique(labels)
        if len(present) < K:
            raise FitError(
                f"class(es) {sorted(set(range(K)) - set(present.tolist()))} absent "
                "and no damping guard active")
    Xa = X[:, mask]
    n, a = Xa.shape
    theta = np.zeros((K - 1, a)) if x0 is None else np.array(x0, dtype=float).reshape(K - 1, a)

    f = logistic_nll(Xa, labels, theta, damping)
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        G, P = logistic_grad(Xa, labels, theta, damping)
        gnorm = float(np.linalg.norm(G))
        if gnorm <= GRAD_TOL:
            return FitResult(theta.ravel(), True, gnorm, it - 1)
        # Hessian blocks H[cd] = Xa' diag(p_c (delta_cd - p_d)) Xa + damping I
        H = np.empty((a * (K - 1), a * (K - 1)))
        for c in range(1, K):
            for d in range(c, K):
                w = P[:, c] * ((1.0 if c == d else 0.0) - P[:, d])
                blk = Xa.T @ (Xa * w[:, None])
                H[(c - 1) * a:c * a, (d - 1) * a:d * a] = blk
                if d != c:
                    H[(d - 1) * a:d * a, (c - 1) * a:c * a] = blk
        H[np.diag_indices_from(H)] += damping
        g = G.ravel()
        try:
            step = np.linalg.solve(H, g).reshape(K - 1, a)
            if float(np.sum(step * G)) <= 0:
                raise np.linalg.LinAlgError("non-descent Newton direction")
        except np.linalg.LinAlgError:
            step = G / (1.0 + gnorm)  # gradient fallback, unit-scale step

        t = 1.0
        gdot = float(np.sum(step * G))
        while True:
            cand = theta - t * step
            fc = logistic_nll(Xa, labels, cand, damping)
            if fc <= f - ARMIJO_C * t * gdot or t < 1e-14:
                break
            t *= 0.5
        theta = cand
        f = fc
    G, _ = logistic_grad(Xa, labels, theta, damping)
    gnorm = float(np.linalg.norm(G))
    return FitResult(theta.ravel(), gnorm <= GRAD_TOL, gnorm, it)


def fit_for_loss(loss: LossSpec, X, y, x0=None):
    if loss.kind == SQUARED_ERROR:
        return fit_linear(X, y, loss.mask)
    return fit_logistic(X, y, loss.mask, damping=loss.damping,
                        n_classes=loss.n_classes, x0=x0)
