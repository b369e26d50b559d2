"""Recursive bivariate Gaussian-copula predictive updates.

Each absorbed observation (x_m, y_m) contributes one smoothing record; the
conditional CDF (continuous response) or success probability (binary
response) at a query x is obtained by folding all records into the initial
distribution:

    u <- (1 - w_m(x)) u + w_m(x) * T(u, record_m)

with feature-dependent weight w_m(x) = a_m q_m / (1 - a_m + a_m q_m),
a_m = (2 - 1/m)/(m+1), and q_m the product over feature coordinates of the
bivariate Gaussian copula density at (Phi(x_k), Phi(x_mk)). For a continuous
response T is the conditional copula H_rho(u, v_m); for a binary response T
conditions the copula CDF on the absorbed class.

The per-record recursions run in numba kernels; sampling inverts the
conditional CDF to the stated tolerance on the CDF scale.
"""

import math

import numba
import numpy as np

from ..gaussian import (UNIT_CLIP_HI, UNIT_CLIP_LO, nb_bvn_cdf,
                        nb_norm_cdf, nb_norm_ppf, norm_ppf)
from .base import AnalyticCDF, Categorical, RuleError, RuleState

DEFAULT_BANDWIDTH = 0.8
# Feature-side copula bandwidth. The response bandwidth 0.8 applied to all
# feature coordinates makes the product weight q(x, x) explode like
# exp(0.44 |x|^2) / 0.6^d (~1e4 at d=10), saturating record weights at one
# and collapsing the conditional into wandering atoms; a milder feature
# correlation keeps alpha_m q_m summable over realistic depths.
DEFAULT_FEATURE_BANDWIDTH = 0.2
SAMPLE_TOL = 1e-8  # absolute tolerance on the CDF scale for inverse sampling
BASE_BRACKET = 8.0
MAX_BRACKET = 64.0


def alpha_schedule(m):
    """Mixing weight of the m-th update (1-based)."""
    return (2.0 - 1.0 / m) / (m + 1.0)


@numba.njit(cache=True)
def _copula_weights(feats, sqs, count, x, rho_x):
    """Feature-dependent record weights w_m(x) for m = 1..count."""
    d = x.shape[0]
    w = np.empty(count)
    if rho_x == 0.0 or d == 0:
        for m in range(count):
            w[m] = (2.0 - 1.0 / (m + 1.0)) / (m + 2.0)
        return w
    omr2 = 1.0 - rho_x * rho_x
    xx = 0.0
    for k in range(d):
        xx += x[k] * x[k]
    lc = -0.5 * d * math.log(omr2)
    for m in range(count):
        dot = 0.0
        for k in range(d):
            dot += feats[m, k] * x[k]
        logq = lc - (rho_x * rho_x * (xx + sqs[m]) - 2.0 * rho_x * dot) / (2.0 * omr2)
        if logq > 700.0:
            logq = 700.0
        q = math.exp(logq)
        a = (2.0 - 1.0 / (m + 1.0)) / (m + 2.0)
        w[m] = a * q / (1.0 - a + a * q)
    return w


@numba.njit(cache=True)
def _cont_eval_pair(b, w, rho, y):
    """Conditional CDF at y, folding every record into u0 = Phi(y).

    Tracks (u, 1-u) jointly: each side is its own convex combination of
    accurately computed CDF values, so both tails keep relative accuracy
    down to ~1e-300 where a single saturating float would collapse to 0 or
    1 and derail the recursion.
    """
    u = nb_norm_cdf(y)
    cu = nb_norm_cdf(-y)
    if rho == 0.0:
        return u, cu
    sr = math.sqrt(1.0 - rho * rho)
    z = y
    first = True
    for m in range(w.shape[0]):
        wm = w[m]
        if wm <= 0.0:
            continue
        if not first:
            if u <= 0.5:
                z = nb_norm_ppf(u)
            else:
                z = -nb_norm_ppf(cu)
        first = False
        arg = (z - rho * b[m]) / sr
        h = nb_norm_cdf(arg)
        ch = nb_norm_cdf(-arg)
        u = u + wm * (h - u)
        cu = cu + wm * (ch - cu)
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        if cu < 0.0:
            cu = 0.0
        elif cu > 1.0:
            cu = 1.0
    return u, cu


@numba.njit(cache=True)
def _cont_eval(b, w, rho, y):
    u, _ = _cont_eval_pair(b, w, rho, y)
    return u


# The conditional CDF develops near-atomic jumps (records whose features
# match the query get weights near one), where no y satisfies the CDF-scale
# tolerance. Both solvers therefore stop on either the CDF-scale tolerance
# or the bracket collapsing below Y_RESOLUTION; the latter is the
# generalized inverse, i.e. an exact draw landing on an atom. Jumps can only
# sit at previously absorbed response values, so the fast solver first
# binary-searches those candidates before polishing the smooth remainder.
Y_RESOLUTION = 1e-9


@numba.njit(cache=True)
def _bracket(b, w, rho, t):
    """Starting bracket [-8, 8], doubled up to [-64, 64] until it straddles
    the target; returns (lo, hi, ulo, uhi) with lo > hi signaling failure."""
    lo = -BASE_BRACKET
    hi = BASE_BRACKET
    ulo = _cont_eval(b, w, rho, lo)
    while ulo > t and lo > -MAX_BRACKET:
        lo *= 2.0
        ulo = _cont_eval(b, w, rho, lo)
    uhi = _cont_eval(b, w, rho, hi)
    while uhi < t and hi < MAX_BRACKET:
        hi *= 2.0
        uhi = _cont_eval(b, w, rho, hi)
    if ulo > t or uhi < t:
        return 1.0, -1.0, 0.0, 0.0
    return lo, hi, ulo, uhi


@numba.njit(cache=True)
def _cont_sample_bisect(b, w, rho, t, tol):
    """Inverse-CDF draw by plain bisection; NaN signals bracket failure."""
    lo, hi, ulo, uhi = _bracket(b, w, rho, t)
    if lo > hi:
        return math.nan
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= Y_RESOLUTION * (1.0 + abs(mid)):
            return mid
        um = _cont_eval(b, w, rho, mid)
        if abs(um - t) <= tol:
            return mid
        if um < t:
            lo = mid
        else:
            hi = mid
    return mid


@numba.njit(cache=True)
def _itp_step(lo, hi, flo, fhi, eps, k1, n_max, j):
    """One ITP proposal (interpolate, truncate, project) inside [lo, hi]."""
    x_half = 0.5 * (lo + hi)
    r = eps * (2.0 ** (n_max - j)) - 0.5 * (hi - lo)
    if r < 0.0:
        r = 0.0
    delta = k1 * (hi - lo) * (hi - lo)
    x_f = (fhi * lo - flo * hi) / (fhi - flo)
    sigma = 1.0 if x_half >= x_f else -1.0
    if delta <= abs(x_half - x_f):
        x_t = x_f + sigma * delta
    else:
        x_t = x_half
    if abs(x_t - x_half) <= r:
        x_itp = x_t
    else:
        x_itp = x_half - sigma * r
    if x_itp <= lo or x_itp >= hi:
        x_itp = x_half
    return x_itp


@numba.njit(cache=True)
def _cont_sample(b, w, rho, ys_sorted, t, tol):
    """Inverse-CDF draw; returns (y, CDF at y), with y = NaN on bracket
    failure.

    ITP bracketing (bisection's worst case, superlinear typical) resolves
    smooth regions in a handful of chain evaluations; if it stalls, the
    target sits in a near-atomic jump, whose location must be a previously
    absorbed response, so the remaining candidates are bisected directly.
    """
    lo, hi, ulo, uhi = _bracket(b, w, rho, t)
    if lo > hi:
        return math.nan, math.nan
    flo = ulo - t
    fhi = uhi - t
    if flo >= 0.0:
        return lo, ulo
    if fhi <= 0.0:
        return hi, uhi
    eps = 0.5 * Y_RESOLUTION
    k1 = 0.2 / (hi - lo)
    n_max = int(math.ceil(math.log2((hi - lo) / (2.0 * eps)))) + 1
    j = 0
    atoms_done = False
    while hi - lo > 2.0 * eps * (1.0 + 0.5 * abs(lo + hi)):
        if j == 12 and not atoms_done:
            # Stalled: bisect over the absorbed-response candidates left in
            # the bracket, so each evaluation halves the possible jump set.
            atoms_done = True
            k_lo = np.searchsorted(ys_sorted, lo, side="right")
            k_hi = np.searchsorted(ys_sorted, hi, side="left")
            hi_is_atom = False
            while k_hi > k_lo:
                k_mid = (k_lo + k_hi) // 2
                yc = ys_sorted[k_mid]
                if yc <= lo:
                    k_lo = k_mid + 1
                    continue
                if yc >= hi:
                    k_hi = k_mid
                    continue
                fc = _cont_eval(b, w, rho, yc) - t
                if abs(fc) <= tol:
                    return yc, fc + t
                if fc > 0.0:
                    hi = yc
                    fhi = fc
                    k_hi = k_mid
                    hi_is_atom = True
                else:
                    lo = yc
                    flo = fc
                    k_lo = k_mid + 1
            if hi_is_atom:
                # Root at the candidate unless the CDF already clears the
                # target just left of it.
                delta = Y_RESOLUTION * (1.0 + abs(hi))
                yl = hi - delta
                if yl <= lo:
                    return hi, fhi + t
                fl = _cont_eval(b, w, rho, yl) - t
                if fl < 0.0:
                    return hi, fhi + t
                if fl <= tol:
                    return yl, fl + t
                hi = yl
                fhi = fl
        x_itp = _itp_step(lo, hi, flo, fhi, eps, k1, n_max, j)
        f_itp = _cont_eval(b, w, rho, x_itp) - t
        if abs(f_itp) <= tol:
            return x_itp, f_itp + t
        if f_itp > 0.0:
            hi = x_itp
            fhi = f_itp
        else:
            lo = x_itp
            flo = f_itp
        j += 1
        if j > 240:
            break
    y = 0.5 * (lo + hi)
    return y, _cont_eval(b, w, rho, y)


@numba.njit(cache=True)
def _bin_eval(kv, vp, yb, w, rho, p0):
    """Success probability at the query: fold every record into p0."""
    u = p0
    if rho == 0.0:
        return u
    for m in range(w.shape[0]):
        wm = w[m]
        if wm <= 0.0:
            continue
        c = nb_bvn_cdf(nb_norm_ppf(u), kv[m], rho)
        if yb[m] == 1:
            tgt = c / vp[m]
        else:
            tgt = (u - c) / (1.0 - vp[m])
        if tgt < 0.0:
            tgt = 0.0
        elif tgt > 1.0:
            tgt = 1.0
        u = u + wm * (tgt - u)
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
    return u


class CopulaContState(RuleState):
    """Copula rule for a univariate continuous (standardized) response; the
    zero-record conditional CDF is the standard normal."""

    kind = "copula"

    def __init__(self, rho, d, rho_x=DEFAULT_FEATURE_BANDWIDTH):
        super().__init__()
        if not 0.0 <= rho < 1.0:
            raise RuleError(f"copula bandwidth must be in [0, 1), got {rho}")
        if not 0.0 <= rho_x < 1.0:
            raise RuleError(f"feature bandwidth must be in [0, 1), got {rho_x}")
        self.rho = float(rho)
        self.rho_x = float(rho_x)
        self.d = int(d)
        self._cap = 8
        self._feats = np.empty((self._cap, self.d))
        self._sqs = np.empty(self._cap)
        self._b = np.empty(self._cap)
        self._ys = np.empty(self._cap)  # absorbed responses: atom candidates
        self.n_initial = 0

    def clone(self):
        out = CopulaContState.__new__(CopulaContState)
        RuleState.__init__(out)
        out.rho = self.rho
        out.rho_x = self.rho_x
        out.d = self.d
        out._cap = self._cap
        out._feats = self._feats.copy()
        out._sqs = self._sqs.copy()
        out._b = self._b.copy()
        out._ys = self._ys.copy()
        out.step = self.step
        out.n_initial = self.n_initial
        return out

    def reserve(self, total):
        if total > self._cap:
            feats = np.empty((total, self.d))
            sqs = np.empty(total)
            b = np.empty(total)
            ys = np.empty(total)
            feats[:self.step] = self._feats[:self.step]
            sqs[:self.step] = self._sqs[:self.step]
            b[:self.step] = self._b[:self.step]
            ys[:self.step] = self._ys[:self.step]
            self._feats, self._sqs, self._b, self._ys = feats, sqs, b, ys
            self._cap = total

    def _weights(self, x):
        return _copula_weights(self._feats, self._sqs, self.step,
                               np.asarray(x, dtype=float), self.rho_x)

    def cdf(self, x, y):
        """Conditional CDF P_i(Y <= y | x); non-decreasing in y."""
        return float(_cont_eval(self._b[:self.step], self._weights(x),
                                self.rho, float(y)))

    def cdf_pair(self, x, y):
        """(CDF, complement) with both tails at full relative accuracy."""
        u, cu = _cont_eval_pair(self._b[:self.step], self._weights(x),
                                self.rho, float(y))
        return float(u), float(cu)

    def sample_response(self, x, rng):
        w = self._weights(x)
        t = rng.gen.random()
        y, _ = _cont_sample(self._b[:self.step], w, self.rho,
                            np.sort(self._ys[:self.step]), t, SAMPLE_TOL)
        if math.isnan(y):
            raise RuleError(
                f"inverse-CDF bracket failure at u={t} (bracket +-{MAX_BRACKET})")
        return float(y)

    def _absorb(self, x, bval, yval):
        if self.step == self._cap:
            self.reserve(2 * self._cap)
        i = self.step
        self._feats[i] = x
        self._sqs[i] = float(x @ x)
        self._b[i] = bval
        self._ys[i] = yval
        self.step = i + 1

    def update(self, x, y):
        x = np.asarray(x, dtype=float)
        v, cv = self.cdf_pair(x, y)
        # Phi^{-1}(v) through whichever side resolves the tail.
        if v <= 0.5:
            bval = float(norm_ppf(max(v, UNIT_CLIP_LO)))
        else:
            bval = -float(norm_ppf(max(cv, UNIT_CLIP_LO)))
        self._absorb(x, bval, float(y))

    def sample_and_update(self, x, rng):
        """Draw and absorb in one operation: the sampler already knows the
        CDF value at the drawn point, which is exactly the record's v."""
        x = np.asarray(x, dtype=float)
        w = self._weights(x)
        t = rng.gen.random()
        y, u = _cont_sample(self._b[:self.step], w, self.rho,
                            np.sort(self._ys[:self.step]), t, SAMPLE_TOL)
        if math.isnan(y):
            raise RuleError(
                f"inverse-CDF bracket failure at u={t} (bracket +-{MAX_BRACKET})")
        if u <= 0.5:
            bval = float(norm_ppf(max(u, UNIT_CLIP_LO)))
        else:
            cu = 1.0 - u
            if cu < 1e-9:  # resolve the upper tail exactly
                _, cu = self.cdf_pair(x, y)
            bval = -float(norm_ppf(max(cu, UNIT_CLIP_LO)))
        self._absorb(x, bval, float(y))
        return float(y)

    def predicted_distribution(self, x):
        x = np.asarray(x, dtype=float)
        return AnalyticCDF(cdf=lambda yy: self.cdf(x, yy))

    def functional_pairs(self, rng, repeats=5):
        """Five passes over the initial feature rows, drawing one response
        per row from the current rule; the risk functional is evaluated on
        these pairs."""
        n0 = self.n_initial
        if n0 == 0:
            return None
        xs = []
        ys = []
        for _ in range(repeats):
            for j in range(n0):
                xs.append(self._feats[j])
                ys.append(self.sample_response(self._feats[j], rng))
        return np.array(xs), np.array(ys, dtype=float)


class CopulaBinaryState(RuleState):
    """Copula rule for a binary response; the zero-record success probability
    is the clamped empirical class-1 frequency."""

    kind = "copula"

    def __init__(self, rho, d, p0, rho_x=DEFAULT_FEATURE_BANDWIDTH):
        super().__init__()
        if not 0.0 <= rho < 1.0:
            raise RuleError(f"copula bandwidth must be in [0, 1), got {rho}")
        if not 0.0 <= rho_x < 1.0:
            raise RuleError(f"feature bandwidth must be in [0, 1), got {rho_x}")
        self.rho = float(rho)
        self.rho_x = float(rho_x)
        self.d = int(d)
        self.p0 = float(p0)
        self._cap = 8
        self._feats = np.empty((self._cap, self.d))
        self._sqs = np.empty(self._cap)
        self._kv = np.empty(self._cap)    # Phi^{-1}(v_m)
        self._vp = np.empty(self._cap)    # v_m
        self._yb = np.empty(self._cap, dtype=np.int8)
        self.n_initial = 0

    def clone(self):
        out = CopulaBinaryState.__new__(CopulaBinaryState)
        RuleState.__init__(out)
        out.rho = self.rho
        out.rho_x = self.rho_x
        out.d = self.d
        out.p0 = self.p0
        out._cap = self._cap
        out._feats = self._feats.copy()
        out._sqs = self._sqs.copy()
        out._kv = self._kv.copy()
        out._vp = self._vp.copy()
        out._yb = self._yb.copy()
        out.step = self.step
        out.n_initial = self.n_initial
        return out

    def reserve(self, total):
        if total > self._cap:
            feats = np.empty((total, self.d))
            sqs = np.empty(total)
            kv = np.empty(total)
            vp = np.empty(total)
            yb = np.empty(total, dtype=np.int8)
            i = self.step
            feats[:i] = self._feats[:i]
            sqs[:i] = self._sqs[:i]
            kv[:i] = self._kv[:i]
            vp[:i] = self._vp[:i]
            yb[:i] = self._yb[:i]
            self._feats, self._sqs, self._kv, self._vp, self._yb = feats, sqs, kv, vp, yb
            self._cap = total

    def _weights(self, x):
        return _copula_weights(self._feats, self._sqs, self.step,
                               np.asarray(x, dtype=float), self.rho_x)

    def prob1(self, x):
        i = self.step
        return float(_bin_eval(self._kv[:i], self._vp[:i], self._yb[:i],
                               self._weights(x), self.rho, self.p0))

    def sample_response(self, x, rng):
        return int(rng.gen.random() < self.prob1(x))

    def _absorb(self, x, v, y):
        if self.step == self._cap:
            self.reserve(2 * self._cap)
        i = self.step
        self._feats[i] = x
        self._sqs[i] = float(x @ x)
        self._kv[i] = float(norm_ppf(v))
        self._vp[i] = v
        self._yb[i] = 1 if int(y) == 1 else 0
        self.step = i + 1

    def update(self, x, y):
        x = np.asarray(x, dtype=float)
        v = min(max(self.prob1(x), UNIT_CLIP_LO), 1.0 - UNIT_CLIP_HI)
        self._absorb(x, v, y)

    def sample_and_update(self, x, rng):
        """Draw the class and absorb it, evaluating the success probability
        once (it doubles as the record's v)."""
        x = np.asarray(x, dtype=float)
        p = self.prob1(x)
        y = int(rng.gen.random() < p)
        v = min(max(p, UNIT_CLIP_LO), 1.0 - UNIT_CLIP_HI)
        self._absorb(x, v, y)
        return y

    def predicted_distribution(self, x):
        p = self.prob1(x)
        return Categorical(np.array([1.0 - p, p]))

    def functional_pairs(self, rng, repeats=5):
        n0 = self.n_initial
        if n0 == 0:
            return None
        xs = []
        ys = []
        for _ in range(repeats):
            probs = [self.prob1(self._feats[j]) for j in range(n0)]
            for j in range(n0):
                xs.append(self._feats[j])
                ys.append(int(rng.gen.random() < probs[j]))
        return np.array(xs), np.array(ys, dtype=np.int64)


def copula_cdf(state, x, y):
    """Conditional CDF of a continuous-response copula state."""
    if not isinstance(state, CopulaContState):
        raise RuleError("copula_cdf needs a continuous-response copula state")
    return state.cdf(x, y)


def copula_update(state, x_new, y_new):
    """Value-semantics update: returns a new state with one more record."""
    out = state.clone()
    out.update(x_new, y_new)
    return out
