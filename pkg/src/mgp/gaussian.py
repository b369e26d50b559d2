"""Standard-normal and bivariate-normal primitives.

Scalar numba versions (prefixed ``nb_``) back the hot per-record recursions;
the array versions delegate to scipy and are used everywhere speed does not
matter. Both are cross-checked against each other in the test suite.
"""

import math

import numba
import numpy as np
from scipy.special import ndtr, ndtri, owens_t

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Arguments of the normal quantile are clipped into the open unit interval
# at double-precision resolution, only to keep every intermediate finite.
# (A coarser clip is not harmless: recursions that fold thousands of records
# into a CDF value can amplify a floor like 1e-10 into O(0.1) mass.)
UNIT_CLIP_LO = 1e-300
UNIT_CLIP_HI = 1e-16  # distance below 1.0
UNIT_CLIP = UNIT_CLIP_LO  # lower clip, kept for callers that clamp tails


def norm_cdf(x):
    return ndtr(x)


def norm_ppf(u):
    return ndtri(np.clip(u, UNIT_CLIP_LO, 1.0 - UNIT_CLIP_HI))


def norm_pdf(x):
    return INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


@numba.njit(cache=True)
def nb_norm_cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@numba.njit(cache=True)
def nb_norm_pdf(x):
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


@numba.njit(cache=True)
def nb_norm_ppf(p):
    """Inverse standard-normal CDF (Wichura's PPND16, ~1e-15 absolute)."""
    if p < UNIT_CLIP_LO:
        p = UNIT_CLIP_LO
    elif p > 1.0 - UNIT_CLIP_HI:
        p = 1.0 - UNIT_CLIP_HI
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        val = -val
    return val


# Gauss-Legendre abscissae/weights on [-1, 1] used by the bivariate CDF
# quadrature (Genz's selection: 6, 12 or 20 points depending on |rho|).
_GL6_X = np.array([-0.9324695142031522, -0.6612093864662647, -0.2386191860831970,
                   0.2386191860831970, 0.6612093864662647, 0.9324695142031522])
_GL6_W = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904,
                   0.4679139345726904, 0.3607615730481384, 0.1713244923791705])
_GL12_X = np.array([-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                    -0.5873179542866171, -0.3678314989981802, -0.1252334085114692,
                    0.1252334085114692, 0.3678314989981802, 0.5873179542866171,
                    0.7699026741943050, 0.9041172563704750, 0.9815606342467191])
_GL12_W = np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                    0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
                    0.2491470458134029, 0.2334925365383547, 0.2031674267230659,
                    0.1600783285433464, 0.1069393259953183, 0.04717533638651177])
_GL20_X = np.array([-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                    -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                    -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                    -0.07652652113349733,
                    0.07652652113349733, 0.2277858511416451, 0.3737060887154196,
                    0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                    0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                    0.9931285991850949])
_GL20_W = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                    0.1527533871307259,
                    0.1527533871307259, 0.1491729864726037, 0.1420961093183821,
                    0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                    0.08327674157670475, 0.06267204833410906, 0.04060142980038694,
                    0.01761400713915212])


@numba.njit(cache=True)
def nb_bvn_cdf(h, k, rho):
    """P(X <= h, Y <= k) for standard bivariate normal with correlation rho.

    Genz's hybrid quadrature (Drezner-Wesolowsky for moderate rho, tail
    transformation otherwise); absolute error below 1e-14.
    """
    if rho >= 1.0:
        return nb_norm_cdf(min(h, k))
    if rho <= -1.0:
        return max(0.0, nb_norm_cdf(h) + nb_norm_cdf(k) - 1.0)
    # Genz works with P(X > dh, Y > dk).
    dh = -h
    dk = -k
    if abs(rho) < 0.3:
        gx, gw, ng = _GL6_X, _GL6_W, 6
    elif abs(rho) < 0.75:
        gx, gw, ng = _GL12_X, _GL12_W, 12
    else:
        gx, gw, ng = _GL20_X, _GL20_W, 20
    hk = dh * dk
    bvn = 0.0
    if abs(rho) < 0.925:
        hs = (dh * dh + dk * dk) / 2.0
        asr = math.asin(rho)
        for i in range(ng):
            sn = math.sin(asr * (1.0 + gx[i]) / 2.0)
            bvn += gw[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (4.0 * math.pi) + nb_norm_cdf(-dh) * nb_norm_cdf(-dk)
    else:
        if rho < 0.0:
            dk = -dk
            hk = -hk
        ass = (1.0 - rho) * (1.0 + rho)
        a = math.sqrt(ass)
        bs = (dh - dk) * (dh - dk)
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / ass + hk) / 2.0
        if asr > -100.0:
            bvn = (a * math.exp(asr)
                   * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                      + c * d * ass * ass / 5.0))
        if -hk < 100.0:
            b = math.sqrt(bs)
            bvn -= (math.exp(-hk / 2.0) * math.sqrt(2.0 * math.pi)
                    * nb_norm_cdf(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
        a = a / 2.0
        for i in range(ng):
            xs = a * (1.0 + gx[i])
            xs = xs * xs
            rs = math.sqrt(1.0 - xs)
            asr = -(bs / xs + hk) / 2.0
            if asr > -100.0:
                sp = (1.0 + c * xs * (1.0 + d * xs))
                ep = math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                bvn += a * gw[i] * math.exp(asr) * (ep - sp)
        bvn = -bvn / (2.0 * math.pi)
        if rho > 0.0:
            bvn += nb_norm_cdf(-max(dh, dk))
        else:
            bvn = -bvn
            if dk > dh:
                bvn += nb_norm_cdf(dk) - nb_norm_cdf(dh)
    if bvn < 0.0:
        bvn = 0.0
    elif bvn > 1.0:
        bvn = 1.0
    return bvn


def bvn_cdf(h, k, rho):
    """Array-friendly Phi_2(h, k; rho) via Owen's T (machine precision)."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    scalar = h.ndim == 0 and k.ndim == 0
    h, k = np.broadcast_arrays(np.atleast_1d(h), np.atleast_1d(k))
    if rho >= 1.0:
        out = ndtr(np.minimum(h, k))
    elif rho <= -1.0:
        out = np.maximum(0.0, ndtr(h) + ndtr(k) - 1.0)
    elif rho == 0.0:
        out = ndtr(h) * ndtr(k)
    else:
        sr = math.sqrt(1.0 - rho * rho)
        # Owen (1956): Phi2 = (Phi(h)+Phi(k))/2 - T(h,ah) - T(k,ak) - beta.
        # At h == 0 the T-term limit is sign(k)/4 (and symmetrically for k).
        hz = h == 0.0
        kz = k == 0.0
        hsafe = np.where(hz, 1.0, h)
        ksafe = np.where(kz, 1.0, k)
        th = np.where(hz, 0.25 * np.sign(k), owens_t(h, (k - rho * h) / (hsafe * sr)))
        tk = np.where(kz, 0.25 * np.sign(h), owens_t(k, (h - rho * k) / (ksafe * sr)))
        beta = np.where((h * k < 0.0) | ((h * k == 0.0) & (h + k < 0.0)), 0.5, 0.0)
        out = 0.5 * (ndtr(h) + ndtr(k)) - th - tk - beta
        both0 = hz & kz
        if np.any(both0):
            out = np.where(both0, 0.25 + math.asin(rho) / (2.0 * math.pi), out)
        out = np.clip(out, 0.0, 1.0)
    return float(out[()]) if scalar else out


def gauss_copula_density(u, v, rho):
    """Bivariate Gaussian copula density c_rho(u, v) on the unit square."""
    s = norm_ppf(u)
    t = norm_ppf(v)
    omr2 = 1.0 - rho * rho
    return np.exp(-(rho * rho * (s * s + t * t) - 2.0 * rho * s * t)
                  / (2.0 * omr2)) / math.sqrt(omr2)


def gauss_copula_cdf(u, v, rho):
    """Bivariate Gaussian copula CDF C_rho(u, v)."""
    return bvn_cdf(norm_ppf(u), norm_ppf(v), rho)


def gauss_copula_conditional(u, v, rho):
    """H_rho(u, v) = P(U <= u | V = v) for the Gaussian copula."""
    if rho == 0.0:
        return np.asarray(u, dtype=float) if np.ndim(u) else float(u)
    sr = math.sqrt(1.0 - rho * rho)
    return ndtr((norm_ppf(u) - rho * norm_ppf(v)) / sr)
