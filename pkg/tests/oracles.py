"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical code; each function derives
its answer by a different route (closed forms, quadrature, brute force).
"""
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import logsumexp

DEFAULT_PARAMS = dict(a=1.0, b=0.3, s0=0.1, s1=0.95, alpha1=3.0, T0=1.0, alpha2=1.0, gamma=1.0,
              mu=0.1, b1=2.1)


def drift_by_hand(T, u, a, b, s0, s1, alpha1, T0, alpha2, gamma, mu, b1):
    """Scalar evaluation with the math module, written out term by term."""
    albedo = s0 + (s1 - s0) * math.exp(-alpha1 * u)
    absorbed = b * (1.0 - albedo)
    emitted = a * T * T * T * T
    growth = b1 * math.exp(-T0 / T) * math.exp(-alpha2 * T) if T > 0 else 0.0
    return (absorbed - emitted) / gamma, u * growth - mu * u - u * u


def schlogl_V(x, r=(0.2, 0.5, 0.8)):
    """Potential with V' = (x-r1)(x-r2)(x-r3), from the expanded polynomial."""
    r1, r2, r3 = r
    c3 = 1.0
    c2 = -(r1 + r2 + r3)
    c1 = r1 * r2 + r1 * r3 + r2 * r3
    c0 = -r1 * r2 * r3
    return c3 * x**4 / 4 + c2 * x**3 / 3 + c1 * x**2 / 2 + c0 * x


def committor_1d_quadrature(x, a, b, sigma, V=schlogl_V, n=400_001):
    """q(x) = int_a^x exp(2V/sigma^2) / int_a^b exp(2V/sigma^2) on a fine grid."""
    z = np.linspace(a, b, n)
    e = 2 * V(z) / sigma**2
    w = np.exp(e - e.max())
    c = cumulative_trapezoid(w, z, initial=0.0)
    return np.interp(x, z, c / c[-1])


def mfpt_1d_quadrature(x, b, sigma, lo=0.0, V=schlogl_V, n=400_001):
    """tau(x) = int_x^b s(y) int_lo^y m(z) dz dy, reflecting at ``lo``, absorbing at ``b``.

    Scale density s = exp(V/D), speed density m = exp(-V/D)/D, D = sigma^2/2.
    Evaluated in log space.
    """
    D = sigma**2 / 2
    y = np.linspace(lo, b, n)
    logm = -V(y) / D - math.log(D)
    shift = logm.max()
    inner = cumulative_trapezoid(np.exp(logm - shift), y, initial=0.0)
    with np.errstate(divide="ignore"):
        log_integrand = V(y) / D + np.log(inner) + shift
    k = np.searchsorted(y, x)
    seg = log_integrand[k:]
    h = y[1] - y[0]
    wts = np.full(seg.size, h)
    wts[0] = wts[-1] = h / 2
    return float(np.exp(logsumexp(seg, b=wts)))


def erf_committor(xi, lam, D):
    """Committor of d(xi) = lam xi dt + sqrt(2D) dW between xi = -inf and +inf."""
    from scipy.special import erf
    return 0.5 * (1 + erf(np.sqrt(lam / (2 * D)) * xi))


def normal_equations(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    sx, sy, sxx, sxy = x.sum(), y.sum(), (x * x).sum(), (x * y).sum()
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return slope, (sy - slope * sx) / n


def brute_hinge_bic(x, y, p=4):
    """BIC of every candidate hinge by explicit 3x3 normal equations."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    out = []
    for k in x[1:-1]:
        A = np.column_stack([np.ones(n), x, np.clip(x - k, 0, None)])
        beta = np.linalg.solve(A.T @ A, A.T @ y)
        rss = max(((y - A @ beta) ** 2).sum(), 1e-300)
        out.append(n * math.log(rss / n) + p * math.log(n))
    return x[1:-1], np.array(out)


def dense_curve_distance(src, dst, samples=10_000):
    """Directed distance by densely resampling both curves by arc length."""
    def resample(v):
        s = np.r_[0, np.cumsum(np.linalg.norm(np.diff(v, axis=0), axis=1))]
        t = np.linspace(0, s[-1], samples)
        return np.c_[np.interp(t, s, v[:, 0]), np.interp(t, s, v[:, 1])]

    a = resample(np.asarray(src, float))
    b = resample(np.asarray(dst, float))
    d = np.empty(len(a))
    for i in range(0, len(a), 500):
        d[i:i + 500] = np.sqrt(((a[i:i + 500, None, :] - b[None]) ** 2).sum(-1)).min(1)
    return float(d.mean())


def product_limit_mean(times, censored, horizon):
    """KM restricted mean by looping over sorted observations one at a time."""
    order = np.lexsort((np.asarray(censored), np.asarray(times)))
    t_sorted = np.asarray(times, float)[order]
    c_sorted = np.asarray(censored, bool)[order]
    n = len(t_sorted)
    surv, last, area = 1.0, 0.0, 0.0
    i = 0
    while i < n:
        t = t_sorted[i]
        j = i
        deaths = 0
        while j < n and t_sorted[j] == t:
            deaths += not c_sorted[j]
            j += 1
        at_risk = n - i
        if deaths:
            area += surv * (t - last)
            last = t
            surv *= 1 - deaths / at_risk
        i = j
    area += surv * (horizon - last)
    return area


def fold_points(lo=1.9, hi=2.6):
    """Fold points of the reduced biomass equation from a dense root scan.

    Roots of g(T*(u)) - mu - u = 0 (u > 0) are counted on a fine b1 grid.
    """
    p = DEFAULT_PARAMS
    u = np.linspace(1e-7, 1.0, 200_001)
    Tstar = (p["b"] * (1 - (p["s0"] + (p["s1"] - p["s0"]) * np.exp(-p["alpha1"] * u)))
             / p["a"]) ** 0.25
    base = np.exp(-p["T0"] / Tstar - p["alpha2"] * Tstar)
    counts = []
    b1s = np.arange(lo, hi, 1e-4)
    for b1 in b1s:
        h = b1 * base - p["mu"] - u
        counts.append(int(np.sum(np.diff(np.sign(h)) != 0)))
    return b1s, np.array(counts)
