"""Pure-Python Euler-Maruyama kernels.

Same signatures, same arithmetic order and same random-stream consumption
as the compiled ``_kernels`` module, so both produce identical floats.
"""
import math

import numpy as np

PHYTO = 0
SCHLOGL = 1

_BLOCK = 4096


def _reflect(x, lo, hi):
    if x < lo:
        x = 2.0 * lo - x
    if x > hi:
        x = 2.0 * hi - x
    if x < lo:
        x = lo
    return x


def _ellipse(s, c, ax, dim):
    d0 = (s[0] - c[0]) / ax[0]
    if dim == 1:
        return d0 * d0
    d1 = (s[1] - c[1]) / ax[1]
    return d0 * d0 + d1 * d1


def _step_phyto(T, u, p, sig_t, sig_u, sqdt, dt, xi_t, xi_u, lo, hi):
    a, b, s0, s1, alpha1, T0, alpha2, gamma, mu, b1, delta = p
    S = s0 + (s1 - s0) * math.exp(-alpha1 * u)
    g = 0.0
    t2 = T * T
    if T > 0.0:
        g = b1 * math.exp(-T0 / T - alpha2 * T)
    f_t = (-a * (t2 * t2) + b * (1.0 - S)) / gamma
    f_u = u * (g - mu - u)
    un = u + f_u * dt + sig_u * math.sqrt(u + delta) * sqdt * xi_u
    tn = T + f_t * dt + sig_t * sqdt * xi_t
    tn = _reflect(tn, lo[0], hi[0])
    un = _reflect(un, lo[1], hi[1])
    if un < 0.0:
        un = 0.0
    return tn, un


def _step_schlogl(x, p, sig, sqdt, dt, xi, lo, hi):
    f = -(x - p[0]) * (x - p[1]) * (x - p[2])
    return _reflect(x + f * dt + sig * sqdt * xi, lo, hi)


def _normals(generator, per_step):
    """Yield normals in the order the compiled kernel draws them."""
    while True:
        block = generator.standard_normal(_BLOCK * per_step)
        yield from block.tolist()


def em_path(kind, params, sigma, x0, lo, hi, dt, nsteps, every, generator):
    params = [float(v) for v in params]
    lo = [float(v) for v in lo]
    hi = [float(v) for v in hi]
    dim = len(x0)
    nout = nsteps // every
    out = np.empty((nout, dim))
    sqdt = math.sqrt(dt)
    T = float(x0[0])
    u = float(x0[1]) if dim == 2 else 0.0
    k = 0
    if kind == PHYTO:
        draws = _draws_exact(generator, 2 * nsteps)
        for i in range(nsteps):
            T, u = _step_phyto(T, u, params, sigma[0], sigma[1], sqdt, dt,
                               draws[2 * i], draws[2 * i + 1], lo, hi)
            if not (math.isfinite(T) and math.isfinite(u)):
                raise FloatingPointError(f"non-finite state at step {i}")
            if (i + 1) % every == 0:
                out[k, 0] = T
                out[k, 1] = u
                k += 1
    else:
        draws = _draws_exact(generator, nsteps)
        for i in range(nsteps):
            T = _step_schlogl(T, params, sigma[0], sqdt, dt, draws[i], lo[0], hi[0])
            if not math.isfinite(T):
                raise FloatingPointError(f"non-finite state at step {i}")
            if (i + 1) % every == 0:
                out[k, 0] = T
                k += 1
    return out


def _draws_exact(generator, n):
    return generator.standard_normal(n).tolist()


def em_first_passage(kind, params, sigma, x0, lo, hi, dt, t_max, center, axes, generator):
    params = [float(v) for v in params]
    lo = [float(v) for v in lo]
    hi = [float(v) for v in hi]
    center = [float(v) for v in center]
    axes = [float(v) for v in axes]
    dim = len(x0)
    s = [float(x0[0]), float(x0[1]) if dim == 2 else 0.0]
    if _ellipse(s, center, axes, dim) <= 1.0:
        return 0.0, False
    sqdt = math.sqrt(dt)
    nmax = int(t_max / dt + 0.5)
    n = 0
    # Draw lazily in blocks; the compiled kernel draws one at a time, and
    # leftover draws are never observed because each trajectory owns its stream.
    if kind == PHYTO:
        draws = _normals(generator, 2)
        while n < nmax:
            xi_t = next(draws)
            xi_u = next(draws)
            s[0], s[1] = _step_phyto(s[0], s[1], params, sigma[0], sigma[1], sqdt, dt,
                                     xi_t, xi_u, lo, hi)
            if not (math.isfinite(s[0]) and math.isfinite(s[1])):
                raise FloatingPointError(f"non-finite state at step {n}")
            n += 1
            if _ellipse(s, center, axes, 2) <= 1.0:
                return n * dt, False
    else:
        draws = _normals(generator, 1)
        while n < nmax:
            s[0] = _step_schlogl(s[0], params, sigma[0], sqdt, dt, next(draws), lo[0], hi[0])
            if not math.isfinite(s[0]):
                raise FloatingPointError(f"non-finite state at step {n}")
            n += 1
            if _ellipse(s, center, axes, 1) <= 1.0:
                return n * dt, False
    return t_max, True
