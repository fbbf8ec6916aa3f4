# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-Maruyama kernels.

Mirrors ``geomews._fallback`` operation for operation so both backends
consume the random stream identically and produce the same floats.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, sqrt, isfinite
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()

cdef enum:
    PHYTO = 0
    SCHLOGL = 1


cdef bitgen_t* _bitgen(object generator) except NULL:
    capsule = generator.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _reflect(double x, double lo, double hi) nogil:
    if x < lo:
        x = 2.0 * lo - x
    if x > hi:
        x = 2.0 * hi - x
    if x < lo:
        x = lo
    return x


cdef inline double _ellipse(const double* s, const double* c, const double* ax,
                           Py_ssize_t dim) nogil:
    cdef double d0 = (s[0] - c[0]) / ax[0]
    cdef double d1
    if dim == 1:
        return d0 * d0
    d1 = (s[1] - c[1]) / ax[1]
    return d0 * d0 + d1 * d1


cdef inline void _step_phyto(double* s, const double* p, double sig_t, double sig_u,
                             double sqdt, double dt, double xi_t, double xi_u,
                             const double* lo, const double* hi) nogil:
    # p = a, b, s0, s1, alpha1, T0, alpha2, gamma, mu, b1, delta
    cdef double T = s[0]
    cdef double u = s[1]
    cdef double S = p[2] + (p[3] - p[2]) * exp(-p[4] * u)
    cdef double g = 0.0
    cdef double t2 = T * T
    if T > 0.0:
        g = p[9] * exp(-p[5] / T - p[6] * T)
    cdef double f_t = (-p[0] * (t2 * t2) + p[1] * (1.0 - S)) / p[7]
    cdef double f_u = u * (g - p[8] - u)
    cdef double un = u + f_u * dt + sig_u * sqrt(u + p[10]) * sqdt * xi_u
    cdef double tn = T + f_t * dt + sig_t * sqdt * xi_t
    tn = _reflect(tn, lo[0], hi[0])
    un = _reflect(un, lo[1], hi[1])
    if un < 0.0:
        un = 0.0
    s[0] = tn
    s[1] = un


cdef inline double _step_schlogl(double x, const double* p, double sig, double sqdt,
                                 double dt, double xi, double lo, double hi) nogil:
    cdef double f = -(x - p[0]) * (x - p[1]) * (x - p[2])
    return _reflect(x + f * dt + sig * sqdt * xi, lo, hi)


def em_path(int kind, double[::1] params, double[::1] sigma, double[::1] x0,
            double[::1] lo, double[::1] hi, double dt, Py_ssize_t nsteps,
            Py_ssize_t every, object generator):
    """Integrate one path; return the state after every ``every`` steps."""
    cdef bitgen_t* rng = _bitgen(generator)
    cdef Py_ssize_t dim = x0.shape[0]
    cdef Py_ssize_t nout = nsteps // every
    out_arr = np.empty((nout, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s[2]
    cdef double sqdt = sqrt(dt)
    cdef double xi_t, xi_u
    cdef Py_ssize_t i, k = 0
    cdef Py_ssize_t bad = -1
    s[0] = x0[0]
    s[1] = x0[1] if dim == 2 else 0.0
    with generator.bit_generator.lock, nogil:
        for i in range(nsteps):
            if kind == PHYTO:
                xi_t = random_standard_normal(rng)
                xi_u = random_standard_normal(rng)
                _step_phyto(s, &params[0], sigma[0], sigma[1], sqdt, dt, xi_t, xi_u,
                            &lo[0], &hi[0])
                if not (isfinite(s[0]) and isfinite(s[1])):
                    bad = i
                    break
            else:
                xi_t = random_standard_normal(rng)
                s[0] = _step_schlogl(s[0], &params[0], sigma[0], sqdt, dt, xi_t, lo[0], hi[0])
                if not isfinite(s[0]):
                    bad = i
                    break
            if (i + 1) % every == 0:
                out[k, 0] = s[0]
                if dim == 2:
                    out[k, 1] = s[1]
                k += 1
    if bad >= 0:
        raise FloatingPointError(f"non-finite state at step {bad}")
    return out_arr


def em_first_passage(int kind, double[::1] params, double[::1] sigma, double[::1] x0,
                     double[::1] lo, double[::1] hi, double dt, double t_max,
                     double[::1] center, double[::1] axes, object generator):
    """Run until the state enters the target ellipse or ``t_max`` elapses.

    Returns ``(tau, censored)``; a censored run reports ``tau = t_max``.
    """
    cdef bitgen_t* rng = _bitgen(generator)
    cdef Py_ssize_t dim = x0.shape[0]
    cdef double s[2]
    cdef double sqdt = sqrt(dt)
    cdef double xi_t, xi_u, r
    cdef long long n = 0
    cdef long long nmax = <long long>(t_max / dt + 0.5)
    cdef bint hit = False
    cdef long long bad = -1
    s[0] = x0[0]
    s[1] = x0[1] if dim == 2 else 0.0
    r = _ellipse(s, &center[0], &axes[0], dim)
    if r <= 1.0:
        return 0.0, False
    with generator.bit_generator.lock, nogil:
        while n < nmax:
            if kind == PHYTO:
                xi_t = random_standard_normal(rng)
                xi_u = random_standard_normal(rng)
                _step_phyto(s, &params[0], sigma[0], sigma[1], sqdt, dt, xi_t, xi_u,
                            &lo[0], &hi[0])
                if not (isfinite(s[0]) and isfinite(s[1])):
                    bad = n
                    break
                r = _ellipse(s, &center[0], &axes[0], 2)
            else:
                xi_t = random_standard_normal(rng)
                s[0] = _step_schlogl(s[0], &params[0], sigma[0], sqdt, dt, xi_t, lo[0], hi[0])
                if not isfinite(s[0]):
                    bad = n
                    break
                r = _ellipse(s, &center[0], &axes[0], 1)
            n += 1
            if r <= 1.0:
                hit = True
                break
    if bad >= 0:
        raise FloatingPointError(f"non-finite state at step {bad}")
    if hit:
        return n * dt, False
    return t_max, True
