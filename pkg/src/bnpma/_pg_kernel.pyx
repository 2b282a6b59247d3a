# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Polya-Gamma kernel.

Draws uniforms straight from the numpy bit generator (``next_double``), in
the same order as ``_pg_fallback``, so both backends agree bitwise.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, log1p, sqrt, cos, erfc, pow, fabs, M_PI
from numpy.random cimport bitgen_t

cnp.import_array()

cdef double TRUNC = 0.64
cdef double PI2_8 = M_PI * M_PI / 8.0


cdef inline double _unif(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline double _std_exp(bitgen_t *bg) noexcept nogil:
    return -log1p(-_unif(bg))


cdef inline double _std_normal(bitgen_t *bg) noexcept nogil:
    cdef double u1 = _unif(bg)
    cdef double u2 = _unif(bg)
    return sqrt(-2.0 * log1p(-u1)) * cos(2.0 * M_PI * u2)


cdef inline double _norm_logcdf(double x) noexcept nogil:
    cdef double r
    if x > -20.0:
        return log(0.5 * erfc(-x / sqrt(2.0)))
    # Mills-ratio series; erfc underflows near x = -37
    r = 1.0 / (x * x)
    return (-0.5 * x * x - log(-x) - 0.5 * log(2.0 * M_PI)
            + log1p(r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - 945.0 * r))))))


cdef inline double _acoef(int n, double x) noexcept nogil:
    cdef double k = n + 0.5
    if x > TRUNC:
        return M_PI * k * exp(-k * k * M_PI * M_PI * x / 2.0)
    return pow(2.0 / (M_PI * x), 1.5) * M_PI * k * exp(-2.0 * k * k / x)


cdef double _left_mass(double z) noexcept nogil:
    cdef double fz = PI2_8 + z * z / 2.0
    cdef double b = sqrt(1.0 / TRUNC) * (TRUNC * z - 1.0)
    cdef double a = -sqrt(1.0 / TRUNC) * (TRUNC * z + 1.0)
    cdef double x0 = log(fz) + fz * TRUNC
    cdef double xb = x0 - z + _norm_logcdf(b)
    cdef double xa = x0 + z + _norm_logcdf(a)
    # log of q/p, kept in log space so large z cannot overflow
    cdef double hi = xb if xb > xa else xa
    cdef double lq = log(4.0 / M_PI) + hi + log1p(exp(-fabs(xb - xa)))
    cdef double t
    if lq > 0.0:
        t = exp(-lq)
        return t / (1.0 + t)
    return 1.0 / (1.0 + exp(lq))


cdef double _tinvgauss(double z, bitgen_t *bg) noexcept nogil:
    cdef double r = TRUNC
    cdef double x = r + 1.0
    cdef double alpha, e1, e2, mu, y, my
    if z < 1.0 / r:
        alpha = 0.0
        while _unif(bg) > alpha:
            e1 = _std_exp(bg)
            e2 = _std_exp(bg)
            while e1 * e1 > 2.0 * e2 / r:
                e1 = _std_exp(bg)
                e2 = _std_exp(bg)
            x = 1.0 + e1 * r
            x = r / (x * x)
            alpha = exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > r:
            y = _std_normal(bg)
            y = y * y
            my = mu * y
            x = mu + 0.5 * mu * my - 0.5 * mu * sqrt(4.0 * my + my * my)
            if _unif(bg) > mu / (mu + x):
                x = mu * mu / x
    return x


cdef double _pg1(double c, double p_right, bitgen_t *bg) noexcept nogil:
    cdef double z = 0.5 * fabs(c)
    cdef double k = PI2_8 + z * z / 2.0
    cdef double x, s, y
    cdef int n
    while True:
        if _unif(bg) < p_right:
            x = TRUNC + _std_exp(bg) / k
        else:
            x = _tinvgauss(z, bg)
        s = _acoef(0, x)
        y = _unif(bg) * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _acoef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _acoef(n, x)
                if y > s:
                    break


def pg_draws(b, c, rng):
    """PG(b[i], c[i]) for each i, each as a sum of b[i] PG(1, c[i]) draws."""
    cdef cnp.int64_t[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = bv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef cnp.int64_t j
    cdef double acc, pr
    bit_gen = rng.bit_generator
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(bit_gen.capsule, "BitGenerator")
    with bit_gen.lock, nogil:
        for i in range(n):
            acc = 0.0
            pr = _left_mass(0.5 * fabs(cv[i]))
            for j in range(bv[i]):
                acc = acc + _pg1(cv[i], pr, bg)
            ov[i] = acc
    return out
