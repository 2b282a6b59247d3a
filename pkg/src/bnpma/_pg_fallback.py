"""Pure-Python Polya-Gamma kernel.

Mirrors ``_pg_kernel.pyx`` operation for operation: both consume the same
sequence of ``Generator.random()`` doubles, so for a given generator state
the two backends return bitwise identical draws.
"""
import math

import numpy as np

_TRUNC = 0.64
_PI2_8 = math.pi * math.pi / 8.0
_TWO_PI = 2.0 * math.pi


def _std_exp(rng):
    return -math.log1p(-rng.random())


def _std_normal(rng):
    u1 = rng.random()
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(_TWO_PI * u2)


def _norm_logcdf(x):
    # log Phi(x); erfc keeps precision in the left tail
    if x > -20.0:
        return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))
    # Mills-ratio series; erfc underflows near x = -37
    r = 1.0 / (x * x)
    return (-0.5 * x * x - math.log(-x) - 0.5 * math.log(2.0 * math.pi)
            + math.log1p(r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - 945.0 * r))))))


def _acoef(n, x):
    k = n + 0.5
    if x > _TRUNC:
        return math.pi * k * math.exp(-k * k * math.pi * math.pi * x / 2.0)
    return (2.0 / (math.pi * x)) ** 1.5 * math.pi * k * math.exp(-2.0 * k * k / x)


def _left_mass(z):
    """Probability of proposing from the exponential (right) piece."""
    fz = _PI2_8 + z * z / 2.0
    b = math.sqrt(1.0 / _TRUNC) * (_TRUNC * z - 1.0)
    a = -math.sqrt(1.0 / _TRUNC) * (_TRUNC * z + 1.0)
    x0 = math.log(fz) + fz * _TRUNC
    xb = x0 - z + _norm_logcdf(b)
    xa = x0 + z + _norm_logcdf(a)
    # log of q/p, kept in log space so large z cannot overflow
    hi = xb if xb > xa else xa
    lq = math.log(4.0 / math.pi) + hi + math.log1p(math.exp(-abs(xb - xa)))
    if lq > 0.0:
        t = math.exp(-lq)
        return t / (1.0 + t)
    return 1.0 / (1.0 + math.exp(lq))


def _tinvgauss(z, rng):
    """Inverse-Gaussian(1/z, 1) truncated to (0, 0.64)."""
    r = _TRUNC
    x = r + 1.0
    if z < 1.0 / r:
        alpha = 0.0
        while rng.random() > alpha:
            e1 = _std_exp(rng)
            e2 = _std_exp(rng)
            while e1 * e1 > 2.0 * e2 / r:
                e1 = _std_exp(rng)
                e2 = _std_exp(rng)
            x = 1.0 + e1 * r
            x = r / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > r:
            y = _std_normal(rng)
            y = y * y
            my = mu * y
            x = mu + 0.5 * mu * my - 0.5 * mu * math.sqrt(4.0 * my + my * my)
            if rng.random() > mu / (mu + x):
                x = mu * mu / x
    return x


def pg1(c, rng, p_right=None):
    """One exact PG(1, c) draw by the alternating-series method."""
    z = 0.5 * abs(c)
    k = _PI2_8 + z * z / 2.0
    if p_right is None:
        p_right = _left_mass(z)
    while True:
        if rng.random() < p_right:
            x = _TRUNC + _std_exp(rng) / k
        else:
            x = _tinvgauss(z, rng)
        s = _acoef(0, x)
        y = rng.random() * s
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
    b = np.asarray(b, dtype=np.int64)
    c = np.asarray(c, dtype=np.float64)
    out = np.empty(b.shape[0], dtype=np.float64)
    for i in range(b.shape[0]):
        acc = 0.0
        ci = float(c[i])
        pr = _left_mass(0.5 * abs(ci))
        for _ in range(int(b[i])):
            acc += pg1(ci, rng, pr)
        out[i] = acc
    return out
