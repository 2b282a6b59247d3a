"""Exact Polya-Gamma PG(b, c) sampling for integer b.

The compiled kernel is used when it was built; set ``BNPMA_PURE_PYTHON=1``
to force the pure-Python fallback.  Both produce identical draws for the
same generator state.
"""
import logging
import math
import os

import numpy as np

from . import _pg_fallback

log = logging.getLogger(__name__)

C_CLAMP = 700.0

if os.environ.get("BNPMA_PURE_PYTHON") == "1":
    _kernel = None
else:
    try:
        from . import _pg_kernel as _kernel
    except ImportError:  # extension not built
        _kernel = None

BACKEND = "compiled" if _kernel is not None else "python"
_pg_draws = _kernel.pg_draws if _kernel is not None else _pg_fallback.pg_draws


def pg_mean(b, c):
    """E[PG(b, c)] = b / (2c) tanh(c / 2), with the b/4 limit at c = 0."""
    c = abs(c)
    if c < 1e-8:
        return b / 4.0
    return b / (2.0 * c) * math.tanh(c / 2.0)


def pg_variance(b, c):
    """Var[PG(b, c)]."""
    c = abs(c)
    if c < 1e-4:
        return b / 24.0
    return b / (4.0 * c ** 3) * (math.sinh(c) - c) / math.cosh(c / 2.0) ** 2


def sample_pg_many(b, c, rng, backend=None):
    """Independent PG(b[i], c[i]) draws.

    Returns ``(draws, n_clamped)``; tilts with ``|c| > 700`` are clamped.
    """
    b = np.ascontiguousarray(b, dtype=np.int64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    if b.shape != c.shape:
        raise ValueError("b and c must have the same shape")
    if np.any(b < 1):
        raise ValueError("PG shape b must be a positive integer")
    over = np.abs(c) > C_CLAMP
    n_clamped = int(over.sum())
    if n_clamped:
        log.debug("clamping %d PG tilts to |c| <= %g", n_clamped, C_CLAMP)
        c = np.clip(c, -C_CLAMP, C_CLAMP)
    if backend is None:
        fn = _pg_draws
    elif backend == "python":
        fn = _pg_fallback.pg_draws
    elif backend == "compiled":
        if _kernel is None:
            raise RuntimeError("compiled PG kernel is not available")
        fn = _kernel.pg_draws
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return fn(b, c, rng), n_clamped


def sample_pg(b, c, rng):
    """A single PG(b, c) draw."""
    return float(sample_pg_many([b], [c], rng)[0][0])
