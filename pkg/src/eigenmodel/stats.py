"""Random streams and the few distributions the samplers draw from."""
from __future__ import annotations

import hashlib

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr, ndtri_exp

__all__ = [
    "make_rng",
    "std_normal_cdf",
    "truncated_normal_draw",
    "mvn_draw",
    "inverse_gamma_draw",
]


def _stream_key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed, *stream):
    """Generator for substream ``stream`` of ``seed``.

    Substreams are keyed by ``(seed, stream...)`` only, so they do not
    depend on the order in which other streams were created.
    """
    ss = np.random.SeedSequence(
        int(seed) & (2**64 - 1), spawn_key=tuple(_stream_key(p) for p in stream)
    )
    return np.random.Generator(np.random.PCG64(ss))


def std_normal_cdf(x):
    return ndtr(x)


def truncated_normal_draw(mean, lo, hi, rng, size=None):
    """Draw from normal(mean, 1) restricted to the open interval ``(lo, hi)``.

    Vectorised over broadcastable arguments.  Draws invert the survival
    function in log space; intervals lying in the lower tail are mirrored
    first, so the inversion stays exact far beyond the range where ``ndtr``
    underflows.
    """
    mean, lo, hi = (np.asarray(t, float) for t in (mean, lo, hi))
    if np.any(~(lo < hi)):
        raise ValueError("truncation interval must satisfy lo < hi")
    a = lo - mean
    b = hi - mean
    shape = np.broadcast_shapes(a.shape, b.shape) if size is None else size
    u = rng.random(shape)
    flip = b <= 0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)
    la = log_ndtr(-a)
    lb = log_ndtr(-b)
    with np.errstate(divide="ignore"):
        logp = la + np.log(u + (1.0 - u) * np.exp(lb - la))
    x = -ndtri_exp(logp)
    # rounding can land on a bound; pull back inside the open interval
    x = np.minimum(np.maximum(x, np.nextafter(a, np.inf)), np.nextafter(b, -np.inf))
    out = np.where(flip, -x, x) + mean
    out = np.minimum(np.maximum(out, np.nextafter(lo, np.inf)), np.nextafter(hi, -np.inf))
    return out if out.ndim else float(out)


def mvn_draw(mean, precision, rng):
    """Draw from normal(mean, precision^-1) using the Cholesky factor of the precision."""
    mean = np.atleast_1d(np.asarray(mean, float))
    precision = np.atleast_2d(np.asarray(precision, float))
    try:
        L = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as e:
        raise ValueError("precision matrix is not positive definite") from e
    z = rng.standard_normal(mean.shape[0])
    return mean + linalg.solve_triangular(L.T, z, lower=False)


def mvn_draw_canonical(b, precision, rng):
    """Draw from normal(P^-1 b, P^-1) given the canonical pair ``(b, P)``."""
    precision = np.atleast_2d(np.asarray(precision, float))
    try:
        L = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as e:
        raise ValueError("precision matrix is not positive definite") from e
    w = linalg.solve_triangular(L, b, lower=True)
    z = rng.standard_normal(w.shape[0])
    return linalg.solve_triangular(L.T, w + z, lower=False)


def inverse_gamma_draw(shape, rate, rng, size=None):
    """Inverse-gamma draw with density proportional to x^(-shape-1) exp(-rate/x)."""
    shape = np.asarray(shape, float)
    rate = np.asarray(rate, float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("inverse-gamma shape and rate must be positive")
    g = rng.gamma(shape, 1.0, size=size if size is not None else np.broadcast(shape, rate).shape)
    out = rate / g
    return out if np.ndim(out) else float(out)
