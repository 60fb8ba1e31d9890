"""Compiled inner loops shared by the sweep-heavy modules.

Every kernel is ``nogil`` so callers can fan work out over a thread pool.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
_SPLIT = 67108864.0  # 2**26


@njit(cache=True, nogil=True)
def frac_mul(n, alpha):
    """Fractional part of ``n * alpha`` for |n| < 2**52.

    ``n`` is split into 26-bit halves and ``alpha`` into 24-bit chunks so
    every partial product is exact.
    """
    n = float(n)
    n_hi = math.floor(n / _SPLIT) * _SPLIT
    n_lo = n - n_hi
    a1 = math.floor(alpha * 16777216.0) / 16777216.0
    a2 = math.floor((alpha - a1) * 281474976710656.0) / 281474976710656.0
    a3 = alpha - a1 - a2
    x = 0.0
    for part in (n_hi, n_lo):
        for chunk in (a1, a2, a3):
            y = part * chunk
            x += y - math.floor(y)
    return x - math.floor(x)


@njit(cache=True, nogil=True)
def potential_value(lam, alpha, omega, n):
    t = omega + frac_mul(n, alpha)
    t -= math.floor(t)
    return 2.0 * lam * math.cos(TWO_PI * t)


@njit(cache=True, nogil=True)
def traces(energies, pots):
    """tr of T(len(pots)) ... T(1) for every energy; ``pots[m-1]`` is V(m)."""
    out = np.empty(energies.shape[0])
    q = pots.shape[0]
    for i in range(energies.shape[0]):
        e = energies[i]
        a, b, c, d = 1.0, 0.0, 0.0, 1.0
        for m in range(q):
            v = e - pots[m]
            a, b, c, d = v * a - c, v * b - d, a, b
        out[i] = a + d
    return out


@njit(cache=True, nogil=True)
def spectral_norm(a, b, c, d):
    s = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = s * s - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return math.sqrt(0.5 * (s + math.sqrt(disc)))


@njit(cache=True, nogil=True)
def monodromy_renorm(energy, lam, alpha, omega, n, cadence):
    """Renormalised M_E(n, omega); returns (a, b, c, d, log_scale)."""
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    comp = 0.0
    for m in range(1, n + 1):
        v = energy - potential_value(lam, alpha, omega, m)
        a, b, c, d = v * a - c, v * b - d, a, b
        if m % cadence == 0 or m == n:
            s = max(abs(a), abs(b), abs(c), abs(d))
            if s > 0.0 and s != 1.0:
                a /= s
                b /= s
                c /= s
                d /= s
                # Kahan step
                y = math.log(s) - comp
                t = log_scale + y
                comp = (t - log_scale) - y
                log_scale = t
    return a, b, c, d, log_scale


@njit(cache=True, nogil=True)
def log_norm_checkpoints(energies, omegas, lam, alpha, n, n_blocks, cadence):
    """log ||M_E(n_b, omega)|| at the block ends ``n_b = n * b / n_blocks``.

    Result has shape ``(len(energies), len(omegas), n_blocks)``.
    """
    ne = energies.shape[0]
    nw = omegas.shape[0]
    out = np.empty((ne, nw, n_blocks))
    ends = np.empty(n_blocks, dtype=np.int64)
    for k in range(n_blocks):
        ends[k] = (n * (k + 1)) // n_blocks
    pots = np.empty(n + 1)
    for j in range(nw):
        w = omegas[j]
        for m in range(1, n + 1):
            pots[m] = potential_value(lam, alpha, w, m)
        for i in range(ne):
            e = energies[i]
            a, b, c, d = 1.0, 0.0, 0.0, 1.0
            log_scale = 0.0
            comp = 0.0
            blk = 0
            for m in range(1, n + 1):
                v = e - pots[m]
                a, b, c, d = v * a - c, v * b - d, a, b
                at_end = blk < n_blocks and m == ends[blk]
                if m % cadence == 0 or at_end:
                    s = max(abs(a), abs(b), abs(c), abs(d))
                    if s > 0.0:
                        a /= s
                        b /= s
                        c /= s
                        d /= s
                        y = math.log(s) - comp
                        t = log_scale + y
                        comp = (t - log_scale) - y
                        log_scale = t
                while blk < n_blocks and m == ends[blk]:
                    out[i, j, blk] = log_scale + math.log(spectral_norm(a, b, c, d))
                    blk += 1
    return out


@njit(cache=True, nogil=True)
def sturm_counts(diag, offdiag_sq, shifts):
    """Number of eigenvalues strictly below each shift (LDL^T inertia)."""
    n = diag.shape[0]
    out = np.empty(shifts.shape[0], dtype=np.int64)
    tiny = 1e-300
    for i in range(shifts.shape[0]):
        x = shifts[i]
        cnt = 0
        piv = diag[0] - x
        if piv == 0.0:
            piv = -tiny
        if piv < 0.0:
            cnt += 1
        for j in range(1, n):
            piv = diag[j] - x - offdiag_sq[j - 1] / piv
            if piv == 0.0:
                piv = -tiny
            if piv < 0.0:
                cnt += 1
        out[i] = cnt
    return out


@njit(cache=True, nogil=True)
def traces_and_slopes(energies, pots):
    """tr M and d(tr M)/dE, propagating the derivative of the product."""
    n = energies.shape[0]
    tr = np.empty(n)
    dtr = np.empty(n)
    q = pots.shape[0]
    for i in range(n):
        e = energies[i]
        a, b, c, d = 1.0, 0.0, 0.0, 1.0
        da, db, dc, dd = 0.0, 0.0, 0.0, 0.0
        for m in range(q):
            v = e - pots[m]
            da, db, dc, dd = v * da - dc + a, v * db - dd + b, da, db
            a, b, c, d = v * a - c, v * b - d, a, b
        tr[i] = a + d
        dtr[i] = da + dd
    return tr, dtr
