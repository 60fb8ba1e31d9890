"""Irrational-frequency spectra through rational approximants, the butterfly, and the IDS."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .arithmetic import ContinuedFraction, expand_continued_fraction
from .core import Parameters, potential
from .periodic import BandSet, band_set
from .tridiagonal import sturm_count


class DeepenExpansion(ValueError):
    """No available convergent meets the requested Hausdorff tolerance."""


def continuity_radius(lam: float, delta) -> float:
    """6 (2 lam |alpha - alpha'|)^(1/2)."""
    return 6.0 * math.sqrt(2.0 * lam * float(abs(delta)))


@dataclass(frozen=True)
class ApproxSpectrum:
    bands: BandSet
    alpha_used: Fraction
    error_bound: float


def spectrum_approx(lam: float, alpha, tol: float, depth: int = 40) -> ApproxSpectrum:
    """Band set of the smallest-q convergent whose continuity radius is <= tol.

    ``alpha`` is a :class:`ContinuedFraction` or anything
    :func:`expand_continued_fraction` accepts.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cf = alpha if isinstance(alpha, ContinuedFraction) else expand_continued_fraction(alpha, depth)
    for k, (p, q) in enumerate(cf.convergents, start=1):
        with mpmath.workdps(30):
            err = float(cf.error(k))
        bound = continuity_radius(lam, err)
        if bound <= tol:
            return ApproxSpectrum(band_set(lam, p, q), Fraction(p, q), bound)
    raise DeepenExpansion(f"no convergent among {len(cf.convergents)} reaches tolerance {tol}; "
                          "deepen the expansion")


@dataclass(frozen=True)
class ButterflyRow:
    p: int
    q: int
    band_index: int
    left: float
    right: float


def farey_fractions(q_max: int) -> list[tuple[int, int]]:
    """Coprime (p, q) with 0 <= p <= q <= q_max, ordered by (q, p)."""
    return [(p, q) for q in range(1, q_max + 1) for p in range(0, q + 1) if math.gcd(p, q) == 1]


def butterfly_dataset(lam: float, q_max: int, threads: int = 1) -> list[ButterflyRow]:
    """Band intervals of Sigma^{lam, p/q} for every reduced p/q in [0, 1] with q <= q_max."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    fracs = farey_fractions(q_max)

    def one(pq):
        return band_set(lam, *pq).intervals

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, fracs))
    else:
        results = [one(pq) for pq in fracs]
    rows = []
    for (p, q), iv in zip(fracs, results):
        rows.extend(ButterflyRow(p, q, i, float(l), float(r)) for i, (l, r) in enumerate(iv))
    return rows


@dataclass(frozen=True)
class IDSEstimate:
    energies: np.ndarray
    values: np.ndarray
    N: int
    mode: str  # "fixed_phase" or "phase_average"
    phase_grid: int = 1


def ids_estimate(params: Parameters, energies, N: int, phase_grid: int | None = None,
                 threads: int = 1) -> IDSEstimate:
    """k(E) = #{eigenvalues of H_[0, N-1] <= E} / N by Sturm counts.

    With ``phase_grid`` the count is averaged over omega_j = j / phase_grid
    instead of using ``params.omega``.
    """
    if N < 100:
        raise ValueError("N must be >= 100")
    e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    # Sturm counts give #{< E}; nudge up one ulp so ties count as <= E
    shifts = np.nextafter(e, np.inf)
    phases = [params.omega] if phase_grid is None else list(np.arange(phase_grid) / phase_grid)

    def count(w):
        diag = potential(Parameters(params.lam, params.alpha, w), np.arange(N))
        return sturm_count(diag, shifts)

    if threads > 1 and len(phases) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(count, phases))
    else:
        counts = [count(w) for w in phases]
    vals = np.sum(np.array(counts, dtype=np.float64), axis=0) / (N * len(phases))
    mode = "fixed_phase" if phase_grid is None else "phase_average"
    return IDSEstimate(e, vals, N, mode, 1 if phase_grid is None else phase_grid)
