"""Aubry duality at the level of sequences, and reducibility of the dual cocycle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .approximation import continuity_radius
from .fourier import FourierSeries, fourier_fit
from .periodic import band_set

SMALL_DIVISOR = 1e-13
DEFAULT_GRID = 512


class SmallDivisorError(ArithmeticError):
    def __init__(self, k: int, divisor: float):
        super().__init__(f"|exp(2 pi i alpha k) - 1| = {divisor:.3g} < {SMALL_DIVISOR:g} at k = {k}")
        self.k = k
        self.divisor = divisor


class PreconditionError(ValueError):
    pass


@dataclass
class DualSolution:
    n: np.ndarray
    values: np.ndarray
    residual: float
    max_abs: float
    tail_ratio: float
    coupling: float
    energy: float


def dual_transform(u, M: int) -> FourierSeries:
    """u-hat(theta) = sum_m u(m) e^{2 pi i m theta} for u on [-M, M]."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2 * M + 1,):
        raise ValueError("u must have 2M + 1 entries")
    return FourierSeries(u, -M)


def dual_solution(u, omega_tilde: float, omega: float, alpha: float, lam: float, energy: float,
                  window: int = 50) -> DualSolution:
    """u~(n) = u-hat(omega~ + n alpha) e^{2 pi i n omega} and its residual.

    ``u`` lives on [-M, M] and should solve the lam equation at phase
    ``omega`` and energy E.  The residual is measured in

        u~(n+1) + u~(n-1) + (2/lam) cos(2 pi (omega~ + n alpha)) u~(n) = (E/lam) u~(n)

    over |n| <= window.
    """
    u = np.asarray(u)
    if u.ndim != 1 or u.size % 2 != 1:
        raise ValueError("u must have odd length 2M + 1")
    M = u.size // 2
    peak = float(np.max(np.abs(u)))
    tail = max(abs(u[0]), abs(u[-1])) / peak if peak > 0 else 0.0
    if tail >= 1e-8:
        edge = max(1, M // 10)
        mass = float(np.sum(np.abs(u[:edge])) + np.sum(np.abs(u[-edge:])))
        raise PreconditionError(f"u does not decay at the window edge: tail ratio {tail:.3g}, "
                                f"tail mass {mass:.3g}")
    uh = dual_transform(u, M)
    n = np.arange(-window - 1, window + 2)
    theta = omega_tilde + np.mod(n * alpha, 1.0)
    vals = uh(theta) * np.exp(2j * np.pi * np.mod(n * omega, 1.0))
    inner = slice(1, -1)
    lhs = vals[2:] + vals[:-2] + (2.0 / lam) * np.cos(2 * np.pi * theta[inner]) * vals[inner]
    res = np.abs(lhs - (energy / lam) * vals[inner])
    return DualSolution(n[inner], vals[inner], float(res.max()), float(np.max(np.abs(vals[inner]))),
                        tail, 1.0 / lam, energy / lam)


@dataclass
class CohomologicalSolution:
    b: FourierSeries
    c: float
    residual: float
    min_divisor: float
    min_divisor_k: int


def cohomological_solve(c_tilde: FourierSeries, alpha: float, grid: int = DEFAULT_GRID) -> CohomologicalSolution:
    """Solve b(omega + alpha) - b(omega) = c~(omega) - c with c the mean of c~.

    b_0 = 0 and b_k = c~_k / (e^{2 pi i alpha k} - 1) otherwise.
    """
    if c_tilde.reality_defect() > 1e-10 * max(1.0, float(np.max(np.abs(c_tilde.coefficients)))):
        raise PreconditionError("c~ must be real-valued")
    ks = c_tilde.ks
    coef = c_tilde.coefficients
    c = float(c_tilde.coefficient(0).real)
    div = np.exp(2j * np.pi * np.mod(ks * alpha, 1.0)) - 1.0
    nz = ks != 0
    mags = np.abs(div[nz])
    if mags.size:
        i = int(np.argmin(mags))
        kmin_div, dmin = int(ks[nz][i]), float(mags[i])
        active = np.abs(coef[nz]) > 0
        if np.any(mags[active] < SMALL_DIVISOR):
            j = int(np.argmin(np.where(active, mags, np.inf)))
            raise SmallDivisorError(int(ks[nz][j]), float(mags[j]))
    else:
        kmin_div, dmin = 0, float("inf")
    b = np.zeros_like(coef)
    b[nz] = coef[nz] / div[nz]
    bs = FourierSeries(b, c_tilde.kmin)
    w = np.arange(grid) / grid
    res = np.abs(bs(w + alpha) - bs(w) - (c_tilde(w) - c))
    return CohomologicalSolution(bs, c, float(res.max()), dmin, kmin_div)


@dataclass
class ConjugationResult:
    """B(omega + alpha)^{-1} A(omega) B(omega) = [[1, c], [0, 1]] on the test grid."""
    B: tuple[FourierSeries, FourierSeries, FourierSeries, FourierSeries]
    c: float
    residual: float
    det_error: float
    c_tilde: FourierSeries = field(repr=False)
    b: FourierSeries = field(repr=False)
    min_divisor: float = float("nan")
    truncation_converged: bool = True

    def matrix(self, omega) -> np.ndarray:
        w = np.atleast_1d(omega)
        out = np.empty((w.size, 2, 2))
        for idx, s in zip([(0, 0), (0, 1), (1, 0), (1, 1)], self.B):
            out[:, idx[0], idx[1]] = s(w).real
        return out


def _b1(v1: FourierSeries, v2: FourierSeries, w) -> np.ndarray:
    a, b = v1(w).real, v2(w).real
    d = a * a + b * b
    out = np.empty((np.size(w), 2, 2))
    out[:, 0, 0], out[:, 0, 1] = a, -b / d
    out[:, 1, 0], out[:, 1, 1] = b, a / d
    return out


def _inv_unimodular(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[:, 0, 0], out[:, 0, 1] = m[:, 1, 1], -m[:, 0, 1]
    out[:, 1, 0], out[:, 1, 1] = -m[:, 1, 0], m[:, 0, 0]
    return out


def reducibility_conjugate(v: tuple[FourierSeries, FourierSeries], A, alpha: float,
                           grid: int = DEFAULT_GRID) -> ConjugationResult:
    """Conjugate A to a constant unipotent matrix, given v(omega + alpha) = A(omega) v(omega).

    ``A`` maps an array of angles to an array of 2 x 2 matrices.  B1 has
    v as its first column and determinant one; the cohomological equation
    then removes the omega dependence of the remaining (1, 2) entry.
    """
    v1, v2 = v
    w = np.arange(grid) / grid
    a, b = v1(w).real, v2(w).real
    d = a * a + b * b
    if d.min() <= 1e-10:
        raise PreconditionError(f"v nearly vanishes: min |v|^2 = {d.min():.3g}")
    Aw = np.asarray(A(w))
    lhs = np.stack([v1(w + alpha).real, v2(w + alpha).real], axis=1)
    rhs = np.einsum("nij,nj->ni", Aw, np.stack([a, b], axis=1))
    inter = float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.sqrt(d)))))
    if inter > 1e-8:
        raise PreconditionError(f"v is not invariant under A: residual {inter:.3g}")

    def ct(x):
        m = _inv_unimodular(_b1(v1, v2, x + alpha)) @ np.asarray(A(x)) @ _b1(v1, v2, x)
        return m[:, 0, 1]

    c_tilde, conv = fourier_fit(ct)
    # drop the round-off imaginary part of a real function
    c_tilde = c_tilde.real_part()
    sol = cohomological_solve(c_tilde, alpha, grid)
    bb = sol.b.real_part()

    def B_at(x):
        b1 = _b1(v1, v2, x)
        bx = bb(x).real
        out = b1.copy()
        out[:, 0, 1] = b1[:, 0, 0] * bx + b1[:, 0, 1]
        out[:, 1, 1] = b1[:, 1, 0] * bx + b1[:, 1, 1]
        return out

    entries = []
    conv_all = conv
    for i, j in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        s, ok = fourier_fit(lambda x, i=i, j=j: B_at(x)[:, i, j])
        entries.append(s.real_part())
        conv_all = conv_all and ok
    Bw = B_at(w)
    Cmat = np.array([[1.0, sol.c], [0.0, 1.0]])
    conj = _inv_unimodular(B_at(w + alpha)) @ Aw @ Bw
    residual = float(np.max(np.linalg.norm(conj - Cmat, 2, axis=(1, 2))))
    det_err = float(np.max(np.abs(np.linalg.det(Bw) - 1.0)))
    return ConjugationResult(tuple(entries), sol.c, residual, det_err, c_tilde, bb,
                             sol.min_divisor, conv_all)


def dual_cocycle(lam: float, energy: float):
    """A(omega) = [[E/lam - (2/lam) cos 2 pi omega, -1], [1, 0]]."""
    def A(w):
        w = np.atleast_1d(w)
        out = np.zeros((w.size, 2, 2))
        out[:, 0, 0] = energy / lam - (2.0 / lam) * np.cos(2 * np.pi * w)
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        return out
    return A


def bloch_pair(u, alpha: float, part: str = "auto") -> tuple[FourierSeries, FourierSeries]:
    """(f(omega), f(omega - alpha)) with f the real or imaginary part of u-hat.

    For u on [-M, M] solving the lam equation at phase 0 the pair is
    invariant under :func:`dual_cocycle`.  ``part="auto"`` takes whichever
    part carries more weight (an odd u has a purely imaginary u-hat).
    """
    u = np.asarray(u)
    uh = dual_transform(u, u.size // 2)
    re, im = uh.real_part(), uh.imag_part()
    if part == "auto":
        part = "imag" if np.linalg.norm(im.coefficients) > np.linalg.norm(re.coefficients) else "real"
    if part not in ("real", "imag"):
        raise ValueError("part must be 'real', 'imag' or 'auto'")
    f = re if part == "real" else im
    return f, f.shifted(-alpha)


def gap_edge_probe(lam: float, p: int, q: int, alpha: float, energy: float,
                   c: float | None = None) -> dict:
    """Where E/lam sits relative to the band edges of Sigma^{1/lam, p/q}.

    Experiment only: reports the nearest edge, whether it lies within the
    continuity radius for |alpha - p/q|, the side on which the adjacent
    gap opens, and (given c) whether that side agrees with sign(-c).
    """
    if not lam > 1:
        raise PreconditionError("gap_edge_probe needs lam > 1")
    e_dual = energy / lam
    bands = band_set(1.0 / lam, p, q)
    iv = bands.intervals
    edges = iv.ravel()
    k = int(np.argmin(np.abs(edges - e_dual)))
    edge = float(edges[k])
    # even index: left edge of a band, so the gap opens below it
    gap_side = -1 if k % 2 == 0 else 1
    radius = continuity_radius(1.0 / lam, abs(alpha - p / q))
    out = {"lam": lam, "p": p, "q": q, "energy": energy, "dual_energy": e_dual,
           "nearest_edge": edge, "edge_distance": abs(e_dual - edge),
           "continuity_radius": radius, "within_radius": abs(e_dual - edge) <= radius,
           "inside_band": bool(bands.contains(e_dual)), "gap_side": gap_side}
    if c is not None:
        out["c"] = c
        out["side_matches_sign_minus_c"] = bool(c != 0 and gap_side == -math.copysign(1, c))
    return out
