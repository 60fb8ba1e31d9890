"""The almost Mathieu operator: potential, transfer cocycle, finite boxes.

    [H psi](n) = psi(n+1) + psi(n-1) + 2 lam cos(2 pi (omega + n alpha)) psi(n)

Matrices are plain ``(2, 2)`` float arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from . import _kernels

#: relative pivot below which a box is treated as having E in its spectrum
SINGULAR_PIVOT = 1e-13


class SingularRestrictionError(ArithmeticError):
    """E is (numerically) an eigenvalue of the finite restriction."""


def reduce_angle(x):
    return np.mod(x, 1.0)


def frac_mul(n, alpha: float):
    """Fractional part of ``n * alpha`` without losing digits for large ``n``.

    Both factors are split into chunks of at most 26 bits so that every
    partial product is exact in double precision; |n| must be below 2^52.
    """
    n = np.asarray(n, dtype=np.float64)
    n_hi = np.floor(n / 2.0**26) * 2.0**26
    n_lo = n - n_hi
    a1 = math.floor(alpha * 2.0**24) / 2.0**24
    a2 = math.floor((alpha - a1) * 2.0**48) / 2.0**48
    a3 = alpha - a1 - a2
    x = np.zeros_like(n)
    for part in (n_hi, n_lo):
        for chunk in (a1, a2, a3):
            y = part * chunk
            x = x + (y - np.floor(y))
    return x - np.floor(x)


@dataclass(frozen=True)
class Parameters:
    lam: float
    alpha: float
    omega: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"coupling must be positive and finite, got {self.lam}")
        for name in ("alpha", "omega"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, float(val) % 1.0)

    def phase(self, n):
        """omega + n alpha reduced to [0, 1)."""
        return reduce_angle(self.omega + frac_mul(n, self.alpha))

    def shifted(self, n: int) -> "Parameters":
        return Parameters(self.lam, self.alpha, float(self.phase(n)))

    def dual(self) -> "Parameters":
        return Parameters(1.0 / self.lam, self.alpha, self.omega)


def potential(params: Parameters, n):
    """V(n) = 2 lam cos(2 pi (omega + n alpha)); vectorised over ``n``."""
    out = 2.0 * params.lam * np.cos(2.0 * np.pi * params.phase(n))
    return float(out) if np.ndim(out) == 0 else out


def transfer_step(params: Parameters, energy: float, m: int) -> np.ndarray:
    return np.array([[energy - potential(params, m), -1.0], [1.0, 0.0]])


def monodromy(params: Parameters, energy: float, n: int) -> np.ndarray:
    """M_E(n, omega) = T(n) ... T(1) as a raw product.

    Only meaningful while ``||M||`` stays far from overflow, roughly
    ``n * gamma(E) < 700``; use :func:`monodromy_renormalized` beyond that.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    m = np.eye(2)
    for k in range(1, n + 1):
        m = transfer_step(params, energy, k) @ m
    return m


def monodromy_renormalized(params: Parameters, energy: float, n: int,
                           cadence: int = 64) -> tuple[np.ndarray, float]:
    """Return ``(R, s)`` with ``M_E(n, omega) = exp(s) * R`` and ``max|R_ij| = 1``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.eye(2), 0.0
    a, b, c, d, s = _kernels.monodromy_renorm(float(energy), params.lam, params.alpha,
                                              params.omega, int(n), int(cadence))
    return np.array([[a, b], [c, d]]), s


def solve_forward(params: Parameters, energy: float, u0: float, u1: float,
                  n_max: int) -> np.ndarray:
    """u(0..n_max) for the eigenvalue equation started from u(0), u(1)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    v = potential(params, np.arange(n_max + 1))
    u = np.empty(n_max + 1)
    u[0], u[1] = u0, u1
    for n in range(1, n_max):
        u[n + 1] = (energy - v[n]) * u[n] - u[n - 1]
    return u


def determinant_poly(params: Parameters, energy: float, k: int) -> float:
    """P_k(omega, E) = det (H - E) restricted to [0, k-1]."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    v = potential(params, np.arange(max(k, 1)))
    p_prev, p = 0.0, 1.0
    for j in range(k):
        p_prev, p = p, (v[j] - energy) * p - p_prev
    return p


def transfer_from_determinants(params: Parameters, energy: float, k: int) -> np.ndarray:
    """M_E(k, omega) assembled from determinants of boxes starting at sites 1 and 2.

    With D_j(theta) = det (E - H)_[0, j-1] = (-1)^j P_j(theta, E):

        M_E(k, omega) = [[ D_k(omega + a),   -D_{k-1}(omega + 2a)],
                         [ D_{k-1}(omega + a), -D_{k-2}(omega + 2a)]]

    with D_0 = 1 and D_{-1} = 0.
    """
    def d(shift, j):
        if j < 0:
            return 0.0
        return (-1) ** j * determinant_poly(params.shifted(shift), energy, j)

    return np.array([[d(1, k), -d(2, k - 1)], [d(1, k - 1), -d(2, k - 2)]])


@dataclass(frozen=True)
class FiniteRestriction:
    """H restricted to the integer interval [n1, n2] (Dirichlet truncation)."""
    n1: int
    n2: int
    diagonal: np.ndarray = field(repr=False)
    params: Parameters | None = None

    def __post_init__(self):
        if self.n2 < self.n1:
            raise ValueError("empty interval")
        diag = np.array(self.diagonal, dtype=np.float64)
        if diag.shape != (self.n2 - self.n1 + 1,):
            raise ValueError("diagonal length does not match the interval")
        diag.setflags(write=False)
        object.__setattr__(self, "diagonal", diag)

    @classmethod
    def from_params(cls, params: Parameters, n1: int, n2: int) -> "FiniteRestriction":
        return cls(n1, n2, potential(params, np.arange(n1, n2 + 1)), params)

    @property
    def size(self) -> int:
        return self.n2 - self.n1 + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n1, self.n2 + 1)

    def dense(self) -> np.ndarray:
        return (np.diag(self.diagonal) + np.diag(np.ones(self.size - 1), 1)
                + np.diag(np.ones(self.size - 1), -1))

    def norm_bound(self) -> float:
        return float(np.max(np.abs(self.diagonal))) + 2.0

    def resolvent_solve(self, energy: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (H_[n1,n2] - E) x = rhs by banded LU with partial pivoting."""
        n = self.size
        d = self.diagonal - energy
        if n <= 2:
            # the LAPACK wrapper mis-sizes its workspace below n = 3
            m = np.diag(d) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
            scale = max(float(np.max(np.abs(m))), 1e-300)
            if abs(np.linalg.det(m)) < SINGULAR_PIVOT * scale ** n:
                raise SingularRestrictionError(f"E={energy!r} is an eigenvalue of H_[{self.n1},{self.n2}]")
            return np.linalg.solve(m, np.asarray(rhs, dtype=np.float64))
        off = np.ones(n - 1)
        dl, dd, du, du2, ipiv, info = lapack.dgttrf(off, d, off)
        scale = max(float(np.max(np.abs(d))), 2.0 if n > 1 else 0.0, 1e-300)
        if info > 0 or np.min(np.abs(dd)) < SINGULAR_PIVOT * scale:
            raise SingularRestrictionError(
                f"E={energy!r} is an eigenvalue of H_[{self.n1},{self.n2}] "
                f"to relative pivot {SINGULAR_PIVOT:g}")
        x, info = lapack.dgttrs(dl, dd, du, du2, ipiv, np.asarray(rhs, dtype=np.float64))
        if info != 0:
            raise RuntimeError(f"dgttrs failed with info={info}")
        return x


def green_function(restriction: FiniteRestriction, energy: float, n: int, m: int) -> float:
    """G_[n1,n2](n, m; E) = <delta_n, (H_[n1,n2] - E)^{-1} delta_m>."""
    r = restriction
    if not (r.n1 <= n <= r.n2 and r.n1 <= m <= r.n2):
        raise ValueError("sites outside the restriction")
    rhs = np.zeros(r.size)
    rhs[m - r.n1] = 1.0
    return float(r.resolvent_solve(energy, rhs)[n - r.n1])


def green_cramer(params: Parameters, energy: float, n1: int, k: int, n: int) -> tuple[float, float]:
    """|G(n1, n)| and |G(n, n2)| from determinant ratios (small k only)."""
    n2 = n1 + k - 1
    pk = determinant_poly(params.shifted(n1), energy, k)
    left = determinant_poly(params.shifted(n + 1), energy, n2 - n)
    right = determinant_poly(params.shifted(n1), energy, n - n1)
    return abs(left / pk), abs(right / pk)


@dataclass
class Regularity:
    regular: bool
    window: tuple[int, int] | None = None
    green: tuple[float, float] | None = None
    skipped: list[tuple[int, int]] = field(default_factory=list)
    reason: str = ""


def admissible_windows(k: int, n: int) -> list[tuple[int, int]]:
    """Windows [n1, n1+k-1] containing n with both edges farther than k/5.

    Ordered by distance of the window centre from n, then by n1.
    """
    wins = []
    for n1 in range(n - k + 1, n + 1):
        n2 = n1 + k - 1
        if 5 * (n - n1) > k and 5 * (n2 - n) > k:
            wins.append((n1, n2))
    wins.sort(key=lambda w: (abs(2 * n - w[0] - w[1]), w[0]))
    return wins


def classify_regular(params: Parameters, energy: float, gamma: float, k: int, n: int) -> Regularity:
    """Decide whether site ``n`` is (gamma, k)-regular at energy E.

    The first admissible window (closest to centred) whose Green's function
    decays faster than ``exp(-gamma |n - n_i|)`` to both edges wins.
    """
    if gamma <= 0 or k < 5:
        raise ValueError("need gamma > 0 and k >= 5")
    wins = admissible_windows(k, n)
    if not wins:
        return Regularity(False, reason="no admissible window")
    skipped = []
    for n1, n2 in wins:
        r = FiniteRestriction.from_params(params, n1, n2)
        rhs = np.zeros(k)
        rhs[n - n1] = 1.0
        try:
            col = r.resolvent_solve(energy, rhs)
        except SingularRestrictionError:
            skipped.append((n1, n2))
            continue
        g1, g2 = abs(col[0]), abs(col[-1])
        if g1 < math.exp(-gamma * (n - n1)) and g2 < math.exp(-gamma * (n2 - n)):
            return Regularity(True, (n1, n2), (g1, g2), skipped)
    return Regularity(False, skipped=skipped, reason="no window with decaying Green's function")
