"""Finite Fourier series on the circle T = R/Z."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRUNCATION_RTOL = 1e-12
MAX_K = 4096


@dataclass(frozen=True)
class FourierSeries:
    """sum_k c_k e^{2 pi i k omega} for k = kmin .. kmin + len(c) - 1."""
    coefficients: np.ndarray
    kmin: int = 0

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.complex128).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def centered(cls, coefficients) -> "FourierSeries":
        c = np.asarray(coefficients)
        if c.size % 2 != 1:
            raise ValueError("centered series needs an odd number of coefficients")
        return cls(c, -(c.size // 2))

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.kmin, self.kmin + self.coefficients.size)

    @property
    def K(self) -> int:
        return int(np.max(np.abs(self.ks))) if self.coefficients.size else 0

    def coefficient(self, k: int) -> complex:
        i = k - self.kmin
        return complex(self.coefficients[i]) if 0 <= i < self.coefficients.size else 0.0j

    def __call__(self, omega):
        w = np.asarray(omega, dtype=np.float64)
        phase = np.exp(2j * np.pi * np.multiply.outer(w, self.ks))
        return phase @ self.coefficients

    def shifted(self, alpha: float) -> "FourierSeries":
        """omega -> f(omega + alpha)."""
        return FourierSeries(self.coefficients * np.exp(2j * np.pi * self.ks * alpha), self.kmin)

    def conj(self) -> "FourierSeries":
        """omega -> conj(f(omega))."""
        return FourierSeries(np.conj(self.coefficients[::-1]), -(self.kmin + self.coefficients.size - 1))

    def _aligned(self, other: "FourierSeries"):
        lo = min(self.kmin, other.kmin)
        hi = max(self.ks[-1], other.ks[-1])
        a = np.zeros(hi - lo + 1, dtype=np.complex128)
        b = np.zeros_like(a)
        a[self.kmin - lo:self.kmin - lo + self.coefficients.size] = self.coefficients
        b[other.kmin - lo:other.kmin - lo + other.coefficients.size] = other.coefficients
        return a, b, lo

    def __add__(self, other: "FourierSeries") -> "FourierSeries":
        a, b, lo = self._aligned(other)
        return FourierSeries(a + b, lo)

    def __sub__(self, other: "FourierSeries") -> "FourierSeries":
        a, b, lo = self._aligned(other)
        return FourierSeries(a - b, lo)

    def scaled(self, s: complex) -> "FourierSeries":
        return FourierSeries(self.coefficients * s, self.kmin)

    def real_part(self) -> "FourierSeries":
        return (self + self.conj()).scaled(0.5)

    def imag_part(self) -> "FourierSeries":
        return (self - self.conj()).scaled(-0.5j)

    def reality_defect(self) -> float:
        """max |c_{-k} - conj(c_k)|; zero for a real-valued function."""
        a, b, _ = self._aligned(self.conj())
        return float(np.max(np.abs(a - b))) if a.size else 0.0

    def decay_rate(self, floor: float = 1e-14) -> float:
        """Fitted rate r in |c_k| ~ e^{-r |k|}; nan with fewer than 3 usable terms."""
        a = np.abs(self.coefficients)
        if a.size == 0 or a.max() == 0:
            return float("nan")
        keep = a > floor * a.max()
        k = np.abs(self.ks[keep]).astype(np.float64)
        if np.unique(k).size < 3:
            return float("nan")
        slope = np.polyfit(k, np.log(a[keep]), 1)[0]
        return float(-slope)

    def strip_estimate(self) -> float:
        return self.decay_rate() / (2 * np.pi)


def fourier_from_samples(samples, K: int) -> FourierSeries:
    """Trigonometric interpolant of degree K through samples at j / (2K + 1)."""
    g = np.asarray(samples, dtype=np.complex128)
    N = 2 * K + 1
    if g.shape != (N,):
        raise ValueError(f"need exactly {N} samples for K = {K}")
    c = np.fft.fft(g) / N
    # reorder to k = -K .. K
    return FourierSeries(np.concatenate([c[K + 1:], c[:K + 1]]), -K)


def fourier_fit(func, K0: int = 16, rtol: float = TRUNCATION_RTOL, cap: int = MAX_K):
    """Sample ``func`` with doubling K until the edge coefficients fall below rtol * max.

    Returns ``(series, converged)``; ``converged`` is False when the cap was hit.
    """
    K = K0
    while True:
        N = 2 * K + 1
        s = fourier_from_samples(func(np.arange(N) / N), K)
        a = np.abs(s.coefficients)
        edge = max(a[0], a[-1], a[1], a[-2])
        if edge <= rtol * a.max():
            return s, True
        if K >= cap:
            return s, False
        K = min(2 * K, cap)
