"""Lyapunov exponent estimators and the Herman subharmonicity check."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Parameters, frac_mul

CADENCE = 64
HERMAN_MAX_STEPS = 200


@dataclass(frozen=True)
class LyapunovEstimate:
    """gamma estimate in nats per step.

    ``stderr`` is an empirical spread: the standard deviation of per-phase
    estimates (phase average) or of per-block estimates along the orbit.
    No finite-n error theory is implied.
    """
    value: float
    n_steps: int
    method: str
    stderr: float

    def __post_init__(self):
        if self.value < -1e-6:
            raise ValueError(f"negative Lyapunov estimate {self.value}")


def _checkpoints(energies, omegas, lam, alpha, n, n_blocks=1):
    e = np.ascontiguousarray(np.atleast_1d(energies), dtype=np.float64)
    w = np.ascontiguousarray(np.atleast_1d(omegas), dtype=np.float64)
    return _kernels.log_norm_checkpoints(e, w, float(lam), float(alpha), int(n),
                                         int(n_blocks), CADENCE)


def lyapunov_orbit(params: Parameters, energy: float, n: int, n_blocks: int = 16) -> LyapunovEstimate:
    """(1/n) log ||M_E(n, omega)|| along a single orbit.

    The spread is taken over ``n_blocks`` consecutive blocks of the same
    orbit, each restarted from the identity.
    """
    if n < 1000:
        raise ValueError("orbit estimate needs n >= 1000")
    full = _checkpoints(energy, params.omega, params.lam, params.alpha, n)[0, 0, 0]
    L = n // n_blocks
    starts = np.mod(params.omega + frac_mul(np.arange(n_blocks) * L, params.alpha), 1.0)
    blocks = _checkpoints(energy, starts, params.lam, params.alpha, L)[0, :, 0] / L
    return LyapunovEstimate(float(full / n), n, "orbit",
                            float(np.std(blocks, ddof=1) / math.sqrt(n_blocks)))


def _phase_grid(grid: int) -> np.ndarray:
    return np.arange(grid) / grid


def lyapunov_phase_average_many(lam: float, alpha: float, energies, n: int, grid: int,
                                threads: int = 1) -> list[LyapunovEstimate]:
    """Phase averages for several energies; work is split over energies."""
    if grid < 64:
        raise ValueError("grid must be >= 64")
    if n < 1:
        raise ValueError("n must be >= 1")
    energies = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    w = _phase_grid(grid)
    if threads > 1 and energies.size > 1:
        chunks = np.array_split(energies, min(threads, energies.size))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _checkpoints(c, w, lam, alpha, n), chunks))
        logs = np.concatenate(parts, axis=0)[:, :, 0]
    else:
        logs = _checkpoints(energies, w, lam, alpha, n)[:, :, 0]
    per = logs / n
    # np.sum reduces pairwise, so the mean is order-stable
    means = np.sum(per, axis=1) / grid
    spread = np.std(per, axis=1, ddof=1)
    return [LyapunovEstimate(float(m), n, "phase_average", float(s)) for m, s in zip(means, spread)]


def lyapunov_phase_average(lam: float, alpha: float, energy: float, n: int,
                           grid: int) -> LyapunovEstimate:
    """Mean of (1/n) log ||M_E(n, j/grid)|| over the phase grid.

    Since gamma is the infimum over n of the phase integral, this is an
    upper bound on gamma(E) up to quadrature error.
    """
    return lyapunov_phase_average_many(lam, alpha, [energy], n, grid)[0]


def _unit_transfer_products(lam: float, alpha: float, energy: float, n: int, w) -> np.ndarray:
    """N_n(w) = prod_{m=n..1} w T_E(m) for an array of points w.

    With c_m = e^{2 pi i m alpha} and w = e^{2 pi i omega},
    w T(m) = [[E w - lam (c_m w^2 + conj(c_m)), -w], [w, 0]], a polynomial
    in w that also makes sense at w = 0.
    """
    w = np.atleast_1d(np.asarray(w, dtype=np.complex128))
    out = np.zeros((w.size, 2, 2), dtype=np.complex128)
    out[:, 0, 0] = out[:, 1, 1] = 1.0
    step = np.zeros_like(out)
    for m in range(1, n + 1):
        c = np.exp(2j * np.pi * frac_mul(m, alpha))
        step[:, 0, 0] = energy * w - lam * (c * w * w + np.conj(c))
        step[:, 0, 1] = -w
        step[:, 1, 0] = w
        out = step @ out
    return out


def _real_products(lam: float, alpha: float, energy: float, n: int, omegas) -> np.ndarray:
    out = np.zeros((omegas.size, 2, 2))
    out[:, 0, 0] = out[:, 1, 1] = 1.0
    step = np.zeros_like(out)
    step[:, 0, 1], step[:, 1, 0] = -1.0, 1.0
    for m in range(1, n + 1):
        step[:, 0, 0] = energy - 2.0 * lam * np.cos(2.0 * np.pi * (omegas + frac_mul(m, alpha)))
        out = step @ out
    return out


def herman_subharmonic_check(lam: float, alpha: float, energy: float, n: int, grid: int) -> dict:
    """Both sides of  mean_omega log ||N_n(e^{2 pi i omega})|| >= log ||N_n(0)|| = n log lam.

    Also checks ||N_n(e^{2 pi i omega})|| = ||M_E(n, omega)|| at every sample.
    """
    if n > HERMAN_MAX_STEPS:
        raise ValueError(f"raw products are capped at n = {HERMAN_MAX_STEPS}")
    if n < 1 or grid < 1:
        raise ValueError("need n >= 1 and grid >= 1")
    omegas = _phase_grid(grid)
    norm_n = np.linalg.norm(_unit_transfer_products(lam, alpha, energy, n,
                                                    np.exp(2j * np.pi * omegas)), 2, axis=(1, 2))
    norm_m = np.linalg.norm(_real_products(lam, alpha, energy, n, omegas), 2, axis=(1, 2))
    at_zero = np.linalg.norm(_unit_transfer_products(lam, alpha, energy, n, 0.0)[0], 2)
    lhs = float(np.sum(np.log(norm_n)) / grid)
    rhs = n * math.log(lam)
    return {"lam": lam, "alpha": alpha, "energy": energy, "n": n, "grid": grid,
            "lhs": lhs, "rhs": rhs, "margin": lhs - rhs,
            "log_norm_at_zero": float(math.log(at_zero)),
            "norm_identity_max_rel_error": float(np.max(np.abs(norm_n - norm_m) / norm_m))}
