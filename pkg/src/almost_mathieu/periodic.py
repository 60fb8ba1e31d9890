"""Band structure of the almost Mathieu operator at rational frequency p/q.

For alpha = p/q the trace of the q-step monodromy splits as

    tr M_E(q, omega) = h(E) - A cos(2 pi q omega + phi),   A = 2 lam^q,

with h a monic degree-q polynomial independent of omega.  The union of
spectra over omega is then {E : |h(E)| <= 2 + A}.  Phases are handled as
exact integers mod q so the potential at site m is cos(2 pi k / (4q)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MERGE_SEPARATION = 1e-11
EDGE_TOL = 1e-12


class DecompositionError(RuntimeError):
    """The trace did not split into an omega-free part plus one harmonic."""


def _check_pq(p: int, q: int):
    if q < 1 or p < 0 or math.gcd(p, q) != 1:
        raise ValueError(f"need q >= 1 and gcd(p, q) = 1, got {p}/{q}")


def _quarter_potentials(lam: float, p: int, q: int, j: int) -> np.ndarray:
    """V(1..q) at omega = j / (4q), computed from exact integer phases."""
    m = np.arange(1, q + 1, dtype=np.int64)
    k = (j + 4 * ((m * p) % q)) % (4 * q)
    return 2.0 * lam * np.cos(2.0 * np.pi * k / (4 * q))


def _roundoff(energies: np.ndarray, pots: np.ndarray) -> np.ndarray:
    """Forward error bound for a q-step transfer-product trace."""
    growth = np.sum(np.log1p(np.abs(energies[:, None] - pots[None, :])), axis=1)
    with np.errstate(over="ignore"):
        return 4 * pots.size * np.finfo(float).eps * np.exp(growth)


def _potentials_at(lam: float, p: int, q: int, omega: float) -> np.ndarray:
    m = np.arange(1, q + 1, dtype=np.int64)
    return 2.0 * lam * np.cos(2.0 * np.pi * (omega + ((m * p) % q) / q))


@dataclass(frozen=True)
class Discriminant:
    lam: float
    p: int
    q: int
    amplitude: float
    phase_offset: float
    _pots: np.ndarray = field(repr=False, compare=False)

    def h(self, energies):
        """The omega-free part of the trace, vectorised over energies."""
        e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
        out = _kernels.traces(np.ascontiguousarray(e), self._pots)
        return float(out[0]) if np.ndim(energies) == 0 else out

    def h_and_slope(self, energies) -> tuple[np.ndarray, np.ndarray]:
        e = np.ascontiguousarray(np.atleast_1d(energies), dtype=np.float64)
        return _kernels.traces_and_slopes(e, self._pots)

    def trace(self, energies, omega: float):
        e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
        out = _kernels.traces(np.ascontiguousarray(e), _potentials_at(self.lam, self.p, self.q, omega))
        return float(out[0]) if np.ndim(energies) == 0 else out

    @property
    def band_level(self) -> float:
        return 2.0 + self.amplitude


def discriminant_decompose(lam: float, p: int, q: int, n_test: int = 33,
                           rng_seed: int = 0) -> Discriminant:
    """Split tr M_E(q, omega) into h(E) - A cos(2 pi q omega + phi).

    h is the mean of the trace over omega_j = j/(4q) and A e^{i phi} comes
    from the Fourier coefficient at harmonic q.  The split is validated on
    a grid of energies and on random off-grid phases.
    """
    _check_pq(p, q)
    if not lam > 0:
        raise ValueError("coupling must be positive")
    R = 2.0 + 2.0 * lam
    e = R * np.cos(np.pi * (np.arange(n_test) + 0.5) / n_test)
    n_ph = 4 * q
    tr = np.empty((n_test, n_ph))
    for j in range(n_ph):
        tr[:, j] = _kernels.traces(e, _quarter_potentials(lam, p, q, j))
    h_mean = tr.mean(axis=1)
    # e^{-2 pi i q (j / 4q)} = (-i)^j
    ph = (-1j) ** np.arange(n_ph)
    cq = (tr * ph).mean(axis=1)
    # harmonic q is E-independent; read it where h is smallest (least roundoff)
    k = int(np.argmin(np.abs(h_mean)))
    amp = 2.0 * abs(cq[k])
    noise = 1e-9 * (1.0 + np.max(np.abs(h_mean)))
    if np.max(np.abs(cq.imag)) > noise:
        raise DecompositionError(f"phase offset is not 0 or pi for {p}/{q}")
    snapped = 0.0 if -cq[k].real > 0 else math.pi
    disc = Discriminant(float(lam), p, q, amp, snapped, _quarter_potentials(lam, p, q, 1))

    # tolerance: 1e-9 relative plus the roundoff of the products involved
    base_noise = _roundoff(e, disc._pots)
    scale = 1e-9 * (1.0 + np.abs(h_mean) + amp)
    bad = np.abs(disc.h(e) - h_mean) > scale + 2 * base_noise
    rng = np.random.default_rng(rng_seed)
    for w in np.concatenate([np.arange(n_ph) / n_ph, rng.random(8)]):
        model = h_mean - amp * np.cos(2 * np.pi * q * w + snapped)
        noise = base_noise + _roundoff(e, _potentials_at(lam, p, q, w))
        bad |= np.abs(disc.trace(e, w) - model) > scale + noise
    if np.any(bad):
        raise DecompositionError(f"trace split fails at {int(bad.sum())} energies for lam={lam}, {p}/{q}")
    return disc


@dataclass(frozen=True)
class BandSet:
    """Sorted, disjoint closed intervals; ``n_closed`` counts merged touching bands."""
    intervals: np.ndarray
    provenance: dict = field(default_factory=dict)
    n_closed: int = 0

    def __post_init__(self):
        iv = np.array(self.intervals, dtype=np.float64).reshape(-1, 2)
        if np.any(iv[:, 0] > iv[:, 1]):
            raise ValueError("interval with left > right")
        if np.any(iv[1:, 0] <= iv[:-1, 1]):
            raise ValueError("intervals must be sorted and strictly disjoint")
        iv.setflags(write=False)
        object.__setattr__(self, "intervals", iv)

    def __len__(self):
        return self.intervals.shape[0]

    @property
    def edges(self) -> np.ndarray:
        return self.intervals.ravel()

    def scaled(self, c: float) -> "BandSet":
        iv = self.intervals * c
        if c < 0:
            iv = iv[::-1, ::-1]
        return BandSet(iv, dict(self.provenance, scaled_by=c), self.n_closed)

    def contains(self, energies) -> np.ndarray:
        e = np.asarray(energies, dtype=np.float64)
        i = np.searchsorted(self.intervals[:, 0], e, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, None)
        return ok & (e <= self.intervals[ic, 1])


def union_intervals(intervals, tol: float = 0.0) -> np.ndarray:
    """Sorted union of closed intervals; pieces closer than ``tol`` are joined."""
    iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    if iv.size == 0:
        return iv
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    out = [iv[0].copy()]
    for l, r in iv[1:]:
        if l <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], r)
        else:
            out.append(np.array([l, r]))
    return np.array(out)


def _floquet_matrix(potentials: np.ndarray, sign: float) -> np.ndarray:
    """Real periodic (sign=+1) or antiperiodic (sign=-1) Jacobi matrix."""
    q = potentials.size
    h = np.diag(potentials.astype(np.float64))
    for j in range(q):
        k = (j + 1) % q
        t = sign if j == q - 1 else 1.0
        h[j, k] += t
        h[k, j] += t
    return h


def band_edges(disc: Discriminant) -> tuple[np.ndarray, np.ndarray]:
    """Roots of h = level and h = -level, each a sorted array of q energies.

    At a phase where the harmonic term equals -A the trace is h - A, so
    h = 2 + A exactly where the q-step problem has a periodic solution;
    likewise h = -(2 + A) at the antipodal phase with an antiperiodic one.
    Both are symmetric eigenproblems.
    """
    q, p, lam = disc.q, disc.p, disc.lam
    w_top = -disc.phase_offset / (2 * math.pi * q)  # cos(2 pi q w + phi) = 1
    w_bot = w_top + 0.5 / q
    m = np.arange(1, q + 1, dtype=np.int64)
    shift = (m * p) % q
    v_top = 2.0 * lam * np.cos(2.0 * np.pi * (w_top + shift / q))
    v_bot = 2.0 * lam * np.cos(2.0 * np.pi * (w_bot + shift / q))
    if q == 1:
        # 1 x 1 Floquet problem: V + 2 cos(theta)
        return v_top + 2.0, v_bot - 2.0
    top = np.linalg.eigvalsh(_floquet_matrix(v_top, 1.0))
    bot = np.linalg.eigvalsh(_floquet_matrix(v_bot, -1.0))
    return top, bot


def band_set(lam: float, p: int, q: int, method: str = "discriminant",
             disc: Discriminant | None = None) -> BandSet:
    """Sigma^{lam, p/q} as a union of at most q closed bands.

    ``method="oracle"`` routes through :func:`brute_force_band_set` instead.
    """
    if method == "oracle":
        return brute_force_band_set(lam, p, q)
    if method != "discriminant":
        raise ValueError(f"unknown method {method!r}")
    if disc is None:
        disc = discriminant_decompose(lam, p, q)
    level = disc.band_level
    top, bot = band_edges(disc)
    edges = np.sort(np.concatenate([top, bot]))
    # consistency: edges on the level set up to a forward roundoff bound for
    # the transfer product, and every band interior inside it
    hv = disc.h(edges)
    noise = _roundoff(edges, disc._pots)
    mids = 0.5 * (edges[0::2] + edges[1::2])
    off_level = np.abs(np.abs(hv) - level) > 1e-9 * level + noise
    outside = np.abs(disc.h(mids)) > level + noise[0::2] + noise[1::2]
    if np.any(off_level) or np.any(outside):
        raise RuntimeError(f"band edges inconsistent with the discriminant (lam={lam}, {p}/{q})")
    iv = edges.reshape(q, 2)
    merged = [iv[0].copy()]
    n_closed = 0
    for i in range(1, q):
        if iv[i, 0] - merged[-1][1] < MERGE_SEPARATION:
            merged[-1][1] = iv[i, 1]
            n_closed += 1
        else:
            merged.append(iv[i].copy())
    prov = {"lam": float(lam), "p": int(p), "q": int(q), "method": "discriminant"}
    return BandSet(np.array(merged), prov, n_closed)


def gaps(bands: BandSet) -> np.ndarray:
    """Bounded open gaps as rows (left, right, length)."""
    if len(bands) == 0:
        raise ValueError("empty band set")
    iv = bands.intervals
    l, r = iv[:-1, 1], iv[1:, 0]
    return np.column_stack([l, r, r - l])


def measure(bands: BandSet) -> float:
    iv = bands.intervals
    return float(np.sum(iv[:, 1] - iv[:, 0]))


def _directed(a: np.ndarray, b: np.ndarray) -> float:
    """sup over x in A of dist(x, B) for sorted disjoint interval arrays."""
    pts = [a.ravel()]
    if b.shape[0] > 1:
        mids = 0.5 * (b[:-1, 1] + b[1:, 0])
        i = np.searchsorted(a[:, 0], mids, side="right") - 1
        ok = (i >= 0) & (mids <= a[np.clip(i, 0, None), 1])
        pts.append(mids[ok])
    x = np.concatenate(pts)
    j = np.searchsorted(b[:, 0], x, side="right") - 1
    jc = np.clip(j, 0, None)
    inside = (j >= 0) & (x <= b[jc, 1])
    left_gap = np.where(j >= 0, x - b[jc, 1], np.inf)
    jn = np.clip(j + 1, 0, b.shape[0] - 1)
    right_gap = np.where(j + 1 < b.shape[0], b[jn, 0] - x, np.inf)
    d = np.where(inside, 0.0, np.minimum(left_gap, right_gap))
    return float(np.max(d))


def hausdorff_distance(a: BandSet, b: BandSet) -> float:
    """Exact Hausdorff distance between two finite unions of closed intervals."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both band sets must be nonempty")
    return max(_directed(a.intervals, b.intervals), _directed(b.intervals, a.intervals))


def duality_scale_check(lam: float, p: int, q: int) -> dict:
    """Hausdorff distance between Sigma^{lam, p/q} and lam * Sigma^{1/lam, p/q}."""
    direct = band_set(lam, p, q)
    dual = band_set(1.0 / lam, p, q).scaled(lam)
    return {"lam": lam, "p": p, "q": q, "distance": hausdorff_distance(direct, dual),
            "n_bands": [len(direct), len(dual)]}


def bloch_matrix(potentials: np.ndarray, theta: float) -> np.ndarray:
    """Periodic Jacobi matrix with unit hopping and Bloch phase e^{i theta} at the seam."""
    q = potentials.size
    h = np.diag(potentials.astype(np.complex128))
    for j in range(q):
        k = (j + 1) % q
        t = np.exp(1j * theta) if j == q - 1 else 1.0
        h[j, k] += t
        h[k, j] += np.conj(t)
    return h


def brute_force_band_set(lam: float, p: int, q: int, n_omega: int = 64,
                         n_theta: int = 33) -> BandSet:
    """Union over an omega grid of the Bloch-phase band functions.

    Independent of the discriminant: band i is swept by the i-th eigenvalue
    of the q x q Bloch matrix as theta runs over [0, pi] and omega over the
    circle.  Eigenvalues move continuously, so that sweep is one interval
    spanned by its extremes on the grid.
    """
    _check_pq(p, q)
    thetas = np.linspace(0.0, np.pi, n_theta)
    lo = np.full(q, np.inf)
    hi = np.full(q, -np.inf)
    for j in range(n_omega):
        w = j / n_omega
        v = 2.0 * lam * np.cos(2.0 * np.pi * (w + ((np.arange(q) * p) % q) / q))
        ev = np.array([np.linalg.eigvalsh(bloch_matrix(v, t)) for t in thetas])
        lo = np.minimum(lo, ev.min(axis=0))
        hi = np.maximum(hi, ev.max(axis=0))
    iv = union_intervals(np.column_stack([lo, hi]), tol=MERGE_SEPARATION)
    return BandSet(iv, {"lam": float(lam), "p": int(p), "q": int(q), "method": "oracle",
                        "n_omega": n_omega, "n_theta": n_theta})
