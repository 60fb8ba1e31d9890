"""Self-verification suite behind the ``verify`` subcommand.

Checks are either ``hard`` (exact identities and inequalities; any failure
means the build is wrong) or ``statistical`` (finite-size estimates whose
tolerance could in principle be missed by an unlucky choice of sizes).
"""
from __future__ import annotations

import math
import time
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import __version__, core
from .approximation import butterfly_dataset, continuity_radius
from .core import FiniteRestriction, Parameters
from .duality import (bloch_pair, cohomological_solve, dual_cocycle, dual_solution,
                      reducibility_conjugate)
from .fourier import FourierSeries, fourier_fit
from .localization import eigenpairs, gordon_inequality_check
from .lyapunov import lyapunov_orbit, lyapunov_phase_average_many
from .periodic import (band_set, brute_force_band_set, duality_scale_check, gaps,
                       hausdorff_distance, measure)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FIBONACCI = [(1, 2), (2, 3), (3, 5), (5, 8), (8, 13), (13, 21), (21, 34), (34, 55),
             (55, 89), (89, 144), (144, 233)]
MUTATIONS = ("flip-transfer-sign",)

PROFILES = {
    "quick": {"random_trials": 100, "gordon_trials": 200, "herman_energies": 20, "herman_steps": 2000,
              "spectrum_energies": 8, "spectrum_steps": 20000, "q_max": 12, "butterfly_q": 20,
              "eigenpairs": 6, "oracle_q": 6},
    "full": {"random_trials": 500, "gordon_trials": 1000, "herman_energies": 50, "herman_steps": 10000,
             "spectrum_energies": 20, "spectrum_steps": 100000, "q_max": 20, "butterfly_q": 50,
             "eigenpairs": 10, "oracle_q": 8},
}

TOLERANCES = {
    "identity_rel": 1e-8, "gordon_slack": 1e-10, "herman_slack": 0.02, "spectrum_gamma": 0.05,
    "gap_length_slack": 1e-12, "duality_scale": 1e-9, "decay_rel": 0.15, "decay_r2": 0.9,
    "dual_residual_rel": 1e-6, "cohomological": 1e-9, "recover_c": 1e-8, "symmetry": 1e-9,
    "oracle_hausdorff": 1e-3,
}


@dataclass
class CheckResult:
    name: str
    kind: str  # "hard" or "statistical"
    passed: bool
    seconds: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "passed": self.passed,
                "seconds": round(self.seconds, 3), "detail": _jsonable(self.detail)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def sub_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one named check, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), zlib.crc32(name.encode())]))


@contextmanager
def mutation(name: str | None):
    """Temporarily corrupt the cocycle so that identity checks must fail."""
    if name is None:
        yield
        return
    if name != "flip-transfer-sign":
        raise ValueError(f"unknown mutation {name!r}")
    original = core.transfer_step

    def flipped(params, energy, m):
        return np.array([[energy + core.potential(params, m), -1.0], [1.0, 0.0]])

    core.transfer_step = flipped
    try:
        yield
    finally:
        core.transfer_step = original


# individual checks -------------------------------------------------------

def check_determinant_identity(cfg, seed):
    rng = sub_rng(seed, "determinant_identity")
    worst = 0.0
    for _ in range(cfg["random_trials"]):
        p = Parameters(rng.uniform(0.1, 4.0), rng.random(), rng.random())
        e = rng.uniform(-2 - 2 * p.lam, 2 + 2 * p.lam)
        k = int(rng.integers(1, 21))
        direct = core.monodromy(p, e, k)
        via_det = core.transfer_from_determinants(p, e, k)
        worst = max(worst, float(np.max(np.abs(direct - via_det)) / np.max(np.abs(direct))))
    return worst < TOLERANCES["identity_rel"], {"trials": cfg["random_trials"], "max_rel_error": worst}


def check_green_boundary(cfg, seed):
    rng = sub_rng(seed, "green_boundary")
    worst = 0.0
    for _ in range(cfg["random_trials"]):
        p = Parameters(rng.uniform(0.1, 4.0), rng.random(), rng.random())
        e = rng.uniform(-2 - 2 * p.lam, 2 + 2 * p.lam)
        n1 = int(rng.integers(1, 10))
        n2 = n1 + int(rng.integers(0, 20))
        u = core.solve_forward(p, e, *rng.standard_normal(2), n2 + 1)
        r = FiniteRestriction.from_params(p, n1, n2)
        try:
            g1 = r.resolvent_solve(e, np.eye(r.size)[0])
            g2 = r.resolvent_solve(e, np.eye(r.size)[-1])
        except core.SingularRestrictionError:
            continue
        pred = -g1 * u[n1 - 1] - g2 * u[n2 + 1]
        worst = max(worst, float(np.max(np.abs(pred - u[n1:n2 + 1])) / np.max(np.abs(u[n1 - 1:n2 + 2]))))
    return worst < TOLERANCES["identity_rel"], {"trials": cfg["random_trials"], "max_rel_error": worst}


def check_gordon(cfg, seed):
    rng = sub_rng(seed, "gordon")
    branches = {"trace_le_1": 0, "trace_gt_1": 0}
    worst = math.inf
    violations = 0
    for _ in range(cfg["gordon_trials"]):
        p = int(rng.integers(1, 21))
        period = rng.uniform(-3, 3, p)
        e = rng.uniform(-5, 5)
        try:
            rep = gordon_inequality_check(period, e, *rng.standard_normal(2))
        except AssertionError:
            violations += 1
            continue
        branches[rep["branch"]] += 1
        if rep["ratio"] is not None:
            worst = min(worst, rep["ratio"])
    return violations == 0, {"trials": cfg["gordon_trials"], "violations": violations,
                             "min_ratio": worst, "branches": branches}


def check_herman(cfg, seed):
    margins = {}
    for lam in (1.5, 2.0, 4.0):
        R = 2 + 2 * lam
        es = np.linspace(-R, R, cfg["herman_energies"])
        est = lyapunov_phase_average_many(lam, GOLDEN, es, cfg["herman_steps"], 256)
        margins[lam] = min(g.value for g in est) - math.log(lam)
    worst = min(margins.values())
    return worst >= -TOLERANCES["herman_slack"], {"min_margin_by_lambda": margins, "min_margin": worst}


def check_spectrum_lyapunov(cfg, seed):
    bands = band_set(2.0, 55, 89).intervals
    # midpoints of the widest bands, which lie in the spectrum
    widths = bands[:, 1] - bands[:, 0]
    pick = np.sort(np.argsort(widths)[::-1][:cfg["spectrum_energies"]])
    es = bands[pick].mean(axis=1)
    errs = [abs(lyapunov_orbit(Parameters(2.0, GOLDEN, 0.0), float(e), cfg["spectrum_steps"]).value
                - math.log(2.0)) for e in es]
    return max(errs) <= TOLERANCES["spectrum_gamma"], {"energies": len(es), "max_error": max(errs)}


def check_gaps(cfg, seed):
    bad_count, bad_len, bad_prox = [], [], []
    for lam in (0.5, 1.0):
        for q in range(1, cfg["q_max"] + 1):
            m = (q - 1) // 2
            for p in range(q + 1):
                if math.gcd(p, q) != 1:
                    continue
                bs = band_set(lam, p, q)
                g = gaps(bs)
                if len(g) != 2 * m:
                    bad_count.append((lam, p, q))
                if len(g) and np.min(g[:, 2]) < lam ** m * 8.0 ** -q - TOLERANCES["gap_length_slack"]:
                    bad_len.append((lam, p, q))
                if len(g) > 1 and np.max(gap_neighbour_distance(g)) > 8 * math.pi / q:
                    bad_prox.append((lam, p, q))
    ok = not (bad_count or bad_len or bad_prox)
    return ok, {"count_failures": bad_count, "length_failures": bad_len, "proximity_failures": bad_prox}


def gap_neighbour_distance(g: np.ndarray) -> np.ndarray:
    """For each gap (rows l, r, len) the distance to the nearest other gap."""
    sep = g[1:, 0] - g[:-1, 1]
    left = np.concatenate([[np.inf], sep])
    right = np.concatenate([sep, [np.inf]])
    return np.minimum(left, right)


def check_continuity(cfg, seed):
    worst = math.inf
    for lam in (0.5, 1.0):
        prev = None
        for p, q in FIBONACCI:
            bs = band_set(lam, p, q)
            if prev is not None:
                d = hausdorff_distance(prev[1], bs)
                bound = continuity_radius(lam, abs(prev[0] - p / q))
                worst = min(worst, bound - d)
            prev = (p / q, bs)
    return worst >= 0, {"min_slack": worst}


def check_duality_scale(cfg, seed):
    worst = max(duality_scale_check(lam, p, q)["distance"]
                for lam in (2.0, 3.0) for p, q in ((3, 5), (5, 8), (8, 13)))
    return worst < TOLERANCES["duality_scale"], {"max_distance": worst}


def check_localization(cfg, seed):
    r = FiniteRestriction.from_params(Parameters(3.0, GOLDEN, 0.1234), -1000, 1000)
    pairs = [p for p in eigenpairs(r, (-1.0, 1.0)) if abs(p.center) < 500 and p.converged]
    pairs = sorted(pairs, key=lambda p: abs(p.energy))[:cfg["eigenpairs"]]
    rel = [abs(p.decay_rate / math.log(3.0) - 1.0) for p in pairs]
    r2 = [p.fit_r2 for p in pairs]
    ok = len(pairs) == cfg["eigenpairs"] and max(rel) <= TOLERANCES["decay_rel"] \
        and min(r2) > TOLERANCES["decay_r2"]
    return ok, {"pairs": len(pairs), "max_rel_error": max(rel, default=math.inf),
                "min_r2": min(r2, default=0.0)}


def _synthetic_b(w):
    w = np.atleast_1d(w)
    th = 0.3 * np.cos(2 * np.pi * w) + 0.1 * np.sin(4 * np.pi * w)
    rot = np.empty((w.size, 2, 2))
    rot[:, 0, 0], rot[:, 0, 1] = np.cos(2 * np.pi * th), -np.sin(2 * np.pi * th)
    rot[:, 1, 0], rot[:, 1, 1] = np.sin(2 * np.pi * th), np.cos(2 * np.pi * th)
    up = np.zeros((w.size, 2, 2))
    s = 0.2 * np.sin(2 * np.pi * w)
    up[:, 0, 0], up[:, 0, 1], up[:, 1, 1] = np.exp(s), 0.4 * np.cos(2 * np.pi * w), np.exp(-s)
    return rot @ up


def check_duality_pipeline(cfg, seed):
    rng = sub_rng(seed, "duality")
    K = 40
    k = np.arange(-K, K + 1)
    c = np.exp(-0.8 * np.abs(k)) * (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size))
    ct = FourierSeries((c + np.conj(c[::-1])) / 2, -K)
    coh = cohomological_solve(ct, GOLDEN)
    recovered = []
    for c_true in (0.7, 0.0):
        C = np.array([[1.0, c_true], [0.0, 1.0]])

        def A(w, C=C):
            w = np.asarray(w)
            return _synthetic_b(w + GOLDEN) @ C @ np.linalg.inv(_synthetic_b(w))

        v1, _ = fourier_fit(lambda x: _synthetic_b(x)[:, 0, 0])
        v2, _ = fourier_fit(lambda x: _synthetic_b(x)[:, 1, 0])
        res = reducibility_conjugate((v1.real_part(), v2.real_part()), A, GOLDEN)
        recovered.append(abs(res.c - c_true))
    r = FiniteRestriction.from_params(Parameters(3.0, GOLDEN, 0.0), -300, 300)
    pairs = sorted(eigenpairs(r, (-8.0, 8.0), fit=False), key=lambda p: abs(p.center))[:3]
    dual_rel = max(d.residual / d.max_abs for d in
                   (dual_solution(p.vector, 0.2, 0.0, GOLDEN, 3.0, p.energy) for p in pairs))
    centred = pairs[0]
    conj = reducibility_conjugate(bloch_pair(centred.vector, GOLDEN), dual_cocycle(3.0, centred.energy),
                                  GOLDEN)
    ok = (coh.residual < TOLERANCES["cohomological"] and max(recovered) < TOLERANCES["recover_c"]
          and dual_rel < TOLERANCES["dual_residual_rel"] and abs(conj.c) > 1e-4)
    return ok, {"cohomological_residual": coh.residual, "max_c_error": max(recovered),
                "dual_residual_rel": dual_rel, "eigenpair_c": conj.c,
                "eigenpair_conjugation_residual": conj.residual}


def check_butterfly(cfg, seed):
    rows = butterfly_dataset(1.0, cfg["butterfly_q"])
    by_pq: dict[tuple[int, int], list] = {}
    for row in rows:
        by_pq.setdefault((row.p, row.q), []).append((row.left, row.right))
    worst_e = worst_p = 0.0
    for (p, q), iv in by_pq.items():
        iv = np.array(iv)
        mirror = np.sort(-iv[:, ::-1], axis=0)
        worst_e = max(worst_e, float(np.max(np.abs(mirror - iv))))
        worst_p = max(worst_p, float(np.max(np.abs(np.array(by_pq[(q - p, q)]) - iv))))
    meas = [measure(band_set(1.0, p, q)) for p, q in FIBONACCI if 13 <= q <= 89]
    decreasing = all(b < a for a, b in zip(meas, meas[1:]))
    ok = worst_e < TOLERANCES["symmetry"] and worst_p < TOLERANCES["symmetry"] and decreasing
    return ok, {"rows": len(rows), "energy_symmetry": worst_e, "frequency_symmetry": worst_p,
                "fibonacci_measures": meas, "decreasing": decreasing}


def check_oracle(cfg, seed):
    worst = 0.0
    for lam in (0.5, 1.0, 2.0):
        for q in range(1, cfg["oracle_q"] + 1):
            for p in range(q):
                if math.gcd(p, q) == 1:
                    worst = max(worst, hausdorff_distance(band_set(lam, p, q),
                                                          brute_force_band_set(lam, p, q)))
    return worst < TOLERANCES["oracle_hausdorff"], {"max_hausdorff": worst}


CHECKS = [
    ("determinant_identity", "hard", check_determinant_identity),
    ("green_boundary_identity", "hard", check_green_boundary),
    ("gordon_inequality", "hard", check_gordon),
    ("gap_count_and_length", "hard", check_gaps),
    ("spectral_continuity", "hard", check_continuity),
    ("duality_scaling", "hard", check_duality_scale),
    ("periodic_oracle", "hard", check_oracle),
    ("butterfly_symmetry", "hard", check_butterfly),
    ("duality_pipeline", "hard", check_duality_pipeline),
    ("herman_bound", "statistical", check_herman),
    ("lyapunov_on_spectrum", "statistical", check_spectrum_lyapunov),
    ("localization_decay", "statistical", check_localization),
]


def verify_all(profile: str = "quick", seed: int = 0, mutate: str | None = None,
               only: list[str] | None = None) -> dict:
    """Run the verification checks; returns a JSON-ready report."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    cfg = PROFILES[profile]
    results = []
    t_start = time.perf_counter()
    with mutation(mutate):
        for name, kind, fn in CHECKS:
            if only and name not in only:
                continue
            t0 = time.perf_counter()
            try:
                ok, detail = fn(cfg, seed)
            except Exception as exc:  # an exception inside a check counts as its failure
                ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
            results.append(CheckResult(name, kind, bool(ok), time.perf_counter() - t0, detail))
    hard = [r.name for r in results if r.kind == "hard" and not r.passed]
    stat = [r.name for r in results if r.kind == "statistical" and not r.passed]
    return {"profile": profile, "seed": seed, "version": __version__, "mutation": mutate,
            "passed": not hard, "hard_failures": hard, "statistical_misses": stat,
            "wall_time": round(time.perf_counter() - t_start, 3),
            "tolerances": TOLERANCES, "checks": [r.to_json() for r in results]}
