"""Continued fractions and finite-range arithmetic certificates for frequencies.

Frequencies are accepted as ``Fraction`` (exact), ``float``, ``mpmath.mpf`` or
a string expression such as ``"(sqrt(5)-1)/2"`` evaluated at
:data:`WORKING_DPS` digits.  Every real carries an absolute uncertainty that
decides when an expansion is exhausted and when a comparison is
indeterminate.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .core import frac_mul

WORKING_DPS = 50

_RATIO = re.compile(r"^\s*(\d+)\s*/\s*(\d+)\s*$")
_EXPR_NAMES = {name: getattr(mpmath, name) for name in
               ("sqrt", "pi", "e", "exp", "log", "sin", "cos", "phi", "cbrt", "mpf")}


def _ctx():
    return mpmath.workdps(WORKING_DPS)


def as_real(alpha) -> tuple[Fraction | mpmath.mpf, float]:
    """Normalise a frequency to ``(value, absolute_uncertainty)``."""
    if isinstance(alpha, (Fraction, int)) and not isinstance(alpha, bool):
        return Fraction(alpha), 0.0
    if isinstance(alpha, str):
        m = _RATIO.match(alpha)
        if m:
            return Fraction(int(m.group(1)), int(m.group(2))), 0.0
        with _ctx():
            try:
                val = eval(alpha, {"__builtins__": {}}, dict(_EXPR_NAMES))  # noqa: S307
            except Exception as exc:  # pragma: no cover - message only
                raise ValueError(f"cannot evaluate frequency expression {alpha!r}") from exc
            val = mpmath.mpf(val)
        if not mpmath.isfinite(val):
            raise ValueError("frequency must be finite")
        return val, 10.0 ** (-(WORKING_DPS - 5)) * max(1.0, abs(float(val)))
    if isinstance(alpha, mpmath.mpf):
        if not mpmath.isfinite(alpha):
            raise ValueError("frequency must be finite")
        return alpha, 10.0 ** (-(mpmath.mp.dps - 2)) * max(1.0, abs(float(alpha)))
    x = float(alpha)
    if not math.isfinite(x):
        raise ValueError("frequency must be finite")
    with _ctx():
        return mpmath.mpf(x), 2.0 ** -52 * max(abs(x), 2.0 ** -1022)


def _mpf(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def liouville_number(base: int = 2, depth: int = 4) -> Fraction:
    """Truncated sum  sum_{k=1..depth} base^(-k!)  as an exact fraction."""
    return sum((Fraction(1, base ** math.factorial(k)) for k in range(1, depth + 1)),
               Fraction(0))


def from_partial_quotients(quotients, a0: int = 0) -> Fraction:
    """The rational [a0; a1, a2, ...] built exactly."""
    x = Fraction(0)
    for a in reversed(list(quotients)):
        x = 1 / (a + x)
    return a0 + x


@dataclass(frozen=True)
class ContinuedFraction:
    alpha: Fraction | mpmath.mpf
    uncertainty: float
    a0: int
    partial_quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    terminated: bool = False   # alpha is (within precision) the last convergent
    exhausted: bool = False    # precision ran out before the requested depth

    def error(self, k: int):
        """|alpha - p_k/q_k| for 1-based ``k`` (exact for Fraction input)."""
        p, q = self.convergents[k - 1]
        if isinstance(self.alpha, Fraction):
            return abs(self.alpha - Fraction(p, q))
        with _ctx():
            return abs(self.alpha - mpmath.mpf(p) / q)

    def fractions(self) -> list[Fraction]:
        return [Fraction(p, q) for p, q in self.convergents]


def expand_continued_fraction(alpha, depth: int) -> ContinuedFraction:
    """Partial quotients a_1..a_depth and convergents p_k/q_k of alpha in (0, 1)."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    val, unc = as_real(alpha)
    exact = isinstance(val, Fraction)
    if not (0 < val < 1):
        raise ValueError("alpha must lie in (0, 1)")
    quotients, convs = [], []
    p_prev, q_prev = 1, 0
    p, q = 0, 1  # a0 = 0
    terminated = exhausted = False
    with _ctx():
        x = val if exact else mpmath.mpf(val)
        frac = x  # x - a0
        for _ in range(depth):
            if frac == 0:
                terminated = True
                break
            if not exact:
                if q * q * unc > 1e-2:
                    exhausted = True
                    break
                if q > 1 and abs(x - mpmath.mpf(p) / q) <= unc:
                    terminated = True
                    break
            inv = 1 / frac
            a = int(math.floor(inv)) if exact else int(mpmath.floor(inv))
            frac = inv - a
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            quotients.append(a)
            convs.append((p, q))
        if not exact and not terminated and not exhausted and convs:
            # flag a rational whose last quotient was just consumed
            if abs(x - mpmath.mpf(p) / q) <= unc:
                terminated = True
        if exact and not terminated and frac == 0:
            terminated = True
    if terminated and len(quotients) > 1 and quotients[-1] == 1:
        # canonical form: [..., a, 1] == [..., a + 1]
        quotients[-2] += 1
        quotients.pop()
        convs.pop()
        convs[-1] = (p, q)
    return ContinuedFraction(val, unc, 0, tuple(quotients), tuple(convs), terminated, exhausted)


@dataclass
class FrequencyClass:
    """Outcome of a finite-range arithmetic scan.

    ``kind`` is one of ``rational``, ``diophantine_certified``,
    ``liouville_certified`` or ``unverified``; certificates hold only up to
    the scanned bound recorded in ``bounds``.
    """
    kind: str
    bounds: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)
    failing_n: int | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "bounds": self.bounds, "witness": self.witness}
        if self.failing_n is not None:
            out["failing_n"] = self.failing_n
        return out


def diophantine_scan(alpha, c: float, r: float, N: int) -> FrequencyClass:
    """Check |sin(2 pi n alpha)| > c / |n|^r for 0 < |n| <= N.

    The condition is even in n, so only n = 1..N are scanned.  Returns the
    smallest failing n, or a certificate valid up to N.
    """
    if c <= 0 or r <= 1 or N < 1:
        raise ValueError("need c > 0, r > 1, N >= 1")
    val, unc = as_real(alpha)
    bounds = {"c": c, "r": r, "N": N}
    if isinstance(val, Fraction) and val.denominator <= N:
        q = val.denominator
        return FrequencyClass("rational", bounds, {"p": val.numerator, "q": q}, failing_n=q)
    a = float(val)
    n = np.arange(1, N + 1, dtype=np.float64)
    s = np.abs(np.sin(2 * np.pi * frac_mul(n, a)))
    bound = c / n ** r
    # margin of a few ulps of n*alpha; ties go to the exact recheck
    slack = 8 * np.pi * n * max(unc, 2.0 ** -52)
    bad = np.nonzero(s <= bound + slack)[0]
    for i in bad:
        k = int(i) + 1
        with _ctx():
            x = _mpf(val) * k
            sv = abs(mpmath.sin(2 * mpmath.pi * (x - mpmath.floor(x))))
        bk = c / k ** r
        if sv <= bk:
            return FrequencyClass("unverified", bounds,
                                  {"n": k, "abs_sin": float(sv), "bound": bk}, failing_n=k)
    i = int(np.argmin(s * n ** r))
    return FrequencyClass("diophantine_certified", bounds,
                          {"min_n": i + 1, "min_scaled_sin": float(s[i] * n[i] ** r)})


def liouville_witness(alpha, cf: ContinuedFraction, k_max: int) -> FrequencyClass:
    """Test |alpha - p_k/q_k| < k^(-q_k) for the convergents k = 1..k_max.

    Each k is recorded as ``pass``, ``fail`` or ``indeterminate`` (the
    difference is within the input's uncertainty of the threshold, or a
    float-precision threshold underflows).  Liouville is certified up to
    k_max when the passes persist: some k >= 2 in the upper half of the
    scanned range passes with alpha != p_k/q_k.  An isolated early pass
    (the golden mean passes at k = 2) does not certify.
    """
    val, unc = as_real(alpha)
    float_input = isinstance(alpha, float)
    results = []
    passing = []
    kk = min(k_max, len(cf.convergents))
    with _ctx():
        for k in range(1, kk + 1):
            p, q = cf.convergents[k - 1]
            if isinstance(val, Fraction):
                d = abs(val - Fraction(p, q))
                dm = _mpf(d)
            else:
                dm = abs(_mpf(val) - mpmath.mpf(p) / q)
            # compare in log space: k^(-q) is out of reach for huge q
            log_thr = -mpmath.mpf(q) * mpmath.log(k) if k > 1 else mpmath.mpf(0)
            log_hi = mpmath.log(dm + unc) if dm + unc > 0 else mpmath.ninf
            log_lo = mpmath.log(dm - unc) if dm - unc > 0 else mpmath.ninf
            tie = mpmath.mpf(10) ** (-(WORKING_DPS - 10)) * max(1, abs(log_thr))
            if float_input and k > 1 and q * math.log(k) > 708.0:
                status = "indeterminate"
            elif log_lo >= log_thr + tie:
                status = "fail"
            elif log_hi < log_thr - tie:
                status = "pass"
            else:
                status = "indeterminate"
            results.append({"k": k, "q": q, "status": status,
                            "log10_diff": float(mpmath.log10(dm)) if dm > 0 else None,
                            "log10_threshold": float(log_thr / mpmath.log(10))})
            if status == "pass" and k >= 2 and dm > 0:
                passing.append(k)
    bounds = {"k_max": k_max, "k_range": [1, kk]}
    witness = {"per_k": results, "passing_k": passing}
    if any(2 * k > kk for k in passing):
        return FrequencyClass("liouville_certified", bounds, witness)
    if cf.terminated:
        return FrequencyClass("rational", bounds, witness)
    return FrequencyClass("unverified", bounds, witness)


@dataclass
class ResonanceReport:
    violations: list[int]
    tail_violations: list[int]
    verdict: str
    N: int
    r: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def resonance_scan(omega: float, alpha, r: float, N: int, tail_fraction: float = 0.25,
                   max_tail: int = 3, certificate: FrequencyClass | None = None) -> ResonanceReport:
    """List 0 < |n| <= N with |sin(2 pi (omega + n alpha / 2))| < exp(-|n|^(1/(2r))).

    Small |n| violate routinely (the threshold is close to 1 there), so the
    verdict only looks at |n| > tail_fraction * N: ``non_resonant_up_to_N``
    when at most ``max_tail`` violations fall in that tail.  This cutoff is
    a heuristic; the list itself is the data.
    """
    if r <= 1 or N < 1:
        raise ValueError("need r > 1 and N >= 1")
    if certificate is not None and (certificate.kind != "diophantine_certified"
                                    or certificate.bounds.get("r") != r):
        raise ValueError("alpha must carry a Diophantine certificate with the same exponent r")
    a = float(as_real(alpha)[0])
    n = np.concatenate([-np.arange(N, 0, -1), np.arange(1, N + 1)]).astype(np.float64)
    phase = np.mod(omega + frac_mul(n, a / 2.0), 1.0)
    s = np.abs(np.sin(2 * np.pi * phase))
    hits = n[s < np.exp(-np.abs(n) ** (1.0 / (2 * r)))].astype(int)
    hits = sorted(hits.tolist(), key=lambda k: (abs(k), k))
    tail = [k for k in hits if abs(k) > tail_fraction * N]
    verdict = "non_resonant_up_to_N" if len(tail) <= max_tail else "resonant_suspected"
    return ResonanceReport(hits, tail, verdict, N, r)
