import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from almost_mathieu.core import FiniteRestriction, Parameters, potential
from almost_mathieu.duality import (PreconditionError, SmallDivisorError, bloch_pair, cohomological_solve,
                                    dual_cocycle, dual_solution, dual_transform, gap_edge_probe,
                                    reducibility_conjugate)
from almost_mathieu.fourier import FourierSeries, fourier_fit
from almost_mathieu.localization import eigenpairs

from conftest import GOLDEN


@pytest.fixture(scope="module")
def localized_pairs():
    r = FiniteRestriction.from_params(Parameters(3.0, GOLDEN, 0.0), -300, 300)
    return sorted(eigenpairs(r, (-8.0, 8.0), fit=False), key=lambda p: abs(p.center))


def test_dual_solution_of_eigenpairs(localized_pairs):
    for p in localized_pairs[:5]:
        d = dual_solution(p.vector, 0.2, 0.0, GOLDEN, 3.0, p.energy)
        assert d.residual < 1e-6 * d.max_abs
        assert d.coupling == pytest.approx(1 / 3) and d.energy == pytest.approx(p.energy / 3)


@given(st.floats(0.5, 4), st.floats(0, 1), st.floats(0, 1), st.floats(-5, 5))
@settings(max_examples=20)
def test_delta_residual_closed_form(lam, wt, w, e):
    u = np.zeros(5)
    u[2] = 1.0
    d = dual_solution(u, wt, w, GOLDEN, lam, e, window=20)
    n = np.arange(-20, 21)
    oracle = np.abs(2 * np.cos(2 * np.pi * w) + (2 / lam) * np.cos(2 * np.pi * (wt + n * GOLDEN)) - e / lam)
    assert np.allclose(np.abs(d.values), 1.0)
    assert d.residual == pytest.approx(oracle.max(), rel=1e-9, abs=1e-12)


def test_linearity(localized_pairs):
    p = localized_pairs[1]
    base = dual_solution(p.vector, 0.3, 0.1, GOLDEN, 3.0, p.energy + 0.01)
    scaled = dual_solution(-2.5 * p.vector, 0.3, 0.1, GOLDEN, 3.0, p.energy + 0.01)
    assert scaled.residual == pytest.approx(2.5 * base.residual, rel=1e-9)


def test_precondition_on_tail():
    with pytest.raises(PreconditionError):
        dual_solution(np.ones(11), 0.0, 0.0, GOLDEN, 3.0, 0.0)
    with pytest.raises(ValueError):
        dual_transform(np.ones(4), 2)


def test_residual_linear_in_truncated_tail(localized_pairs):
    pair = localized_pairs[0]
    assert pair.center == 0
    u, c = pair.vector, pair.vector.size // 2
    lam, e, wt = 3.0, pair.energy, 0.2
    prev = math.inf
    for M in (15, 17, 19):
        v = u[c - M:c + M + 1]
        d = dual_solution(v, wt, 0.0, GOLDEN, lam, e)
        # defect of the truncated vector in the original equation, on [-M-1, M+1]
        m = np.arange(-M - 1, M + 2)
        ext = np.concatenate([[0.0, 0.0], v, [0.0, 0.0]])
        defect = ext[2:] + ext[:-2] + (potential(Parameters(lam, GOLDEN), m) - e) * ext[1:-1]
        theta = wt + d.n * GOLDEN
        oracle = np.abs(np.exp(2j * np.pi * np.multiply.outer(theta, m)) @ defect).max() / lam
        assert d.residual == pytest.approx(oracle, rel=1e-6, abs=1e-13)
        # the defect is exactly the discarded boundary data of u, so the residual is linear in it
        assert np.allclose(defect[[0, 1, -2, -1]], [u[c - M], -u[c - M - 1], -u[c + M + 1], u[c + M]],
                           rtol=1e-6, atol=1e-13)
        assert d.residual <= np.sum(np.abs(defect)) / lam + 1e-15
        assert d.residual < prev
        prev = d.residual


def test_cohomological_single_harmonic():
    ct = FourierSeries(np.array([0.5, 0.0, 0.5]), -1)
    sol = cohomological_solve(ct, GOLDEN)
    assert sol.c == 0.0
    assert sol.b.coefficient(1) == pytest.approx(0.5 / (np.exp(2j * np.pi * GOLDEN) - 1))
    assert sol.b.coefficient(-1) == pytest.approx(0.5 / (np.exp(-2j * np.pi * GOLDEN) - 1))
    assert sol.residual < 1e-10


def test_cohomological_constant():
    sol = cohomological_solve(FourierSeries(np.array([1.75]), 0), GOLDEN)
    assert sol.c == 1.75 and np.all(sol.b.coefficients == 0) and sol.residual == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(0.3, 1.5))
@settings(max_examples=20)
def test_cohomological_random_decaying(seed, rate):
    rng = np.random.default_rng(seed)
    K = 40
    k = np.arange(-K, K + 1)
    c = np.exp(-rate * np.abs(k)) * (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size))
    ct = FourierSeries((c + np.conj(c[::-1])) / 2, -K)
    sol = cohomological_solve(ct, GOLDEN)
    assert sol.residual < 1e-9 * (1 + np.abs(ct.coefficients).max() * (2 * K + 1))
    assert sol.c == pytest.approx(ct.coefficient(0).real)


def test_cohomological_decay_rate_loss():
    K = 40
    k = np.arange(-K, K + 1)
    ct = FourierSeries(np.exp(-0.8 * np.abs(k)), -K)
    sol = cohomological_solve(ct, GOLDEN)
    rb, rc = sol.b.decay_rate(), ct.decay_rate()
    assert 0 < rb < rc


def test_small_divisor_and_reality():
    with pytest.raises(SmallDivisorError) as exc:
        cohomological_solve(FourierSeries(np.array([1.0, 0.0, 1.0]), -1), 0.0)
    assert abs(exc.value.k) == 1
    with pytest.raises(PreconditionError):
        cohomological_solve(FourierSeries(np.array([1j]), 0), GOLDEN)


def _synthetic_b(w):
    w = np.atleast_1d(w)
    th = 0.25 * np.sin(2 * np.pi * w)
    rot = np.empty((w.size, 2, 2))
    rot[:, 0, 0], rot[:, 0, 1] = np.cos(2 * np.pi * th), -np.sin(2 * np.pi * th)
    rot[:, 1, 0], rot[:, 1, 1] = np.sin(2 * np.pi * th), np.cos(2 * np.pi * th)
    up = np.zeros((w.size, 2, 2))
    s = 0.3 * np.cos(2 * np.pi * w)
    up[:, 0, 0], up[:, 0, 1], up[:, 1, 1] = np.exp(s), 0.2 * np.sin(2 * np.pi * w), np.exp(-s)
    return rot @ up


@pytest.mark.parametrize("c_true", [0.7, -1.3, 0.0])
def test_reducibility_round_trip(c_true):
    C = np.array([[1.0, c_true], [0.0, 1.0]])

    def A(w):
        return _synthetic_b(np.asarray(w) + GOLDEN) @ C @ np.linalg.inv(_synthetic_b(w))

    v1, _ = fourier_fit(lambda x: _synthetic_b(x)[:, 0, 0])
    v2, _ = fourier_fit(lambda x: _synthetic_b(x)[:, 1, 0])
    res = reducibility_conjugate((v1.real_part(), v2.real_part()), A, GOLDEN)
    assert abs(res.c - c_true) < 1e-8
    assert res.residual < 1e-7 and res.det_error < 1e-8 and res.truncation_converged
    Bw = res.matrix(np.linspace(0, 1, 11))
    assert np.allclose(np.linalg.det(Bw), 1.0, atol=1e-8)


def test_reducibility_preconditions():
    zero = FourierSeries(np.zeros(3), -1)
    with pytest.raises(PreconditionError):
        reducibility_conjugate((zero, zero), dual_cocycle(3.0, 0.0), GOLDEN)
    one = FourierSeries(np.array([1.0]), 0)
    with pytest.raises(PreconditionError):
        reducibility_conjugate((one, zero), dual_cocycle(3.0, 0.0), GOLDEN)


def test_end_to_end_c_nonzero(localized_pairs):
    p = localized_pairs[0]
    v = bloch_pair(p.vector, GOLDEN)
    res = reducibility_conjugate(v, dual_cocycle(3.0, p.energy), GOLDEN)
    assert abs(res.c) > 1e-4
    assert res.residual < 1e-7


def test_bloch_pair_parts(localized_pairs):
    p = localized_pairs[0]
    f, g = bloch_pair(p.vector, GOLDEN, part="real")
    assert g(0.3) == pytest.approx(f(0.3 - GOLDEN))
    with pytest.raises(ValueError):
        bloch_pair(p.vector, GOLDEN, part="both")


def test_gap_edge_probe(localized_pairs):
    for p in localized_pairs[:3]:
        rep = gap_edge_probe(3.0, 55, 89, GOLDEN, p.energy)
        assert rep["dual_energy"] == pytest.approx(p.energy / 3)
        assert rep["within_radius"]
        assert rep["edge_distance"] <= rep["continuity_radius"]
        assert rep["continuity_radius"] == pytest.approx(6 * math.sqrt(2 / 3 * abs(GOLDEN - 55 / 89)))
    rep = gap_edge_probe(3.0, 55, 89, GOLDEN, localized_pairs[0].energy, c=-1.0)
    assert "side_matches_sign_minus_c" in rep
    with pytest.raises(PreconditionError):
        gap_edge_probe(1.0, 55, 89, GOLDEN, 0.0)
