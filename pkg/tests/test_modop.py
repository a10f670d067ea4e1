from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modisperse.modop import (
    ModulatedOperator,
    PhaseIntegralCache,
    operator_norm_probe,
    resolve_threads,
    x_apply,
    x_kdv,
    x_mkdv,
    x_truncated,
)
from modisperse.modpath import brownian, constant, phi_many
from modisperse.oracle import quadrature_x
from modisperse.spectral import inner, project, random_field, single_mode, sobolev_norm

TWO_PI = 2 * np.pi


def test_kdv_single_mode_constant_path():
    op = ModulatedOperator("kdv", constant(0.0, n=4), 4)
    f = single_mode(1.0, 4, 1)
    out = x_kdv(op, 0.25, 0.75, f, f)
    expected = np.zeros(9, complex)
    expected[4 + 2] = 1j * TWO_PI * 2 * 0.5
    assert np.allclose(out.coeffs, expected, atol=1e-15)


def test_kdv_zero_mode_excluded():
    op = ModulatedOperator("kdv", constant(0.0, n=4), 4)
    out = x_kdv(op, 0.0, 1.0, single_mode(1.0, 4, 1), single_mode(1.0, 4, -1))
    assert np.all(out.coeffs == 0)


def test_mkdv_single_mode_constant_path():
    op = ModulatedOperator("mkdv", constant(0.0, n=4), 4)
    f = single_mode(1.0, 4, 1)
    out = x_mkdv(op, 0.0, 0.5, f, f, f)
    expected = np.zeros(9, complex)
    expected[4 + 3] = 1j * TWO_PI * 3 * 0.5
    assert np.allclose(out.coeffs, expected, atol=1e-15)


def test_mkdv_star_exclusion():
    op = ModulatedOperator("mkdv", constant(0.0, n=4), 4)
    a, b = single_mode(1.0, 4, 2), single_mode(1.0, 4, -2)
    assert np.all(x_mkdv(op, 0.0, 1.0, a, b, single_mode(1.0, 4, 1)).coeffs == 0)


def test_equal_times_give_zero(unit_brownian):
    op = ModulatedOperator("kdv", unit_brownian, 6)
    f = random_field(1.0, 6, seed=0)
    assert np.all(x_kdv(op, 0.3, 0.3, f, f).coeffs == 0)


def test_mismatched_torus_rejected(unit_brownian):
    op = ModulatedOperator("kdv", unit_brownian, 6)
    with pytest.raises(ValueError):
        x_kdv(op, 0.0, 0.5, random_field(1.0, 5), random_field(1.0, 5))
    with pytest.raises(ValueError):
        ModulatedOperator("nls", unit_brownian, 4)


@pytest.mark.parametrize("equation,K", [("kdv", 8), ("mkdv", 6)])
def test_matches_quadrature_oracle(short_brownian, equation, K):
    op = ModulatedOperator(equation, short_brownian, K)
    fields = [random_field(1.0, K, seed=20 + i) for i in range(op.arity)]
    s, t = 0.1 * short_brownian.horizon, 0.8 * short_brownian.horizon
    got = x_apply(op, s, t, fields, truncate=False)
    ref = quadrature_x(equation, short_brownian, s, t, fields)
    assert sobolev_norm(got - ref) <= 1e-5 * sobolev_norm(ref)


def test_full_band_size(unit_brownian):
    op = ModulatedOperator("mkdv", unit_brownian, 4, truncate=False)
    f = random_field(1.0, 4)
    assert x_mkdv(op, 0, 0.5, f, f, f).K == 12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_exact_invariants(seed, u, v, w):
    path = brownian(256, seed=seed % 17)
    s, m, t = sorted([u, v, w])
    kdv = ModulatedOperator("kdv", path, 6)
    f, g, h = (random_field(1.0, 6, seed=seed + i) for i in range(3))
    # symmetry, bit for bit
    assert np.array_equal(x_kdv(kdv, s, t, f, g).coeffs, x_kdv(kdv, s, t, g, f).coeffs)
    # energy orthogonality
    out = x_kdv(kdv, s, t, f, f)
    assert abs(inner(f, out)) <= 1e-12 * sobolev_norm(f) * sobolev_norm(out) + 1e-300
    # reality
    assert out.hermitian_defect() <= 1e-12
    # additivity
    split = x_kdv(kdv, s, m, f, g) + x_kdv(kdv, m, t, f, g)
    whole = x_kdv(kdv, s, t, f, g)
    assert np.allclose(split.coeffs, whole.coeffs, rtol=0, atol=1e-12 * max(np.abs(whole.coeffs).max(), 1e-300))
    mk = ModulatedOperator("mkdv", path, 4)
    a, b, c = (x.resized(4) for x in (f, g, h))
    base = x_mkdv(mk, s, t, a, b, c).coeffs
    for perm in [(b, a, c), (c, b, a), (a, c, b), (b, c, a), (c, a, b)]:
        assert np.array_equal(base, x_mkdv(mk, s, t, *perm).coeffs)


def test_cache_cold_and_warm_bit_identical(unit_brownian):
    op = ModulatedOperator("kdv", unit_brownian, 10)
    f = random_field(1.0, 10, seed=5)
    first = x_kdv(op, 0.125, 0.5, f, f).coeffs
    assert op.cache.misses > 0
    again = x_kdv(op, 0.125, 0.5, f, f).coeffs
    assert op.cache.hits > 0
    op.cache.clear()
    cold = x_kdv(op, 0.125, 0.5, f, f).coeffs
    assert np.array_equal(first, again) and np.array_equal(first, cold)


def test_cache_matches_direct_phi_and_conjugates(unit_brownian):
    cache = PhaseIntegralCache(unit_brownian, 3.0)
    keys = np.array([5, -5, 0, 17, -3])
    vals = cache.lookup(0.1, 0.6, keys)
    direct = phi_many(unit_brownian, 0.1, 0.6, 3.0 * np.abs(keys))
    assert np.array_equal(vals[[0, 2, 3]], direct[[0, 2, 3]])
    assert vals[1] == np.conj(vals[0])


def test_threads_do_not_change_results(unit_brownian):
    f = random_field(1.0, 12, seed=2)
    one = ModulatedOperator("kdv", unit_brownian, 12, threads=1)
    many = ModulatedOperator("kdv", unit_brownian, 12, threads=4)
    many.cache.chunk = 32
    assert np.array_equal(x_kdv(one, 0.0, 0.5, f, f).coeffs, x_kdv(many, 0.0, 0.5, f, f).coeffs)


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("MODISPERSE_THREADS", "3")
    assert resolve_threads(0) == 3 and resolve_threads(None) == 3 and resolve_threads(2) == 2


def test_truncated_definition(unit_brownian):
    op = ModulatedOperator("kdv", unit_brownian, 12)
    f = random_field(1.0, 12, seed=9)
    L = 5
    direct = project(x_kdv(op, 0.0, 0.5, project(f, L), project(f, L)), L)
    assert np.allclose(x_truncated(op, L, 0.0, 0.5, (f, f)).coeffs, direct.coeffs, atol=1e-14)
    assert np.all(x_truncated(op, 0, 0.0, 0.5, (f, f)).coeffs == 0)
    assert np.array_equal(x_truncated(op, 12, 0.0, 0.5, (f, f)).coeffs, x_kdv(op, 0.0, 0.5, f, f).coeffs)
    with pytest.raises(ValueError):
        x_truncated(op, 13, 0.0, 0.5, (f, f))


def test_truncation_gap_decreases(unit_brownian):
    op = ModulatedOperator("kdv", unit_brownian, 32)
    f = random_field(1.0, 32, seed=1)
    pairs = [(0.0, 1.0), (0.0, 0.5), (0.5, 1.0)]
    gaps = []
    for L in (4, 8, 16, 32):
        gaps.append(max(sobolev_norm(x_kdv(op, s, t, f, f) - x_truncated(op, L, s, t, (f, f))) / (t - s) ** 0.55
                        for s, t in pairs))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_constant_path_probe_grows_with_K():
    path = constant(0.0, n=8)
    ratios = []
    for K in (8, 16, 32):
        res = operator_norm_probe(ModulatedOperator("kdv", path, K), 0.0, [1.0], 2, [(0.0, 1.0)])
        ratios.append(res["summary"][1.0]["max"])
    assert ratios[0] < ratios[1] < ratios[2]
